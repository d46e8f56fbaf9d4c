#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malab/common.hpp"

namespace malab {

// Arithmetic expressions in the variables x, y with +, -, *, /, ^ and the
// functions min, max, abs, exp, ln, sqrt; constants pi and e.
// Parsed once into a stack program, evaluated without allocation.
class Expr {
  public:
    Expr() = default;
    // Throws parse_error with the offending position in the message.
    static Expr parse(const std::string& src);

    double operator()(double x, double y) const;
    const std::string& source() const { return src_; }
    bool empty() const { return code_.empty(); }

  private:
    enum class Op : std::uint8_t {
        push_const, push_x, push_y,
        add, sub, mul, div, pow, neg,
        fmin, fmax, fabs, fexp, fln, fsqrt,
    };
    struct Instr {
        Op op;
        double val = 0;
    };
    std::vector<Instr> code_;
    std::string src_;

    friend struct ExprParser;
};

} // namespace malab
