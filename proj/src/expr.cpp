#include "malab/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace malab {

struct ExprParser {
    const std::string& src;
    std::size_t pos = 0;
    std::vector<Expr::Instr>& out;

    using Op = Expr::Op;

    void fail(const std::string& what) const {
        throw parse_error("expression error at position " + std::to_string(pos) + ": " + what +
                          " in \"" + src + "\"");
    }

    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }

    void emit(Op op, double v = 0) { out.push_back({op, v}); }

    void parse_expr() {
        parse_term();
        while (true) {
            if (eat('+')) {
                parse_term();
                emit(Op::add);
            } else if (eat('-')) {
                parse_term();
                emit(Op::sub);
            } else {
                break;
            }
        }
    }

    void parse_term() {
        parse_factor();
        while (true) {
            if (eat('*')) {
                parse_factor();
                emit(Op::mul);
            } else if (eat('/')) {
                parse_factor();
                emit(Op::div);
            } else {
                break;
            }
        }
    }

    // '^' binds tighter than unary minus and associates to the right.
    void parse_factor() {
        bool negate = false;
        while (true) {
            if (eat('-')) negate = !negate;
            else if (eat('+')) continue;
            else break;
        }
        parse_power();
        if (negate) emit(Op::neg);
    }

    void parse_power() {
        parse_primary();
        if (eat('^')) {
            parse_power();
            emit(Op::pow);
        }
    }

    void parse_primary() {
        skip_ws();
        if (pos >= src.size()) fail("unexpected end of input");
        char c = src[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = src.c_str() + pos;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos += static_cast<std::size_t>(end - begin);
            emit(Op::push_const, v);
            return;
        }
        if (c == '(') {
            ++pos;
            parse_expr();
            if (!eat(')')) fail("missing ')'");
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos;
            while (pos < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
                ++pos;
            std::string name = src.substr(start, pos - start);
            if (name == "x") { emit(Op::push_x); return; }
            if (name == "y") { emit(Op::push_y); return; }
            if (name == "pi") { emit(Op::push_const, std::acos(-1.0)); return; }
            if (name == "e") { emit(Op::push_const, std::exp(1.0)); return; }

            if (!eat('(')) fail("unknown identifier '" + name + "'");
            int args = 1;
            parse_expr();
            while (eat(',')) {
                parse_expr();
                ++args;
            }
            if (!eat(')')) fail("missing ')' after arguments of '" + name + "'");

            auto unary = [&](Op op) {
                if (args != 1) fail("'" + name + "' takes one argument");
                emit(op);
            };
            auto binary = [&](Op op) {
                if (args != 2) fail("'" + name + "' takes two arguments");
                emit(op);
            };
            if (name == "min") binary(Op::fmin);
            else if (name == "max") binary(Op::fmax);
            else if (name == "abs") unary(Op::fabs);
            else if (name == "exp") unary(Op::fexp);
            else if (name == "ln") unary(Op::fln);
            else if (name == "sqrt") unary(Op::fsqrt);
            else fail("unknown function '" + name + "'");
            return;
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

Expr Expr::parse(const std::string& src) {
    Expr e;
    e.src_ = src;
    ExprParser p{src, 0, e.code_};
    p.parse_expr();
    p.skip_ws();
    if (p.pos != src.size()) p.fail("trailing input");
    int depth = 0, peak = 0;
    for (const Instr& in : e.code_) {
        switch (in.op) {
            case Op::push_const:
            case Op::push_x:
            case Op::push_y: ++depth; break;
            case Op::neg:
            case Op::fabs:
            case Op::fexp:
            case Op::fln:
            case Op::fsqrt: break;
            default: --depth; break;
        }
        peak = std::max(peak, depth);
    }
    if (peak >= 64) throw parse_error("expression too deep: " + src);
    return e;
}

double Expr::operator()(double x, double y) const {
    double stack[64];
    int sp = 0;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::push_const: stack[sp++] = in.val; break;
            case Op::push_x: stack[sp++] = x; break;
            case Op::push_y: stack[sp++] = y; break;
            case Op::add: --sp; stack[sp - 1] += stack[sp]; break;
            case Op::sub: --sp; stack[sp - 1] -= stack[sp]; break;
            case Op::mul: --sp; stack[sp - 1] *= stack[sp]; break;
            case Op::div: --sp; stack[sp - 1] /= stack[sp]; break;
            case Op::pow: --sp; stack[sp - 1] = std::pow(stack[sp - 1], stack[sp]); break;
            case Op::neg: stack[sp - 1] = -stack[sp - 1]; break;
            case Op::fmin: --sp; stack[sp - 1] = std::fmin(stack[sp - 1], stack[sp]); break;
            case Op::fmax: --sp; stack[sp - 1] = std::fmax(stack[sp - 1], stack[sp]); break;
            case Op::fabs: stack[sp - 1] = std::fabs(stack[sp - 1]); break;
            case Op::fexp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
            case Op::fln: stack[sp - 1] = std::log(stack[sp - 1]); break;
            case Op::fsqrt: stack[sp - 1] = std::sqrt(stack[sp - 1]); break;
        }
    }
    return sp == 1 ? stack[0] : 0.0;
}

} // namespace malab
