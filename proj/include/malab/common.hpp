#pragma once

#include <stdexcept>
#include <string>

namespace malab {

// Error hierarchy. The CLI maps these to exit codes:
//   parse_error, precondition_error -> 2
//   numeric_error and derived       -> 3
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : error {
    using error::error;
};

struct precondition_error : error {
    using error::error;
};

struct numeric_error : error {
    using error::error;
};

struct degeneracy_error : numeric_error {
    using numeric_error::numeric_error;
};

struct proximity_error : numeric_error {
    using numeric_error::numeric_error;
};

struct containment_error : numeric_error {
    using numeric_error::numeric_error;
};

struct resolution_error : numeric_error {
    using numeric_error::numeric_error;
};

struct divergence_error : numeric_error {
    using numeric_error::numeric_error;
};

// A chain step whose admissibility inequality failed; carries the inequality name.
struct step_rejection : numeric_error {
    step_rejection(int step, const std::string& inequality)
        : numeric_error("step " + std::to_string(step) + " rejected: " + inequality),
          step_index(step),
          failed_inequality(inequality) {}
    int step_index;
    std::string failed_inequality;
};

struct no_admissible_error : numeric_error {
    using numeric_error::numeric_error;
};

} // namespace malab
