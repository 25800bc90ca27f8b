#pragma once

#include <stdexcept>
#include <string>

namespace spinforge {

// Error taxonomy. config_error maps to CLI exit code 2 (usage/schema problems);
// every other error maps to exit code 1 (runtime/analysis failure).
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct contract_violation : error { using error::error; };   // broken precondition
struct singular_input : error { using error::error; };       // input where a formula degenerates
struct perturbative_regime : error { using error::error; };  // outside a formula's validity range
struct truncation_error : error { using error::error; };     // state leaks out of the number basis
struct numerical_failure : error { using error::error; };    // linear-algebra kernel failure
struct insufficient_data : error { using error::error; };    // rank-deficient fit input
struct input_mismatch : error { using error::error; };       // incompatible datasets
struct invalid_calibration : error { using error::error; };  // inconsistent pulse bookkeeping
struct fit_failure : error { using error::error; };          // optimizer failed to converge
struct config_error : error { using error::error; };         // bad configuration/usage (exit 2)

}  // namespace spinforge
