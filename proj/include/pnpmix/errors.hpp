#ifndef PNPMIX_ERRORS_HPP
#define PNPMIX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pnpmix {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// bad shapes between tensors/masks/matrices
struct dimension_error : error {
    using error::error;
};

// bad argument values (ranges, counts, unknown enum values)
struct parameter_error : error {
    using error::error;
};

// malformed files (PNPL, PGM, containers, manifests)
struct format_error : error {
    using error::error;
};

// semantic input validation (mask overlap, partition violations)
struct validation_error : error {
    using error::error;
};

// NaN/Inf or other numeric failures at runtime
struct numeric_error : error {
    using error::error;
};

// file-exchange predictor timeouts and protocol failures
struct integration_error : error {
    using error::error;
};

// training aborts (NaN loss, empty dataset)
struct training_error : error {
    using error::error;
};

}  // namespace pnpmix

#endif
