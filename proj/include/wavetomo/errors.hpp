#pragma once

#include <stdexcept>

namespace wavetomo {

/// Failure of a numerical procedure on valid input (CFL, stalled search).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wavetomo
