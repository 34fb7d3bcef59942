#pragma once

#include <stdexcept>
#include <string>

namespace swd {

// Common base so callers can catch every library error in one handler.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct NotPSD : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };
struct UnsupportedSecondOrder : Error { using Error::Error; };
struct PreconditionError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct InsufficientSamples : Error { using Error::Error; };
struct TooLarge : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace swd
