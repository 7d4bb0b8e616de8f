#pragma once

#include <stdexcept>
#include <string>

namespace causalprobe {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed caller input: bad shapes, non-finite values, invalid options.
struct InvalidInputError : Error {
    using Error::Error;
};

/// A named feature or column does not exist.
struct LookupError : Error {
    using Error::Error;
};

/// Treatment vector unusable for the requested estimator (zero variance,
/// single class, binary passed to a continuous-only method, ...).
struct DegenerateTreatmentError : Error {
    using Error::Error;
};

/// Operation requires a different treatment-model kind.
struct WrongModelKindError : Error {
    using Error::Error;
};

/// An estimator could not produce usable weights or an estimate.
struct EstimationError : Error {
    using Error::Error;
};

/// Too many bootstrap resamples failed to re-estimate.
struct BootstrapUnstableError : Error {
    using Error::Error;
};

/// Black-box probe failure: subprocess died, timed out, or answered garbage.
struct ProbeError : Error {
    using Error::Error;
};

/// File parsing / serialization problems.
struct IoError : Error {
    using Error::Error;
};

}  // namespace causalprobe
