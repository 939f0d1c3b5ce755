#pragma once

#include <stdexcept>
#include <string>

namespace mfsde {

/// Raised when a solver breaks down (non-finite values, singular systems, ...).
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for malformed configuration files or scenario specs.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an operation needs structure the model does not provide
/// (e.g. kernel machinery on a model with state-dependent drift).
struct unsupported_model_error : std::runtime_error {
    explicit unsupported_model_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mfsde
