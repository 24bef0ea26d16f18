#pragma once

#include <stdexcept>
#include <string>

namespace s3vaada {

/// Inputs of incompatible shape (vector lengths, layer sizes).
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed configuration, file content or call arguments.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A loss, gradient or parameter became non-finite.
class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Process exit codes shared by every CLI command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

}  // namespace s3vaada
