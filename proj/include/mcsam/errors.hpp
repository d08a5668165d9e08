#pragma once

#include <stdexcept>
#include <string>

namespace mcsam {

// Invalid or inconsistent configuration (sizes, patterns, hyperparameters).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shape or raster dimension mismatch.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf in inputs, activations or losses.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Files, annotations and checkpoints.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mcsam
