#pragma once

#include <stdexcept>
#include <string>

namespace latentcast {

/// Shape/dimension mismatch between tensors or layers.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or inconsistent configuration (unknown key, bad value, missing field).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Problems with input data or checkpoint files (parse failure, corruption).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training-time failure (divergence, non-finite gradients).
class TrainError : public std::runtime_error {
public:
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace latentcast
