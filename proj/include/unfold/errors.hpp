#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace unfold {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Raised when AᵀA + ρWᵀW is not numerically positive definite.
class SingularSystem : public Error {
public:
    SingularSystem(const std::string& what, double smallest_pivot)
        : Error(what), smallest_pivot_(smallest_pivot) {}
    double smallest_pivot() const noexcept { return smallest_pivot_; }

private:
    double smallest_pivot_;
};

/// γ = ρ/(α − ρ‖AᵀA‖) needs α > ρ‖AᵀA‖.
class GammaUndefined : public Error {
public:
    using Error::Error;
};

class QuadratureError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class UnsupportedVersion : public FormatError {
public:
    using FormatError::FormatError;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, int last_finite_epoch)
        : Error(what), last_finite_epoch_(last_finite_epoch) {}
    int last_finite_epoch() const noexcept { return last_finite_epoch_; }

private:
    int last_finite_epoch_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace unfold
