#pragma once

#include <stdexcept>
#include <string>

namespace gbfn {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid sizes (n_atoms < 1, n_classes < 2, ...).
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Scalar parameter outside its valid domain (alpha <= 0, sigma1 >= 1, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Mismatched matrix shapes between operands.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A value violates a structural invariant (non-simplex row, all-zero row, ...).
class InvalidStateError : public Error {
public:
    explicit InvalidStateError(const std::string& msg) : Error(msg) {}
};

// Configuration file problems; message names the offending key.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Filesystem / serialization problems.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// A sampler failed mid-run; carries the chain and step where it happened.
class SamplerError : public Error {
public:
    SamplerError(const std::string& msg, int step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

}  // namespace gbfn
