#pragma once

#include <stdexcept>
#include <string>

namespace vand {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Incompatible tensor shapes (non-broadcastable operands, bad matmul dims, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid argument values (bad mode name, out-of-range hyperparameter, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

/// File and serialization failures.
class IoError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered where finite values are required. Carries the time step
/// and layer index when raised from the recurrence (-1 when not applicable).
class NonFiniteError : public Error {
public:
    explicit NonFiniteError(const std::string& msg, int t = -1, int layer = -1)
        : Error(msg), t_(t), layer_(layer) {}
    int t() const { return t_; }
    int layer() const { return layer_; }

private:
    int t_;
    int layer_;
};

} // namespace vand
