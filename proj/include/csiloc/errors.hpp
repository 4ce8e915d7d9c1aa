// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace csiloc {

/// Input outside the mathematical domain of an operation (zero norm, bad angle, empty path list).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or physically inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Covariance matrix could not be factorized, even with jitter.
class ConditioningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optimization or network training failed (all restarts failed, loss diverged).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operands with incompatible dimensions.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable, truncated or foreign artifact file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace detail
}  // namespace csiloc
