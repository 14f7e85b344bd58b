#pragma once

#include <stdexcept>
#include <string>

namespace csvae {

/// Bad input data: wrong shapes, malformed files, out-of-range arguments.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A computation produced NaN/Inf.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw DataError(message);
}

template <typename Derived>
void require_finite(const Derived& values, const std::string& what) {
    if (!values.allFinite()) throw NumericalError(what + ": non-finite value");
}

}  // namespace detail
}  // namespace csvae
