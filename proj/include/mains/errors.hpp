#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace mains {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Anchor/regressor geometry cannot support the requested model order.
class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

// Covariance or state became non-finite during filtering.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Innovation covariance is not invertible.
class SingularInnovationError : public Error {
public:
    using Error::Error;
};

// Malformed dataset, geometry, or trajectory file.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Trajectory script cannot be synthesized (non-smooth or invalid timing).
class ScriptError : public Error {
public:
    using Error::Error;
};

// Bad run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void str_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void str_append(std::ostringstream& os, const T& value, const Rest&... rest) {
    os << value;
    str_append(os, rest...);
}

}  // namespace detail

// Builds an error message from mixed parts: msg("rank ", r, " < ", kappa).
template <typename... Parts>
std::string msg(const Parts&... parts) {
    std::ostringstream os;
    detail::str_append(os, parts...);
    return os.str();
}

}  // namespace mains
