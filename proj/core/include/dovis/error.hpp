#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dovis {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Dimensions of two operands disagree, or a problem is too large for a dense method.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input data failed range or integrity validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Configuration could not be parsed or is inconsistent.
class ConfigError : public Error {
public:
    ConfigError(const std::string &what, int line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    /// 1-based line of the offending entry, or -1 when unknown.
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// The power iteration did not reach its tolerance within the iteration budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string &what, std::vector<double> best, int iterations, double residual)
        : Error(what), best_(std::move(best)), iterations_(iterations), residual_(residual) {}

    const std::vector<double> &best_iterate() const noexcept { return best_; }
    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    std::vector<double> best_;
    int iterations_;
    double residual_;
};

} // namespace dovis
