#pragma once

#include <stdexcept>
#include <string>

namespace bsdens {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A user coefficient returned a non-finite value.
class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, double t, double x)
        : Error(what + " at (t=" + std::to_string(t) + ", x=" + std::to_string(x) + ")"), t_(t), x_(x) {}
    double t() const noexcept { return t_; }
    double x() const noexcept { return x_; }

private:
    double t_;
    double x_;
};

/// Inner iterations of a solver did not converge.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual)
        : Error(what + " (last residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Inconsistent numerical configuration (grid, sample sizes, options).
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Regression design matrix cannot support the requested basis.
class BasisError : public Error {
public:
    using Error::Error;
};

/// Unknown preset or identifier.
class IdentifierError : public Error {
public:
    using Error::Error;
};

/// Text input could not be parsed; line and column are 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line, int column)
        : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what), line_(line), column_(column) {}
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

}  // namespace bsdens
