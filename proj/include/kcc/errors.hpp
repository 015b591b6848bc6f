#pragma once

#include <stdexcept>
#include <string>

namespace kcc {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed source text. Positions are 1-based; line 0 means the source was a
// bare expression rather than a model file.
class SyntaxError : public Error {
public:
    SyntaxError(int line, int column, const std::string& detail)
        : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) +
                ": " + detail),
          line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

// Well-formed text that violates model rules (unknown identifier, duplicate or
// missing component, variable index out of range, ...).
class SemanticError : public Error {
public:
    using Error::Error;
};

// Domain violation while evaluating an expression (ln of a non-positive value,
// sqrt of a negative value, division by zero, non-finite result).
class EvalError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class TooFewSamplesError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace kcc
