#pragma once

#include <stdexcept>
#include <string>

namespace batchol {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class EmptyBatch : public Error {
public:
    EmptyBatch() : Error("operation requires a nonempty batch") {}
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An iterate or gradient became non-finite.
class Divergence : public Error {
public:
    Divergence(const std::string& what, long iteration)
        : Error(what), iteration_(iteration) {}
    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

/// Line search could not find an acceptable step.
class LineSearchStall : public Error {
public:
    using Error::Error;
};

/// AUC or RIG is undefined on single-class data.
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, long line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace batchol
