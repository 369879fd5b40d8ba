#pragma once

#include <stdexcept>
#include <string>

namespace lsrigru {

/// Root of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV row, date, config line).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row)
        : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
    explicit ParseError(const std::string& what) : Error(what) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_ = 0;
};

/// Well-formed input that violates a data invariant (duplicate key, ragged window).
class DataError : public Error {
public:
    using Error::Error;
};

/// A field value outside its allowed domain (non-positive price, bad OHLC ordering).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Invalid call arguments.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Inconsistent model or layer configuration (shape mismatch).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced during a numeric computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; the message always carries the path.
class IoError : public Error {
public:
    IoError(const std::string& what, const std::string& path)
        : Error(what + ": " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace lsrigru
