#pragma once

#include <stdexcept>
#include <string>

namespace expertnet {

// Array shapes that do not line up (network/tape/batch dimensions).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered in a loss, gradient or parameter.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A metric evaluated outside its domain (k=1 silhouette, single-class AUC...).
class UndefinedMetric : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row, std::size_t column)
        : std::runtime_error(what + " (row " + std::to_string(row) + ", column " +
                             std::to_string(column) + ")"),
          row_(row),
          column_(column) {}
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_ = 0;
    std::size_t column_ = 0;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace expertnet
