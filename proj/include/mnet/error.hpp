#pragma once

#include <stdexcept>
#include <string>

namespace mnet {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised by text parsers; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}

    int line() const { return line_; }

private:
    int line_;
};

}  // namespace mnet
