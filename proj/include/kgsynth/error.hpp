#pragma once

#include <stdexcept>
#include <string>

namespace kgsynth {

// Base for every error raised by the library. `code()` is a short
// machine-readable tag that the CLI prints on its single-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error("parse_error", source + ":" + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& what) : Error("not_found", what) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error("numerical_error", what) {}
};

}  // namespace kgsynth
