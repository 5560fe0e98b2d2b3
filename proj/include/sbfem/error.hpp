#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sbfem {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (mesh files, job files, image headers).
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, std::string token, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what + " (at '" + token + "')"),
          source_(std::move(source)), line_(line), token_(std::move(token)) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }
    const std::string& token() const noexcept { return token_; }

private:
    std::string source_;
    std::size_t line_;
    std::string token_;
};

/// Mesh data that is syntactically valid but inconsistent.
class MeshError : public Error {
public:
    using Error::Error;
};

/// Element formation failed (degenerate geometry, ill-posed eigenproblem, ...).
class ElementError : public Error {
public:
    ElementError(std::ptrdiff_t element, const std::string& what)
        : Error(element >= 0 ? "element " + std::to_string(element + 1) + ": " + what : what),
          element_(element) {}

    /// 0-based element id, or -1 when the element is not known at the throw site.
    std::ptrdiff_t element() const noexcept { return element_; }

private:
    std::ptrdiff_t element_;
};

/// Global system failures: singular stiffness, eigensolver breakdown.
class SolverError : public Error {
public:
    using Error::Error;
};

}  // namespace sbfem
