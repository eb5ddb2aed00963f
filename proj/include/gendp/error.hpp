#pragma once

#include <stdexcept>
#include <string>

namespace gendp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or parameter layouts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Token id or label outside the vocabulary / lexicon.
class VocabError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Violated internal contract (e.g. a gradient reaching a frozen tensor).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gendp
