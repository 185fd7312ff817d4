// Exception types shared by every module.

#ifndef BMAGUARD_ERROR_HPP_
#define BMAGUARD_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bmaguard {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
  using Error::Error;
};

class NotFound : public Error {
public:
  using Error::Error;
};

class UndefinedMetric : public Error {
public:
  using Error::Error;
};

class TrainingDiverged : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Parse failure; `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// OCR engine failure on one strip.
class EngineError : public Error {
public:
  EngineError(const std::string& what, std::size_t strip)
      : Error("strip " + std::to_string(strip) + ": " + what), strip_(strip) {}
  std::size_t strip() const noexcept { return strip_; }

private:
  std::size_t strip_;
};

} // namespace bmaguard

#endif
