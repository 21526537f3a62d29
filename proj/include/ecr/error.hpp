#ifndef ECR_ERROR_HPP_
#define ECR_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ecr {

// Bad input: malformed files, invalid configuration, contract violations.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed corpus/embedding/checkpoint content, tagged with the line number.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line,
             const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite loss, gradient, or parameter during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ecr

#endif  // ECR_ERROR_HPP_
