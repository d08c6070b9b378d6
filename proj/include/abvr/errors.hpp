#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace abvr {

// Base of every error raised for bad user input or degenerate data.
// The CLI maps this family to exit code 2; anything else is internal.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arm too small, zero variance where a variance is required, empty input.
class degenerate_input_error : public error {
 public:
  using error::error;
};

// Caller violated a documented precondition (dimensions, indices, bounds).
class contract_error : public error {
 public:
  using error::error;
};

// Value outside its domain, e.g. a treatment flag that is not 0/1.
class domain_error : public error {
 public:
  using error::error;
};

// Predictions could not be matched to dataset rows.
class alignment_error : public error {
 public:
  using error::error;
};

// Experiments disagree on the in-experiment covariate columns.
class schema_error : public contract_error {
 public:
  using contract_error::contract_error;
};

class parse_error : public error {
 public:
  parse_error(const std::string& what, std::size_t line)
      : error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace abvr
