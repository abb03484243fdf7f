#pragma once

#include <stdexcept>
#include <string>

namespace myoreg {

// Caller violated a precondition (dimension mismatch, foreign tape node, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A math function was evaluated outside its domain.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, double offending)
      : std::domain_error(what + " (value " + std::to_string(offending) + ")"), value_(offending) {}
  double value() const noexcept { return value_; }

 private:
  double value_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-level problems: unreadable, truncated, checksum mismatch, wrong version.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace myoreg
