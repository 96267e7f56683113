#pragma once

#include <stdexcept>
#include <string>

namespace flicker {

/// Bad input (files, config, data) versus a failure inside an algorithm.
/// The CLI maps these onto exit codes 2 and 1 respectively.
enum class ErrorKind { input, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) {
  return Error(ErrorKind::input, what);
}

inline Error internal_error(const std::string& what) {
  return Error(ErrorKind::internal, what);
}

}  // namespace flicker
