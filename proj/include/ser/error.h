#pragma once

#include <stdexcept>
#include <string>

namespace ser {

// Maps onto the CLI exit codes: usage 1, data 2, divergence 3.
enum class ErrorKind { kUsage = 1, kData = 2, kDivergence = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error DataError(const std::string& what) {
  return Error(ErrorKind::kData, what);
}
inline Error UsageError(const std::string& what) {
  return Error(ErrorKind::kUsage, what);
}
inline Error DivergenceError(const std::string& what) {
  return Error(ErrorKind::kDivergence, what);
}

}  // namespace ser
