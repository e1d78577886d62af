#pragma once

#include <stdexcept>
#include <string>

namespace egospeed {

enum class ErrorKind {
  kInvalidConfig,
  kInvalidInput,
  kInvalidRecord,
  kDataAlignment,
  kShape,
  kDegenerateGraph,
  kNumericFault,
  kIo,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace egospeed
