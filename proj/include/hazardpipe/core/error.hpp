#pragma once

#include <stdexcept>
#include <string>

namespace hazardpipe {

// All recoverable failures in the library are reported with this exception.
// `kind()` is a stable machine-readable tag (e.g. "OutOfRange", "MalformedImage")
// that the service layer maps to HTTP status codes and the CLI to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

}  // namespace hazardpipe
