#pragma once

#include <stdexcept>
#include <string>

namespace jscc {

// Exit codes used by the CLI. Library code throws; src/main.cpp maps.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfigError = 1,
    kExitRuntimeError = 2,
    kExitCodecUnavailable = 3,
};

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: inconsistent dimensions, bad field values,
// checkpoint/config mismatch, degenerate link setups.
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Degenerate runtime input (e.g. all-zero signal fed to the normalizer).
class DomainError : public Error {
  public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// External image codec missing or broken. Never silently substituted.
class CodecUnavailable : public Error {
  public:
    explicit CodecUnavailable(const std::string& msg) : Error(msg) {}
};

}  // namespace jscc
