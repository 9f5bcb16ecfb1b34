#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace flowlab {

// Command-line / configuration mistakes. The CLI maps these to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything wrong with inputs or state at run time (bad files, bad shapes,
// unsupported requests). The CLI maps these to exit code 2. `kind` is a
// stable tag tests can match on ("UnknownLabel", "TooFewRows", ...).
class DataError : public std::runtime_error {
 public:
  DataError(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

template <typename... Args>
[[noreturn]] inline void fail(const std::string& kind, Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw DataError(kind, os.str());
}

inline void require(bool ok, const std::string& kind, const std::string& message) {
  if (!ok) throw DataError(kind, message);
}

}  // namespace flowlab
