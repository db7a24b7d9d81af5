#pragma once

#include <stdexcept>
#include <string>

namespace bev {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
  Config = 2,      // bad configuration, schema violation, missing file
  Numeric = 3,     // numerical failure (asymmetry, rank deficiency, ...)
  Infeasible = 4,  // sampling slice does not intersect the hypercube
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) {
  return Error(ErrorKind::Config, what);
}
inline Error numeric_error(const std::string& what) {
  return Error(ErrorKind::Numeric, what);
}
inline Error infeasible_error(const std::string& what) {
  return Error(ErrorKind::Infeasible, what);
}

}  // namespace bev
