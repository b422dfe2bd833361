#pragma once

#include <stdexcept>
#include <string>

namespace prrl {

// Error kinds map onto CLI exit codes: Config=1, Data=2, Numeric=3.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) {
  return Error(ErrorKind::Config, msg);
}
inline Error data_error(const std::string& msg) {
  return Error(ErrorKind::Data, msg);
}
inline Error numeric_error(const std::string& msg) {
  return Error(ErrorKind::Numeric, msg);
}

}  // namespace prrl
