#pragma once
#include <stdexcept>
#include <string>

namespace faultface {

// Categories map onto CLI exit codes: 1 config, 2 data, 3 numeric.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return {ErrorKind::Config, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::Data, what}; }
inline Error numeric_error(const std::string& what) { return {ErrorKind::Numeric, what}; }

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Numeric: return 3;
  }
  return 1;
}

}  // namespace faultface
