#pragma once

#include <stdexcept>
#include <string>

namespace tabfm {

/// Coarse failure class. Maps onto CLI exit codes (usage=1, data=2, budget=3).
enum class ErrorKind { Usage, Data, Io, Format, Shape, Budget };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::Budget:
      return 3;
    default:
      return 2;
  }
}

}  // namespace tabfm
