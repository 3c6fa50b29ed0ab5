#include "idiolens/error.hpp"

namespace idiolens {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::input: return "input error";
    case ErrorKind::missing_input: return "missing input";
    case ErrorKind::consistency: return "consistency error";
    case ErrorKind::empty_set: return "empty selection";
    case ErrorKind::numerical: return "numerical failure";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::format: return "format error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace idiolens
