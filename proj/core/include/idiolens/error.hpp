#pragma once

#include <stdexcept>
#include <string>

namespace idiolens {

enum class ErrorKind {
  parse,          // malformed input text or record
  validation,     // well-formed record violating an invariant
  input,          // bad argument to an operation
  missing_input,  // an optional input was required by the requested mode
  consistency,    // two inputs disagree (ids, variants, shapes)
  empty_set,      // a selection produced nothing to aggregate
  numerical,      // conditioning or convergence failure
  io,             // filesystem failure
  format,         // binary container failure, see DumpErrc
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace idiolens
