#pragma once

#include <stdexcept>
#include <string>

namespace neurodec {

// Error categories. `kind()` lets the CLI map failures onto exit codes
// without string matching.
enum class ErrorKind {
  dimension,
  degenerate_vector,
  contract,
  numeric,
  format,
  range,
  size,
  config,
  lookup,
  corruption,
  tracker_state,
  argument,
  anchor,
  data,
  io,
  invariant,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::degenerate_vector: return "degenerate vector";
    case ErrorKind::contract: return "contract violation";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::format: return "format error";
    case ErrorKind::range: return "range error";
    case ErrorKind::size: return "size error";
    case ErrorKind::config: return "config error";
    case ErrorKind::lookup: return "lookup error";
    case ErrorKind::corruption: return "corruption error";
    case ErrorKind::tracker_state: return "tracker state error";
    case ErrorKind::argument: return "argument error";
    case ErrorKind::anchor: return "anchor error";
    case ErrorKind::data: return "data error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::invariant: return "invariant violation";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace neurodec
