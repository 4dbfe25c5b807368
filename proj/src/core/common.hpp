#pragma once

#include <stdexcept>
#include <string>

namespace hybem {

// Coarse failure categories so the C API and the CLI can map errors to stable
// exit codes without parsing messages.
enum class ErrorCode {
  io,       // file not found / unreadable / unwritable
  parse,    // malformed input file or config
  invalid,  // semantically invalid input (bad mesh, bad tensor, bad arguments)
  solver,   // assembly / factorization / solve failure
  bound,    // a validation bound was exceeded
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hybem
