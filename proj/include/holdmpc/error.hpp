#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace holdmpc {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonConvex,
  EmptySubtrahend,
  UnboundedSubtrahend,
  Unbounded,
  Unsupported,
  NoConvergence,
  EmptyTightenedSet,
  EmptySlice,
  Infeasible,
  InfeasibleAtResolve,
  IndexOutOfFamily,
  Config,
  Io,
  AlreadyExists,
  Solver,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Receives non-fatal diagnostics.  The default sink writes
/// "warning: <message>" to stderr; passing an empty function restores it.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace holdmpc
