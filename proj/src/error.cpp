#include "holdmpc/error.hpp"

#include <cstdio>
#include <mutex>

namespace holdmpc {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonConvex: return "NonConvex";
    case ErrorCode::EmptySubtrahend: return "EmptySubtrahend";
    case ErrorCode::UnboundedSubtrahend: return "UnboundedSubtrahend";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::EmptyTightenedSet: return "EmptyTightenedSet";
    case ErrorCode::EmptySlice: return "EmptySlice";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::InfeasibleAtResolve: return "InfeasibleAtResolve";
    case ErrorCode::IndexOutOfFamily: return "IndexOutOfFamily";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    case ErrorCode::AlreadyExists: return "AlreadyExists";
    case ErrorCode::Solver: return "Solver";
  }
  return "Unknown";
}

namespace {
std::mutex sink_mutex;
WarningSink& sink() {
  static WarningSink s;
  return s;
}
}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard<std::mutex> lock(sink_mutex);
  sink() = std::move(s);
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(sink_mutex);
  if (sink()) {
    sink()(message);
  } else {
    std::fprintf(stderr, "warning: %s\n", message.c_str());
  }
}

}  // namespace holdmpc
