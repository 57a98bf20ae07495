#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace awsens {

enum class ErrorCode {
  invalid_tree,
  invalid_params,
  dimension_mismatch,
  horizon_mismatch,
  infeasible,
  too_large,
  not_causal,
  delta_too_small,
  not_convex,
  max_iterations,
  ambiguous_stopping,
  flat_step,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_tree: return "InvalidTree";
    case ErrorCode::invalid_params: return "InvalidParams";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::horizon_mismatch: return "HorizonMismatch";
    case ErrorCode::infeasible: return "Infeasible";
    case ErrorCode::too_large: return "TooLarge";
    case ErrorCode::not_causal: return "NotCausal";
    case ErrorCode::delta_too_small: return "DeltaTooSmall";
    case ErrorCode::not_convex: return "NotConvex";
    case ErrorCode::max_iterations: return "MaxIterations";
    case ErrorCode::ambiguous_stopping: return "AmbiguousStopping";
    case ErrorCode::flat_step: return "FlatStep";
  }
  return "Unknown";
}

// Process exit status used by the command-line tool, one per error class.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_tree: return 2;
    case ErrorCode::ambiguous_stopping: return 3;
    case ErrorCode::not_convex: return 4;
    case ErrorCode::too_large: return 5;
    case ErrorCode::horizon_mismatch: return 6;
    case ErrorCode::not_causal: return 7;
    case ErrorCode::delta_too_small: return 8;
    case ErrorCode::max_iterations: return 9;
    case ErrorCode::flat_step: return 10;
    case ErrorCode::dimension_mismatch: return 11;
    case ErrorCode::invalid_params: return 12;
    case ErrorCode::infeasible: return 13;
  }
  return 1;
}

/// Library-wide exception. `node()` carries the index of the offending input
/// node when the failure can be attributed to one (used for line-anchored
/// diagnostics when reading tree files).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> node = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        node_(node) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> node() const noexcept { return node_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> node_;
};

}  // namespace awsens
