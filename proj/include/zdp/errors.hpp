#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zdp {

enum class ErrorKind {
  kValidation,
  kNonFinite,
  kSingularDecoupling,
  kNoConvergence,
  kUncontrollable,
  kBadPoles,
  kNoStabilizingSolution,
  kDegenerateProjection,
  kRelativeDegreeLoss,
  kDiverged,
  kAllBelowFloor,
  kTrainingDiverged,
  kEscaped,
};

std::string_view to_string(ErrorKind kind);

/// Error raised by every numerical routine in the toolkit. The kind lets the
/// command-line front end map failures onto exit codes.
class ZdpError : public std::runtime_error {
 public:
  ZdpError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "Validation";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kSingularDecoupling: return "SingularDecoupling";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kUncontrollable: return "Uncontrollable";
    case ErrorKind::kBadPoles: return "BadPoles";
    case ErrorKind::kNoStabilizingSolution: return "NoStabilizingSolution";
    case ErrorKind::kDegenerateProjection: return "DegenerateProjection";
    case ErrorKind::kRelativeDegreeLoss: return "RelativeDegreeLoss";
    case ErrorKind::kDiverged: return "Diverged";
    case ErrorKind::kAllBelowFloor: return "AllBelowFloor";
    case ErrorKind::kTrainingDiverged: return "TrainingDiverged";
    case ErrorKind::kEscaped: return "Escaped";
  }
  return "Unknown";
}

}  // namespace zdp
