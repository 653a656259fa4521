#include "ttsnap/error.hpp"

namespace ttsnap {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::Underflow: return "underflow";
    case ErrorKind::MissingCheckpoint: return "missing_checkpoint";
    case ErrorKind::TrainingDiverged: return "training_diverged";
    case ErrorKind::NoValidPairs: return "no_valid_pairs";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::OffGrid: return "off_grid";
    case ErrorKind::UndefinedRatio: return "undefined_ratio";
    case ErrorKind::BadMagic: return "bad_magic";
    case ErrorKind::VersionMismatch: return "version_mismatch";
    case ErrorKind::TruncatedFile: return "truncated_file";
    case ErrorKind::ScheduleHashMismatch: return "schedule_hash_mismatch";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

}  // namespace ttsnap
