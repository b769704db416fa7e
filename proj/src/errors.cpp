#include "lvae/errors.hpp"

namespace lvae {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnequalLength: return "UnequalLength";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedLabel: return "MalformedLabel";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::VocabHashMismatch: return "VocabHashMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::DivergentKernel: return "DivergentKernel";
    case ErrorCode::TailTooLarge: return "TailTooLarge";
    case ErrorCode::LatentTooLarge: return "LatentTooLarge";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::SpecInvalid:
      return 2;
    case ErrorCode::EnumerationTooLarge:
    case ErrorCode::DivergentKernel:
    case ErrorCode::TailTooLarge:
    case ErrorCode::LatentTooLarge:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::DegenerateLabels:
      return 4;
    default:
      return 3;
  }
}

}  // namespace lvae
