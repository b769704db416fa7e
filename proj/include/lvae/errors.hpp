#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lvae {

enum class ErrorCode {
  // data
  UnequalLength,
  EmptyReference,
  EmptySequence,
  IoError,
  MalformedLabel,
  EmptyCorpus,
  BadMagic,
  VersionMismatch,
  ShapeMismatch,
  VocabHashMismatch,
  // configuration
  ConfigInvalid,
  SpecInvalid,
  // numeric
  EnumerationTooLarge,
  DivergentKernel,
  TailTooLarge,
  LatentTooLarge,
  NonFiniteGradient,
  NonFiniteLoss,
  DegenerateLabels,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Process exit code for the CLI: 2 config error, 3 data error, 4 numeric failure.
int exit_code_for(ErrorCode code);

}  // namespace lvae
