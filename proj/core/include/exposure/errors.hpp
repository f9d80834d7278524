#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace exposure {

enum class ErrorCode {
  // corpus
  MissingDialogueSection,
  UnknownSpeakerLabel,
  InvalidDialogue,
  UnnormalizedInput,
  EmptyLexicon,
  DuplicateId,
  // conditions
  IdMismatch,
  IncompleteAssignment,
  SentenceCountMismatch,
  BudgetTooLarge,
  InvalidSpec,
  // bpe
  CorpusTooSmall,
  UnknownId,
  BadTokenizerFile,
  // models
  BadMagic,
  VersionMismatch,
  HashMiss,
  MissingToken,
  InvalidArgument,
  // eval
  EmptySequence,
  EmptyItemSet,
  DegenerateInput,
  MissingWordVector,
  MismatchedMetricKeys,
  BadBenchmarkFile,
  // embanalysis
  RankDeficient,
  LengthMismatch,
  // pipeline
  ConfigError,
  MissingManifest,
  StageFailure,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace exposure
