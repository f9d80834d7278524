#include "exposure/errors.hpp"

namespace exposure {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingDialogueSection: return "MissingDialogueSection";
    case ErrorCode::UnknownSpeakerLabel: return "UnknownSpeakerLabel";
    case ErrorCode::InvalidDialogue: return "InvalidDialogue";
    case ErrorCode::UnnormalizedInput: return "UnnormalizedInput";
    case ErrorCode::EmptyLexicon: return "EmptyLexicon";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::IncompleteAssignment: return "IncompleteAssignment";
    case ErrorCode::SentenceCountMismatch: return "SentenceCountMismatch";
    case ErrorCode::BudgetTooLarge: return "BudgetTooLarge";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::BadTokenizerFile: return "BadTokenizerFile";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::HashMiss: return "HashMiss";
    case ErrorCode::MissingToken: return "MissingToken";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyItemSet: return "EmptyItemSet";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MissingWordVector: return "MissingWordVector";
    case ErrorCode::MismatchedMetricKeys: return "MismatchedMetricKeys";
    case ErrorCode::BadBenchmarkFile: return "BadBenchmarkFile";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::StageFailure: return "StageFailure";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace exposure
