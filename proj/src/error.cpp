#include "profsim/error.hpp"

namespace profsim {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FileUnreadable: return "FileUnreadable";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::JudgeUnparseable: return "JudgeUnparseable";
    case ErrorCode::UnknownStratumKey: return "UnknownStratumKey";
    case ErrorCode::UnknownCapSubcategory: return "UnknownCapSubcategory";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::NoEligibleAttributes: return "NoEligibleAttributes";
    case ErrorCode::SummarizerUnavailable: return "SummarizerUnavailable";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ScoringUnsupported: return "ScoringUnsupported";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::NoSampleableTurns: return "NoSampleableTurns";
    case ErrorCode::DegenerateProbability: return "DegenerateProbability";
    case ErrorCode::UnresolvableSession: return "UnresolvableSession";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::TraitAbsentInProfile: return "TraitAbsentInProfile";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::SessionNotFound: return "SessionNotFound";
    case ErrorCode::SessionCompleted: return "SessionCompleted";
    case ErrorCode::PendingChoice: return "PendingChoice";
    case ErrorCode::NoPendingPair: return "NoPendingPair";
    case ErrorCode::InvalidVerdict: return "InvalidVerdict";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

}  // namespace profsim
