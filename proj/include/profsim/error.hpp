#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace profsim {

enum class ErrorCode {
  InvalidArgument,
  FileUnreadable,
  IoFailure,
  SchemaViolation,
  DuplicateId,
  MissingLabel,
  JudgeUnavailable,
  JudgeUnparseable,
  UnknownStratumKey,
  UnknownCapSubcategory,
  InvalidProfile,
  NoEligibleAttributes,
  SummarizerUnavailable,
  EmptySession,
  EndpointUnreachable,
  RateLimited,
  MalformedResponse,
  ScoringUnsupported,
  EmptySequence,
  NoSampleableTurns,
  DegenerateProbability,
  UnresolvableSession,
  EmptyBatch,
  NonFiniteInput,
  TraitAbsentInProfile,
  EmptyGroup,
  EmptyPool,
  SessionNotFound,
  SessionCompleted,
  PendingChoice,
  NoPendingPair,
  InvalidVerdict,
  ScoreOutOfRange,
  WrongMode,
  ConfigInvalid,
  UnknownSubcommand,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Every failure raised by the
/// library is one of these; callers branch on code(), humans read what().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace profsim
