#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "profsim/corpus.hpp"
#include "profsim/error.hpp"
#include "profsim/judge.hpp"
#include "profsim/profile.hpp"

namespace profsim {

/// Paths asked during extraction, in order: demographics, situation,
/// resistance, the 18 symptoms, the 6 distortions, then the three severities.
std::vector<std::string> extraction_paths();

/// Full judge prompt (transcript + attribute question) for one attribute path.
std::string extraction_prompt(std::string_view transcript, std::string_view path);

struct AttributeFailure {
  std::string path;
  ErrorCode code = ErrorCode::JudgeUnparseable;
  std::string message;
};

struct ExtractionResult {
  PsychologicalProfile profile;
  std::vector<AttributeFailure> failures;  // attributes left at their Unidentified/NotExhibited default

  bool usable() const;  // no failures and role-play valid
};

/// Parses one judge answer for `path` into `p`. Returns false if the answer is unparseable.
bool apply_extraction_answer(PsychologicalProfile& p, std::string_view path, std::string_view answer);

/// One judge question per attribute with up to 3 retries each. Unparseable
/// attributes are reported in failures and extraction continues.
/// Throws InvalidArgument unless conv.depression_related is true; JudgeUnavailable propagates.
ExtractionResult extract_profile(const Conversation& conv, Judge& judge);

}  // namespace profsim
