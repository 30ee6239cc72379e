#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/chat.hpp"
#include "profsim/gateway.hpp"
#include "profsim/judge.hpp"
#include "profsim/profile.hpp"

namespace profsim {

enum class DimensionKind { SymptomSeverity, CognitiveDistortion, DepressionSeverity };

std::string_view to_string(DimensionKind d) noexcept;
std::optional<DimensionKind> dimension_kind_from_string(std::string_view s);

struct Dimension {
  DimensionKind kind = DimensionKind::DepressionSeverity;
  SymptomKind symptom = SymptomKind::Sadness;                        // SymptomSeverity only
  DistortionKind distortion = DistortionKind::SelectiveAbstraction;  // CognitiveDistortion only

  static Dimension of(SymptomKind s) { return {DimensionKind::SymptomSeverity, s, {}}; }
  static Dimension of(DistortionKind d) { return {DimensionKind::CognitiveDistortion, {}, d}; }
  static Dimension depression() { return {}; }

  /// "symptoms.<key>", "distortions.<key>" or "depression_severity".
  std::string trait_path() const;
  bool operator==(const Dimension&) const = default;
};

struct InterviewPlan {
  Dimension dimension;
  std::string trait;         // human-readable trait name as substituted ("lack of energy")
  std::string target_level;  // profile value of the trait ("Mild", "Exhibited", ...)
  std::vector<std::string> questions;
  std::string rating_question;
};

/// Question templates of one dimension, with SYMPTOM / COGNITIVE DISTORTION placeholders.
std::span<const std::string_view> question_templates(DimensionKind kind);

/// Throws TraitAbsentInProfile when the trait is NotExhibited / Unidentified.
InterviewPlan plan_interview(const PsychologicalProfile& profile, const Dimension& dimension);

/// Every exhibited symptom, every exhibited distortion, then overall severity
/// (when identified), optionally restricted to some dimension kinds.
std::vector<Dimension> interview_dimensions(const PsychologicalProfile& profile,
                                            std::span<const DimensionKind> kinds = {});

struct InterviewResult {
  InterviewPlan plan;
  std::vector<ChatMessage> transcript;  // System, then question/answer pairs
  int rating = 0;
};

std::string rating_prompt(const InterviewPlan& plan, std::span<const ChatMessage> transcript);
/// An integer 1..5, optionally as "Rating: 4" or "4/5"; anything else is nullopt.
std::optional<int> parse_rating(std::string_view answer);

/// Asks the plan's questions in order, one chatbot reply each, then has the
/// judge rate the transcript. Throws JudgeUnparseable; gateway errors propagate.
InterviewResult run_interview(const InterviewPlan& plan, const PsychologicalProfile& profile, Provider& chatbot,
                              const DecodingConfig& cfg, Judge& judge);

struct RatingEntry {
  std::string profile_id;
  Dimension dimension;
  std::string trait;
  std::string target_level;
  int rating = 0;

  bool operator==(const RatingEntry&) const = default;
};

json to_json(const RatingEntry& e);
RatingEntry rating_entry_from_json(const json& j);

struct EvaluationConfig {
  DecodingConfig decoding;
  std::vector<DimensionKind> dimensions;  // empty means all three
  int concurrency = 1;
};

/// One interview per (profile, dimension) cell; output in (profile, dimension) order.
std::vector<RatingEntry> run_evaluation(std::span<const ProfileRecord> profiles, Provider& chatbot, Judge& judge,
                                        const EvaluationConfig& cfg);

struct DimensionScore {
  DimensionKind dimension = DimensionKind::SymptomSeverity;
  std::size_t count = 0;
  double average = 0.0;
  double full_alignment = 0.0;  // share of ratings equal to 5

  bool operator==(const DimensionScore&) const = default;
};

struct EvalScorecard {
  std::vector<DimensionScore> rows;  // SymptomSeverity, CognitiveDistortion, DepressionSeverity order

  bool operator==(const EvalScorecard&) const = default;
};

/// Throws EmptyGroup for an empty group and ScoreOutOfRange for ratings outside 1..5.
EvalScorecard aggregate_scores(const std::map<DimensionKind, std::vector<int>>& groups);
EvalScorecard aggregate_scores(std::span<const RatingEntry> entries);

/// Markdown table, one row per dimension, values with three decimals.
std::string format_scorecard(const EvalScorecard& card);
json to_json(const EvalScorecard& card);

}  // namespace profsim
