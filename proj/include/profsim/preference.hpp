#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/chat.hpp"
#include "profsim/corpus.hpp"
#include "profsim/filter.hpp"
#include "profsim/gateway.hpp"
#include "profsim/judge.hpp"
#include "profsim/profile.hpp"

namespace profsim {

// ---- turn contexts -------------------------------------------------------

enum class Section { First, Second, Third };
std::string_view to_string(Section s) noexcept;

struct TurnContext {
  std::string conversation_id;
  std::string profile_id;
  std::vector<ChatMessage> messages;  // System + history, ending with a User message
  Section section = Section::First;
  std::size_t cut_index = 0;          // index of the sampled Client turn in the conversation

  bool operator==(const TurnContext&) const = default;
};

json to_json(const TurnContext& c);
TurnContext turn_context_from_json(const json& j);

/// Indices of Client turns directly preceded by a Supporter turn.
std::vector<std::size_t> client_response_positions(const Conversation& conv);
/// Splits n positions into three contiguous runs with sizes n/3 + (k < n%3).
std::array<std::pair<std::size_t, std::size_t>, 3> tercile_bounds(std::size_t n);

/// One context per non-empty tercile, drawn uniformly under seed.
/// Throws NoSampleableTurns, InvalidProfile.
std::vector<TurnContext> sample_turn_contexts(const Conversation& conv, const PsychologicalProfile& profile,
                                              std::uint64_t seed);

// ---- candidate generation and adherence ----------------------------------

struct CandidatePair {
  std::string original;  // y_o, generated under the original profile
  std::string noisy;     // y_n, generated under the perturbed profile
};

/// Same history and decoding config for both; only the System message differs.
CandidatePair generate_candidate_pair(const TurnContext& ctx, const PsychologicalProfile& profile,
                                      const PsychologicalProfile& noisy, Provider& provider,
                                      const DecodingConfig& cfg);

enum class Verdict { Compliant, NonCompliant, NotApplicable };
std::string_view to_string(Verdict v) noexcept;

struct AdherenceReport {
  std::vector<std::pair<std::string, Verdict>> verdicts;  // attribute path -> verdict, canonical order
  double score = 1.0;
  bool full_match = true;
  std::vector<std::string> warnings;

  bool operator==(const AdherenceReport&) const = default;
};

json to_json(const AdherenceReport& r);

/// S = Compliant / (Compliant + NonCompliant), 1 when nothing is applicable.
AdherenceReport make_adherence_report(std::vector<std::pair<std::string, Verdict>> verdicts);

/// Every profile attribute path, in canonical order (demographics, situation,
/// history, resistance, symptoms, distortions, severities).
std::vector<std::string> adherence_paths();
/// "Label: value" for the path, or nullopt when the attribute is unidentified/absent.
std::optional<std::string> describe_attribute(const PsychologicalProfile& p, std::string_view path);
std::string adherence_prompt(const TurnContext& ctx, std::string_view response, std::string_view attribute_line);
std::optional<Verdict> parse_verdict(std::string_view answer);

/// One judge call per identified attribute; unidentified ones are NotApplicable
/// without a call. Unparseable answers become NotApplicable with a warning.
/// Throws InvalidProfile; JudgeUnavailable propagates.
AdherenceReport adherence_score(std::string_view response, const TurnContext& ctx,
                                const PsychologicalProfile& profile, Judge& judge);

// ---- the generation run --------------------------------------------------

struct PreferenceConfig {
  double noise_ratio = 0.3;
  double tau = kDefaultTau;
  std::uint64_t seed = 0;
  DecodingConfig decoding;
  int concurrency = 1;

  bool operator==(const PreferenceConfig&) const = default;
};

struct CandidateRecord {
  TurnContext context;
  std::string chosen;    // y_o
  std::string rejected;  // y_n
  ProfileDiff diff;
  AdherenceReport adherence_o;
  AdherenceReport adherence_n;
  double s_o = 0.0;
  double s_n = 0.0;
  double p_avg_o = 0.0;  // both scored under the original prompt
  double p_avg_n = 0.0;
  double ratio = 0.0;
  double tau = kDefaultTau;
  bool kept = false;
  std::optional<DropReason> drop_reason;

  bool operator==(const CandidateRecord&) const = default;
};

/// Full audit line.
json to_json(const CandidateRecord& r);
CandidateRecord candidate_record_from_json(const json& j);
/// DPO dataset line {prompt, chosen, rejected, meta}.
json preference_record(const CandidateRecord& r);

struct ItemFailure {
  std::string id;
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
};

json to_json(const ItemFailure& f);

struct PreferenceRun {
  std::vector<CandidateRecord> candidates;  // sorted by (conversation id, section)
  std::vector<ItemFailure> failures;        // conversation order

  std::size_t kept_count() const;
};

/// contexts -> perturb -> generate -> adherence for both -> P_avg of both under x_o -> filter.
/// Data problems in one conversation are collected in failures; endpoint and
/// judge availability errors abort the run.
PreferenceRun run_preference_generation(std::span<const Conversation> conversations,
                                        std::span<const ProfileRecord> profiles, Provider& provider, Judge& judge,
                                        const PreferenceConfig& cfg);

// ---- expert annotations --------------------------------------------------

enum class ExpertVerdict { A, B, EquallyGood, EquallyBad };
std::string_view to_string(ExpertVerdict v) noexcept;
std::optional<ExpertVerdict> expert_verdict_from_string(std::string_view s);

struct ExpertAnnotationEvent {
  std::string session_id;
  std::size_t turn = 0;
  std::string candidate_a;
  std::string candidate_b;
  ExpertVerdict verdict = ExpertVerdict::A;
  char continuation_choice = 'A';  // 'A' or 'B'
  bool random_draw = false;        // true iff the continuation was drawn on a tie
  std::string timestamp;
  std::string annotator;
  std::vector<ChatMessage> prompt;  // transcript up to this turn, ending with the user message

  bool operator==(const ExpertAnnotationEvent&) const = default;
};

json to_json(const ExpertAnnotationEvent& e);
ExpertAnnotationEvent expert_event_from_json(const json& j);

struct ExpertFilterConfig {
  std::set<std::string> excluded_annotators;
  std::size_t min_session_turns = 0;  // sessions whose last annotated turn index + 1 is below this are dropped
};

struct ExpertIngestResult {
  std::vector<json> records;  // preference records, source "expert"
  std::size_t input_events = 0;
  std::size_t ties_excluded = 0;
  std::size_t annotator_excluded = 0;
  std::size_t short_session_excluded = 0;
};

/// A/B verdicts become pairs (chosen = picked candidate). Ties are dropped.
/// Throws UnresolvableSession when an event has no usable prompt.
ExpertIngestResult ingest_expert_annotations(std::span<const ExpertAnnotationEvent> events,
                                             const ExpertFilterConfig& cfg = {});

}  // namespace profsim
