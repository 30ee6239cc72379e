#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "profsim/error.hpp"
#include "profsim/judge.hpp"
#include "profsim/profile.hpp"
#include "profsim/util.hpp"

namespace profsim {

enum class Speaker { Supporter, Client };
enum class Source { RED, HOPE, ESC, AnnoMI, Synthetic, Other };

std::string_view to_string(Speaker s) noexcept;
std::string_view to_string(Source s) noexcept;
std::optional<Speaker> speaker_from_string(std::string_view s);
std::optional<Source> source_from_string(std::string_view s);

struct Turn {
  Speaker speaker = Speaker::Client;
  std::string text;
  std::size_t index = 0;

  bool operator==(const Turn&) const = default;
};

struct Conversation {
  std::string id;
  Source source = Source::Other;
  std::vector<Turn> turns;
  std::map<std::string, std::string> labels;
  std::optional<bool> depression_related;

  bool operator==(const Conversation&) const = default;
};

/// Throws SchemaViolation naming the broken invariant.
void validate_conversation(const Conversation& c);

json to_json(const Conversation& c);
/// Canonical record -> Conversation. Missing "source" falls back to default_source
/// (or Other). Turn text is trimmed; indices are assigned. Throws SchemaViolation.
Conversation conversation_from_json(const json& j, std::optional<Source> default_source = std::nullopt);

// ---- ingestion -----------------------------------------------------------

struct ParseIssue {
  std::size_t line = 0;  // 1-based line of the offending record
  ErrorCode code = ErrorCode::SchemaViolation;
  std::string reason;
};

struct ParseResult {
  std::vector<Conversation> conversations;
  std::vector<ParseIssue> issues;
};

/// Reads a line-delimited corpus. Each line is either a canonical record
/// ({id, source, turns:[{speaker, text}], labels}) or one of the raw source
/// layouts, recognized by shape:
///   ESC     {dialog:[{speaker: seeker|supporter, content}], problem_type, ...}
///   RED     {thread_id, op, posts:[{author, text}]}  (op is the client)
///   AnnoMI  one row per utterance {transcript_id, interlocutor: therapist|client, utterance_text}
///   HOPE    one row per utterance {dialog_id, type: T|P, utterance}
/// Row layouts are grouped by their conversation key in order of first appearance.
/// Bad records become issues; the rest are returned in file order.
/// Throws FileUnreadable.
ParseResult parse_corpus(const std::filesystem::path& path, std::optional<Source> source = std::nullopt);
void write_corpus(const std::filesystem::path& path, std::span<const Conversation> conversations);
json to_json(const ParseIssue& issue);

/// "Supporter: ...\nClient: ..." lines, used in every judge prompt.
std::string format_transcript(std::span<const Turn> turns);
std::string format_transcript(const Conversation& c);

// ---- depression labelling ------------------------------------------------

struct LabelPolicy {
  enum class Mode { AssumePositive, UseExistingLabel, JudgeClassify };
  Mode mode = Mode::JudgeClassify;
  std::string field;                     // UseExistingLabel only
  std::set<std::string> positive_values;  // UseExistingLabel only

  static LabelPolicy assume_positive() { return {Mode::AssumePositive, {}, {}}; }
  static LabelPolicy use_existing(std::string field, std::set<std::string> values) {
    return {Mode::UseExistingLabel, std::move(field), std::move(values)};
  }
  static LabelPolicy judge_classify() { return {Mode::JudgeClassify, {}, {}}; }
};

/// RED: assume positive. ESC: problem_type == depression. Others: judge.
LabelPolicy default_label_policy(Source source);
std::string classification_prompt(const Conversation& c);
/// Applies the policy, stores the verdict in c.depression_related and returns it.
/// Throws MissingLabel, JudgeUnavailable, JudgeUnparseable.
bool classify_depression(Conversation& c, const LabelPolicy& policy, Judge& judge);

// ---- trait distribution --------------------------------------------------

struct TraitDistribution {
  std::string category;
  std::vector<std::pair<std::string, std::uint64_t>> counts;  // nonzero only, schema order

  bool operator==(const TraitDistribution&) const = default;
};

/// One entry per enumerated schema category, in table order. Symptom and
/// distortion categories count exhibitions per kind.
std::vector<TraitDistribution> compute_trait_distribution(std::span<const PsychologicalProfile> profiles);
/// "Category\tSubcategory\tCount" rows with a header line.
std::string format_trait_table(std::span<const TraitDistribution> dist);
json to_json(const TraitDistribution& d);

// ---- rebalancing ---------------------------------------------------------

struct RebalanceConfig {
  std::string stratum_key = "depression_severity";
  std::map<std::string, std::uint64_t> caps;  // subcategory label -> max retained
  std::uint64_t seed = 0;

  bool operator==(const RebalanceConfig&) const = default;
};

struct DropRecord {
  std::string id;
  std::string stratum;
  std::string reason = "cap_exceeded";

  bool operator==(const DropRecord&) const = default;
};

json to_json(const DropRecord& d);

struct RebalanceResult {
  std::vector<ProfileRecord> retained;  // input order
  std::vector<DropRecord> dropped;      // input order
};

/// Per-stratum caps with seeded uniform subsampling; uncapped strata pass through.
/// Throws UnknownStratumKey, UnknownCapSubcategory.
RebalanceResult rebalance(std::span<const ProfileRecord> items, const RebalanceConfig& cfg);

}  // namespace profsim
