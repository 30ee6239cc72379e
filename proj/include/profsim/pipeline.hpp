#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "profsim/config.hpp"
#include "profsim/gateway.hpp"
#include "profsim/judge.hpp"

namespace profsim {

/// Simulator provider and judge for a run, built on first use so that stages
/// without model calls need no endpoint configuration.
class Backends {
 public:
  explicit Backends(const PipelineConfig& cfg) : cfg_(cfg) {}
  Provider& simulator();
  Judge& judge();

 private:
  const PipelineConfig& cfg_;
  std::unique_ptr<Provider> simulator_;
  std::unique_ptr<Provider> judge_provider_;
  std::unique_ptr<Judge> judge_;
};

struct FileDigest {
  std::string path;  // relative to the work directory when inside it
  std::string sha256;

  bool operator==(const FileDigest&) const = default;
};

struct StageRecord {
  std::string stage;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string started_at;
  std::string finished_at;

  bool operator==(const StageRecord&) const = default;
};

json to_json(const StageRecord& r);
StageRecord stage_record_from_json(const json& j);

struct PipelineManifest {
  std::vector<StageRecord> stages;

  /// parsed, depression_related, profiled, rebalanced, sft_records,
  /// candidate_pairs, kept_pairs (latest record of each stage).
  std::map<std::string, std::uint64_t> funnel() const;
  /// parsed >= depression_related >= profiled >= rebalanced,
  /// kept_pairs <= candidate_pairs <= 3 * rebalanced.
  bool funnel_is_monotone() const;
};

json to_json(const PipelineManifest& m);
PipelineManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const PipelineManifest& m);

/// UTC ISO-8601; SOURCE_DATE_EPOCH pins it for reproducible manifests.
std::string manifest_timestamp();

// File names inside the work directory.
namespace files {
inline constexpr std::string_view kCorpus = "corpus.jsonl";
inline constexpr std::string_view kIngestIssues = "ingest_issues.jsonl";
inline constexpr std::string_view kLabeled = "labeled.jsonl";
inline constexpr std::string_view kLabelFailures = "label_failures.jsonl";
inline constexpr std::string_view kProfiles = "profiles.jsonl";
inline constexpr std::string_view kExtractionFailures = "extraction_failures.jsonl";
inline constexpr std::string_view kDistribution = "trait_distribution.tsv";
inline constexpr std::string_view kRebalanced = "rebalanced_profiles.jsonl";
inline constexpr std::string_view kRebalanceDrops = "rebalance_drops.jsonl";
inline constexpr std::string_view kSft = "sft.jsonl";
inline constexpr std::string_view kAudit = "preference_audit.jsonl";
inline constexpr std::string_view kModelPreferences = "model_preferences.jsonl";
inline constexpr std::string_view kPreferenceFailures = "preference_failures.jsonl";
inline constexpr std::string_view kExpertPreferences = "expert_preferences.jsonl";
inline constexpr std::string_view kDpoDataset = "dpo_dataset.jsonl";
inline constexpr std::string_view kTrainerDefaults = "trainer_defaults.json";
inline constexpr std::string_view kDpoCheck = "dpo_check.json";
inline constexpr std::string_view kRatings = "interview_ratings.jsonl";
inline constexpr std::string_view kReport = "interview_report.md";
inline constexpr std::string_view kManifest = "manifest.json";
}  // namespace files

struct StageOptions {
  std::optional<std::filesystem::path> input;  // overrides the stage's default input
  std::string* text_out = nullptr;             // human-readable result (tables, reports)
};

StageRecord stage_ingest(const PipelineConfig& cfg);
StageRecord stage_label(const PipelineConfig& cfg, Backends& b);
StageRecord stage_extract_profiles(const PipelineConfig& cfg, Backends& b);
StageRecord stage_distribution(const PipelineConfig& cfg, const StageOptions& opt = {});
StageRecord stage_rebalance(const PipelineConfig& cfg);
StageRecord stage_build_sft(const PipelineConfig& cfg, Backends& b);
StageRecord stage_gen_prefs(const PipelineConfig& cfg, Backends& b);
/// Input is an event JSONL file or an annotation data directory.
StageRecord stage_ingest_expert(const PipelineConfig& cfg, const StageOptions& opt = {});
/// Input: scored pairs (logp_* fields) are evaluated; preference records are validated.
StageRecord stage_dpo_check(const PipelineConfig& cfg, const StageOptions& opt = {});
StageRecord stage_export_dpo(const PipelineConfig& cfg);
StageRecord stage_interview(const PipelineConfig& cfg, Backends& b, const StageOptions& opt = {});
StageRecord stage_report(const PipelineConfig& cfg, const StageOptions& opt = {});

/// Appends a stage record to <work_dir>/manifest.json.
void record_stage(const PipelineConfig& cfg, const StageRecord& r);

/// ingest -> label -> extract-profiles -> rebalance -> build-sft -> gen-prefs ->
/// export-dpo, halting on the first failure (the error names the stage).
PipelineManifest run_pipeline(const PipelineConfig& cfg);

}  // namespace profsim
