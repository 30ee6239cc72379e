#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "profsim/corpus.hpp"
#include "profsim/gateway.hpp"
#include "profsim/preference.hpp"
#include "profsim/util.hpp"

namespace profsim {

struct CorpusInput {
  std::filesystem::path path;
  std::optional<Source> source;  // forced source; detected from the layout when absent

  bool operator==(const CorpusInput&) const = default;
};

struct AnnotationSettings {
  std::filesystem::path data_dir = "annotation_data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string token_env = "PROFSIM_ANNOTATION_TOKEN";
  std::optional<std::filesystem::path> static_dir;

  bool operator==(const AnnotationSettings&) const = default;
};

/// Effective run configuration: file values plus overrides. Relative paths are
/// resolved against base_dir (the directory of the config file).
struct PipelineConfig {
  std::uint64_t seed = 0;
  bool mock = false;
  int concurrency = 4;
  std::vector<CorpusInput> inputs;
  std::filesystem::path work_dir = "work";
  std::size_t max_turns = 40;
  std::map<std::string, std::uint64_t> rebalance_caps;
  std::string rebalance_stratum = "depression_severity";
  double noise_ratio = 0.3;
  double tau = kDefaultTau;
  double beta = 0.1;
  DecodingConfig decoding;        // simulator sampling
  DecodingConfig judge_decoding;  // judge sampling
  std::optional<HttpProviderConfig> simulator;
  std::optional<HttpProviderConfig> judge;
  std::filesystem::path eval_profiles;
  std::filesystem::path profile_pool;
  std::filesystem::path expert_events;
  std::vector<std::string> excluded_annotators;
  std::size_t min_session_turns = 0;
  AnnotationSettings annotation;

  std::filesystem::path base_dir;  // not serialized

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path work_path(std::string_view name) const;

  bool operator==(const PipelineConfig&) const = default;
};

json to_json(const PipelineConfig& c);
/// Throws ConfigInvalid naming the offending key; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const json& j);
/// Applies "a.b.c=value" overrides (value parsed as JSON, else taken as a string).
void apply_overrides(json& config, const std::vector<std::string>& overrides);
/// Reads the file (if any), applies overrides, validates. Throws ConfigInvalid.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::vector<std::string>& overrides = {});
/// sha256 of the canonical serialized effective config.
std::string config_hash(const PipelineConfig& c);

}  // namespace profsim
