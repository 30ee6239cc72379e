#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "profsim/util.hpp"

namespace profsim {

/// Summed token log-probabilities of the chosen and rejected responses under
/// the policy and the reference model.
struct ScoredPair {
  double logp_policy_chosen = 0.0;
  double logp_ref_chosen = 0.0;
  double logp_policy_rejected = 0.0;
  double logp_ref_rejected = 0.0;

  bool operator==(const ScoredPair&) const = default;
};

struct DpoConfig {
  double beta = 0.1;

  void validate() const;  // throws InvalidArgument unless beta > 0 and finite
};

/// beta * ((pc - rc) - (pr - rr)).
double dpo_margin(const ScoredPair& p, double beta);
/// -log sigmoid(z), stable for any finite z.
double neg_log_sigmoid(double z);
double sigmoid(double z);

/// Mean of -log sigmoid(margin). Throws EmptyBatch, NonFiniteInput, InvalidArgument.
double dpo_loss(std::span<const ScoredPair> pairs, const DpoConfig& cfg = {});
/// Fraction of pairs with margin > 0; ties are incorrect. Throws EmptyBatch, NonFiniteInput.
double preference_accuracy(std::span<const ScoredPair> pairs, const DpoConfig& cfg = {});
/// d(mean loss)/d(each of the four log-probabilities), one ScoredPair of partials per pair.
std::vector<ScoredPair> dpo_loss_gradient(std::span<const ScoredPair> pairs, const DpoConfig& cfg = {});

// ---- dataset export ------------------------------------------------------

inline constexpr int kPreferenceSchemaVersion = 1;

/// Throws SchemaViolation describing the first problem in a preference record.
void validate_preference_record(const json& record);

struct ExportManifest {
  std::string path;
  std::uint64_t total = 0;
  std::map<std::string, std::uint64_t> by_source;  // "model", "expert"
  int schema_version = kPreferenceSchemaVersion;
  std::string sha256;

  bool operator==(const ExportManifest&) const = default;
};

json to_json(const ExportManifest& m);

/// Validates every record, writes them as JSONL and a sibling "<path>.manifest.json".
/// Identical input gives byte-identical files. Throws SchemaViolation, IoFailure.
ExportManifest export_dpo_dataset(std::span<const json> records, const std::filesystem::path& path);

/// External trainer defaults (SFT, both DPO stages, inference decoding).
json trainer_defaults();

}  // namespace profsim
