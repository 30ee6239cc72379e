#include "profsim/dpo.hpp"

#include <cmath>

#include <fmt/format.h>

#include "profsim/chat.hpp"
#include "profsim/error.hpp"
#include "profsim/kernels.hpp"

namespace profsim {

void DpoConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("beta {} must be a finite value > 0", beta));
  }
}

double dpo_margin(const ScoredPair& p, double beta) {
  const double delta_w = p.logp_policy_chosen - p.logp_ref_chosen;
  const double delta_l = p.logp_policy_rejected - p.logp_ref_rejected;
  return beta * (delta_w - delta_l);
}

double neg_log_sigmoid(double z) { return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void check_batch(std::span<const ScoredPair> pairs, const DpoConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw Error(ErrorCode::EmptyBatch, "no preference pairs");
  kernels::check_finite(pairs);
}

}  // namespace

double dpo_loss(std::span<const ScoredPair> pairs, const DpoConfig& cfg) {
  check_batch(pairs, cfg);
  return kernels::dpo_loss_omp(pairs, cfg.beta);
}

double preference_accuracy(std::span<const ScoredPair> pairs, const DpoConfig& cfg) {
  check_batch(pairs, cfg);
  return static_cast<double>(kernels::count_correct_omp(pairs, cfg.beta)) / static_cast<double>(pairs.size());
}

std::vector<ScoredPair> dpo_loss_gradient(std::span<const ScoredPair> pairs, const DpoConfig& cfg) {
  check_batch(pairs, cfg);
  std::vector<ScoredPair> out(pairs.size());
  kernels::dpo_gradient_omp(pairs, cfg.beta, out);
  return out;
}

// ---- export --------------------------------------------------------------

namespace {

[[noreturn]] void bad_record(const std::string& why) { throw Error(ErrorCode::SchemaViolation, why); }

bool is_number_or_null(const json& j) { return j.is_null() || j.is_number(); }

}  // namespace

void validate_preference_record(const json& r) {
  if (!r.is_object()) bad_record("preference record must be an object");
  for (const char* key : {"prompt", "chosen", "rejected", "meta"}) {
    if (!r.contains(key)) bad_record(fmt::format("missing '{}'", key));
  }
  std::vector<ChatMessage> prompt;
  try {
    prompt = chat_messages_from_json(r["prompt"]);
  } catch (const Error& e) {
    bad_record(std::string("prompt: ") + e.what());
  }
  if (prompt.size() < 2 || prompt.front().role != Role::System || prompt.back().role != Role::User) {
    bad_record("prompt must start with a system message and end with a user message");
  }
  for (const char* key : {"chosen", "rejected"}) {
    if (!r[key].is_string() || trim(r[key].get<std::string>()).empty()) {
      bad_record(fmt::format("'{}' must be a non-empty string", key));
    }
  }
  const auto& meta = r["meta"];
  if (!meta.is_object()) bad_record("meta must be an object");
  if (!meta.contains("source") || !meta["source"].is_string()) bad_record("meta.source missing");
  const auto source = meta["source"].get<std::string>();
  if (source != "model" && source != "expert") bad_record("meta.source must be model or expert");
  for (const char* key : {"S_o", "S_n", "ratio", "diff"}) {
    if (!meta.contains(key)) bad_record(fmt::format("meta.{} missing", key));
  }
  if (source == "model") {
    for (const char* key : {"S_o", "S_n", "ratio"}) {
      if (!meta[key].is_number()) bad_record(fmt::format("meta.{} must be a number for model pairs", key));
    }
    if (!meta["diff"].is_object()) bad_record("meta.diff must be an object for model pairs");
  } else {
    for (const char* key : {"S_o", "S_n", "ratio"}) {
      if (!is_number_or_null(meta[key])) bad_record(fmt::format("meta.{} must be a number or null", key));
    }
  }
}

json to_json(const ExportManifest& m) {
  return json{{"path", m.path},
              {"total", m.total},
              {"by_source", m.by_source},
              {"schema_version", m.schema_version},
              {"sha256", m.sha256}};
}

ExportManifest export_dpo_dataset(std::span<const json> records, const std::filesystem::path& path) {
  ExportManifest m;
  m.path = path.filename().string();
  m.by_source = {{"expert", 0}, {"model", 0}};
  std::string buf;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      validate_preference_record(records[i]);
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaViolation, fmt::format("record {}: {}", i, e.what()));
    }
    ++m.by_source[records[i]["meta"]["source"].get<std::string>()];
    buf += records[i].dump();
    buf += '\n';
  }
  m.total = records.size();
  m.sha256 = sha256_hex(buf);
  write_text_file(path, buf);
  auto manifest_path = path;
  manifest_path += ".manifest.json";
  write_text_file(manifest_path, to_json(m).dump(2) + "\n");
  return m;
}

json trainer_defaults() {
  return json{
      {"sft", {{"epochs", 2}, {"batch_size", 16}, {"micro_batch_size", 2}, {"learning_rate", 5e-6},
               {"max_length", 4096}, {"loss_on", "assistant"}}},
      {"dpo",
       {{"stages", json::array({"model_preferences", "expert_preferences"})},
        {"epochs_per_stage", 1},
        {"batch_size", 8},
        {"micro_batch_size", 1},
        {"learning_rate", 5e-7},
        {"max_length", 5120},
        {"beta", 0.1}}},
      {"inference",
       {{"temperature", 1.0}, {"top_p", 0.8}, {"eos_bias", -4.0}, {"eos_decay_factor", 1.01}}},
  };
}

}  // namespace profsim
