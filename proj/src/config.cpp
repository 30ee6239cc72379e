#include "profsim/config.hpp"

#include <fmt/format.h>

#include <set>

namespace profsim {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) invalid(fmt::format("{} must be an object", where.empty() ? "config" : where));
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      invalid(fmt::format("unknown key '{}{}{}'", where, where.empty() ? "" : ".", k));
    }
  }
}

template <class T>
void read(const json& j, std::string_view key, T& out, std::string_view where = {}) {
  if (auto it = j.find(std::string(key)); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      invalid(fmt::format("'{}{}{}' has the wrong type", where, where.empty() ? "" : ".", key));
    }
  }
}

json path_json(const std::filesystem::path& p) { return p.empty() ? json(nullptr) : json(p.generic_string()); }

void read_path(const json& j, std::string_view key, std::filesystem::path& out) {
  if (auto it = j.find(std::string(key)); it != j.end()) {
    if (it->is_null()) out.clear();
    else if (it->is_string()) out = it->get<std::string>();
    else invalid(fmt::format("'{}' must be a path string", key));
  }
}

}  // namespace

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::filesystem::path PipelineConfig::work_path(std::string_view name) const { return resolve(work_dir) / name; }

json to_json(const PipelineConfig& c) {
  json inputs = json::array();
  for (const auto& in : c.inputs) {
    inputs.push_back({{"path", in.path.generic_string()},
                      {"source", in.source ? json(to_string(*in.source)) : json(nullptr)}});
  }
  json caps = json::object();
  for (const auto& [k, v] : c.rebalance_caps) caps[k] = v;
  json annotation{{"data_dir", c.annotation.data_dir.generic_string()},
                  {"host", c.annotation.host},
                  {"port", c.annotation.port},
                  {"token_env", c.annotation.token_env},
                  {"static_dir", c.annotation.static_dir ? path_json(*c.annotation.static_dir) : json(nullptr)}};
  return json{{"seed", c.seed},
              {"mock", c.mock},
              {"concurrency", c.concurrency},
              {"inputs", inputs},
              {"work_dir", c.work_dir.generic_string()},
              {"max_turns", c.max_turns},
              {"rebalance", {{"stratum_key", c.rebalance_stratum}, {"caps", caps}}},
              {"noise_ratio", c.noise_ratio},
              {"tau", c.tau},
              {"beta", c.beta},
              {"decoding", to_json(c.decoding)},
              {"judge_decoding", to_json(c.judge_decoding)},
              {"endpoints",
               {{"simulator", c.simulator ? to_json(*c.simulator) : json(nullptr)},
                {"judge", c.judge ? to_json(*c.judge) : json(nullptr)}}},
              {"eval_profiles", path_json(c.eval_profiles)},
              {"profile_pool", path_json(c.profile_pool)},
              {"expert",
               {{"events", path_json(c.expert_events)},
                {"excluded_annotators", c.excluded_annotators},
                {"min_session_turns", c.min_session_turns}}},
              {"annotation", annotation}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  reject_unknown(j, "",
                 {"seed", "mock", "concurrency", "inputs", "work_dir", "max_turns", "rebalance", "noise_ratio", "tau",
                  "beta", "decoding", "judge_decoding", "endpoints", "eval_profiles", "profile_pool", "expert",
                  "annotation"});
  PipelineConfig c;
  read(j, "seed", c.seed);
  read(j, "mock", c.mock);
  read(j, "concurrency", c.concurrency);
  read(j, "max_turns", c.max_turns);
  read(j, "noise_ratio", c.noise_ratio);
  if (auto it = j.find("tau"); it != j.end()) {
    // JSON has no infinity; null stands for an unbounded ratio threshold.
    if (it->is_null()) c.tau = std::numeric_limits<double>::infinity();
    else read(j, "tau", c.tau);
  }
  read(j, "beta", c.beta);
  read_path(j, "work_dir", c.work_dir);
  read_path(j, "eval_profiles", c.eval_profiles);
  read_path(j, "profile_pool", c.profile_pool);

  if (auto it = j.find("inputs"); it != j.end()) {
    if (!it->is_array()) invalid("'inputs' must be an array");
    for (const auto& in : *it) {
      reject_unknown(in, "inputs[]", {"path", "source"});
      CorpusInput ci;
      if (!in.contains("path") || !in["path"].is_string()) invalid("'inputs[].path' is required");
      ci.path = in["path"].get<std::string>();
      if (in.contains("source") && !in["source"].is_null()) {
        if (!in["source"].is_string()) invalid("'inputs[].source' must be a string");
        ci.source = source_from_string(in["source"].get<std::string>());
        if (!ci.source) invalid("unknown source '" + in["source"].get<std::string>() + "'");
      }
      c.inputs.push_back(std::move(ci));
    }
  }
  if (auto it = j.find("rebalance"); it != j.end()) {
    reject_unknown(*it, "rebalance", {"stratum_key", "caps"});
    read(*it, "stratum_key", c.rebalance_stratum, "rebalance");
    read(*it, "caps", c.rebalance_caps, "rebalance");
  }
  try {
    if (j.contains("decoding")) c.decoding = decoding_config_from_json(j["decoding"]);
    if (j.contains("judge_decoding")) c.judge_decoding = decoding_config_from_json(j["judge_decoding"]);
  } catch (const Error& e) {
    invalid(e.what());
  }
  if (auto it = j.find("endpoints"); it != j.end()) {
    reject_unknown(*it, "endpoints", {"simulator", "judge"});
    for (auto [key, slot] : {std::pair{"simulator", &c.simulator}, std::pair{"judge", &c.judge}}) {
      if (it->contains(key) && !(*it)[key].is_null()) *slot = http_provider_config_from_json((*it)[key]);
    }
  }
  if (auto it = j.find("expert"); it != j.end()) {
    reject_unknown(*it, "expert", {"events", "excluded_annotators", "min_session_turns"});
    read_path(*it, "events", c.expert_events);
    read(*it, "excluded_annotators", c.excluded_annotators, "expert");
    read(*it, "min_session_turns", c.min_session_turns, "expert");
  }
  if (auto it = j.find("annotation"); it != j.end()) {
    reject_unknown(*it, "annotation", {"data_dir", "host", "port", "token_env", "static_dir"});
    read_path(*it, "data_dir", c.annotation.data_dir);
    read(*it, "host", c.annotation.host, "annotation");
    read(*it, "port", c.annotation.port, "annotation");
    read(*it, "token_env", c.annotation.token_env, "annotation");
    if (it->contains("static_dir") && !(*it)["static_dir"].is_null()) {
      std::filesystem::path p;
      read_path(*it, "static_dir", p);
      c.annotation.static_dir = p;
    }
  }

  if (c.concurrency < 1) invalid("'concurrency' must be at least 1");
  if (c.max_turns < 4) invalid("'max_turns' must be at least 4");
  if (!(c.noise_ratio > 0.0 && c.noise_ratio <= 1.0)) invalid("'noise_ratio' must lie in (0, 1]");
  if (!(c.tau > 0.0)) invalid("'tau' must be positive");
  if (!(c.beta > 0.0) || !std::isfinite(c.beta)) invalid("'beta' must be positive");
  if (c.annotation.port < 0 || c.annotation.port > 65535) invalid("'annotation.port' out of range");
  if (c.work_dir.empty()) invalid("'work_dir' must not be empty");
  try {
    c.decoding.validate();
    c.judge_decoding.validate();
  } catch (const Error& e) {
    invalid(e.what());
  }
  return c;
}

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) invalid(fmt::format("override '{}' is not key=value", o));
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &config;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) invalid(fmt::format("override key '{}' is malformed", key));
      if (!node->is_object()) {
        if (!node->is_null()) invalid(fmt::format("override '{}' descends into a non-object", key));
        *node = json::object();
      }
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  std::filesystem::path base;
  if (path) {
    std::string text;
    try {
      text = read_text_file(*path);
    } catch (const Error& e) {
      invalid(e.what());
    }
    j = json::parse(text, nullptr, false);
    if (j.is_discarded()) invalid(fmt::format("{} is not valid JSON", path->string()));
    base = path->parent_path();
  }
  apply_overrides(j, overrides);
  auto c = pipeline_config_from_json(j);
  c.base_dir = base;
  return c;
}

std::string config_hash(const PipelineConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace profsim
