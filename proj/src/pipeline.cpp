#include "profsim/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include "profsim/annotation.hpp"
#include "profsim/corpus.hpp"
#include "profsim/dpo.hpp"
#include "profsim/extraction.hpp"
#include "profsim/interviewer.hpp"
#include "profsim/preference.hpp"
#include "profsim/sft.hpp"

namespace profsim {

// ---- backends ------------------------------------------------------------

Provider& Backends::simulator() {
  if (!simulator_) {
    if (cfg_.mock) {
      simulator_ = std::make_unique<MockProvider>(cfg_.seed);
    } else {
      if (!cfg_.simulator) throw Error(ErrorCode::ConfigInvalid, "endpoints.simulator is required without --mock");
      simulator_ = std::make_unique<HttpProvider>(*cfg_.simulator);
    }
  }
  return *simulator_;
}

Judge& Backends::judge() {
  if (!judge_) {
    if (cfg_.mock) {
      judge_ = std::make_unique<MockJudge>(cfg_.seed);
    } else {
      const auto& ep = cfg_.judge ? cfg_.judge : cfg_.simulator;
      if (!ep) throw Error(ErrorCode::ConfigInvalid, "endpoints.judge is required without --mock");
      judge_provider_ = std::make_unique<HttpProvider>(*ep);
      judge_ = std::make_unique<ProviderJudge>(*judge_provider_, cfg_.judge_decoding);
    }
  }
  return *judge_;
}

// ---- manifest ------------------------------------------------------------

std::string manifest_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
    t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

json digests_json(const std::vector<FileDigest>& v) {
  json out = json::array();
  for (const auto& d : v) out.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return out;
}

std::vector<FileDigest> digests_from(const json& j) {
  std::vector<FileDigest> out;
  for (const auto& d : j) out.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

json to_json(const StageRecord& r) {
  return json{{"stage", r.stage},
              {"inputs", digests_json(r.inputs)},
              {"outputs", digests_json(r.outputs)},
              {"counts", r.counts},
              {"seed", r.seed},
              {"config_hash", r.config_hash},
              {"started_at", r.started_at},
              {"finished_at", r.finished_at}};
}

StageRecord stage_record_from_json(const json& j) {
  try {
    StageRecord r;
    r.stage = j.at("stage").get<std::string>();
    r.inputs = digests_from(j.at("inputs"));
    r.outputs = digests_from(j.at("outputs"));
    r.counts = j.at("counts").get<std::map<std::string, std::uint64_t>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.started_at = j.value("started_at", std::string());
    r.finished_at = j.value("finished_at", std::string());
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("manifest stage: ") + e.what());
  }
}

std::map<std::string, std::uint64_t> PipelineManifest::funnel() const {
  static const std::pair<std::string_view, std::string_view> kSources[] = {
      {"ingest", "parsed"},         {"label", "depression_related"},      {"extract-profiles", "profiled"},
      {"rebalance", "retained"},    {"build-sft", "sft_records"},         {"gen-prefs", "candidate_pairs"},
      {"gen-prefs", "kept_pairs"},
  };
  static const std::string_view kNames[] = {"parsed",      "depression_related", "profiled",  "rebalanced",
                                            "sft_records", "candidate_pairs",    "kept_pairs"};
  std::map<std::string, std::uint64_t> out;
  for (std::size_t i = 0; i < std::size(kSources); ++i) {
    for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
      if (it->stage != kSources[i].first) continue;
      if (auto c = it->counts.find(std::string(kSources[i].second)); c != it->counts.end()) {
        out[std::string(kNames[i])] = c->second;
      }
      break;
    }
  }
  return out;
}

bool PipelineManifest::funnel_is_monotone() const {
  const auto f = funnel();
  auto get = [&](const char* k) -> std::optional<std::uint64_t> {
    auto it = f.find(k);
    if (it == f.end()) return std::nullopt;
    return it->second;
  };
  const char* chain[] = {"parsed", "depression_related", "profiled", "rebalanced"};
  std::optional<std::uint64_t> prev;
  for (const char* k : chain) {
    auto v = get(k);
    if (!v) continue;
    if (prev && *v > *prev) return false;
    prev = v;
  }
  const auto cand = get("candidate_pairs");
  const auto kept = get("kept_pairs");
  if (cand && kept && *kept > *cand) return false;
  if (cand && get("rebalanced") && *cand > 3 * *get("rebalanced")) return false;
  return true;
}

json to_json(const PipelineManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) stages.push_back(to_json(s));
  return json{{"tool", "profsim"}, {"stages", stages}, {"funnel", m.funnel()}};
}

PipelineManifest read_manifest(const std::filesystem::path& path) {
  PipelineManifest m;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return m;
  const auto j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("stages")) throw Error(ErrorCode::SchemaViolation, path.string() + ": bad manifest");
  for (const auto& s : j.at("stages")) m.stages.push_back(stage_record_from_json(s));
  return m;
}

void write_manifest(const std::filesystem::path& path, const PipelineManifest& m) {
  write_text_file(path, to_json(m).dump(2) + "\n");
}

void record_stage(const PipelineConfig& cfg, const StageRecord& r) {
  const auto path = cfg.work_path(files::kManifest);
  auto m = read_manifest(path);
  m.stages.push_back(r);
  write_manifest(path, m);
}

// ---- stage helpers -------------------------------------------------------

namespace {

class StageScope {
 public:
  StageScope(const PipelineConfig& cfg, std::string name) : cfg_(cfg) {
    rec_.stage = std::move(name);
    rec_.seed = cfg.seed;
    rec_.config_hash = config_hash(cfg);
    rec_.started_at = manifest_timestamp();
    spdlog::info("stage {}: start", rec_.stage);
  }

  void input(const std::filesystem::path& p) { rec_.inputs.push_back(digest(p)); }
  void output(const std::filesystem::path& p) { rec_.outputs.push_back(digest(p)); }
  void count(const std::string& k, std::uint64_t v) { rec_.counts[k] = v; }

  StageRecord finish() {
    rec_.finished_at = manifest_timestamp();
    spdlog::info("stage {}: done", rec_.stage);
    return rec_;
  }

 private:
  FileDigest digest(const std::filesystem::path& p) const {
    const auto work = std::filesystem::weakly_canonical(cfg_.resolve(cfg_.work_dir));
    const auto abs = std::filesystem::weakly_canonical(p);
    auto rel = abs.lexically_relative(work);
    std::string shown;
    if (!rel.empty() && *rel.begin() != "..") {
      shown = rel.generic_string();
    } else if (!cfg_.base_dir.empty()) {
      auto r2 = abs.lexically_relative(std::filesystem::weakly_canonical(cfg_.base_dir));
      shown = (!r2.empty() && *r2.begin() != "..") ? r2.generic_string() : abs.generic_string();
    } else {
      shown = p.generic_string();
    }
    return {shown, sha256_file(p)};
  }

  const PipelineConfig& cfg_;
  StageRecord rec_;
};

std::vector<Conversation> read_conversations(const std::filesystem::path& path) {
  std::vector<Conversation> out;
  for (const auto& j : read_jsonl_strict(path)) out.push_back(conversation_from_json(j));
  return out;
}

template <class T>
std::vector<json> to_json_lines(const std::vector<T>& items) {
  std::vector<json> out;
  out.reserve(items.size());
  for (const auto& x : items) out.push_back(to_json(x));
  return out;
}

bool is_endpoint_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::RateLimited:
    case ErrorCode::MalformedResponse:
    case ErrorCode::ScoringUnsupported:
    case ErrorCode::JudgeUnavailable:
    case ErrorCode::SummarizerUnavailable:
      return true;
    default:
      return false;
  }
}

std::filesystem::path require_file(const PipelineConfig& cfg, std::string_view name) {
  auto p = cfg.work_path(name);
  std::error_code ec;
  if (!std::filesystem::exists(p, ec)) {
    throw Error(ErrorCode::FileUnreadable, fmt::format("{} not found; run the earlier stage first", p.string()));
  }
  return p;
}

}  // namespace

// ---- stages --------------------------------------------------------------

StageRecord stage_ingest(const PipelineConfig& cfg) {
  StageScope scope(cfg, "ingest");
  if (cfg.inputs.empty()) throw Error(ErrorCode::ConfigInvalid, "'inputs' lists no corpus files");
  std::vector<Conversation> all;
  std::vector<json> issues;
  std::set<std::string> seen;
  std::uint64_t duplicates = 0;
  for (const auto& in : cfg.inputs) {
    const auto path = cfg.resolve(in.path);
    scope.input(path);
    auto parsed = parse_corpus(path, in.source);
    for (auto& issue : parsed.issues) {
      json j = to_json(issue);
      j["file"] = in.path.generic_string();
      issues.push_back(std::move(j));
    }
    for (auto& c : parsed.conversations) {
      if (!seen.insert(c.id).second) {
        ++duplicates;
        issues.push_back({{"file", in.path.generic_string()},
                          {"line", 0},
                          {"code", to_string(ErrorCode::DuplicateId)},
                          {"reason", "duplicate conversation id '" + c.id + "' across inputs"}});
        continue;
      }
      all.push_back(std::move(c));
    }
  }
  const auto out = cfg.work_path(files::kCorpus);
  write_corpus(out, all);
  write_jsonl(cfg.work_path(files::kIngestIssues), issues);
  scope.output(out);
  scope.count("parsed", all.size());
  scope.count("issues", issues.size());
  scope.count("cross_file_duplicates", duplicates);
  return scope.finish();
}

StageRecord stage_label(const PipelineConfig& cfg, Backends& b) {
  StageScope scope(cfg, "label");
  const auto in = require_file(cfg, files::kCorpus);
  scope.input(in);
  auto convs = read_conversations(in);
  std::vector<std::optional<ItemFailure>> failures(convs.size());
  const bool need_judge = std::any_of(convs.begin(), convs.end(), [](const Conversation& c) {
    return default_label_policy(c.source).mode == LabelPolicy::Mode::JudgeClassify;
  });
  ScriptedJudge no_judge([](const JudgeRequest&) -> std::string {
    throw Error(ErrorCode::JudgeUnavailable, "no judge configured");
  });
  Judge& judge = need_judge ? b.judge() : no_judge;
  parallel_for(convs.size(), cfg.concurrency, [&](std::size_t i) {
    auto& c = convs[i];
    const auto policy = default_label_policy(c.source);
    try {
      classify_depression(c, policy, judge);
    } catch (const Error& e) {
      if (is_endpoint_error(e.code())) throw;
      failures[i] = ItemFailure{c.id, e.code(), e.what()};
    }
  });
  std::vector<Conversation> labeled;
  std::vector<json> failed;
  std::uint64_t positive = 0;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (failures[i]) {
      failed.push_back(to_json(*failures[i]));
      continue;
    }
    if (convs[i].depression_related == true) ++positive;
    labeled.push_back(std::move(convs[i]));
  }
  const auto out = cfg.work_path(files::kLabeled);
  write_corpus(out, labeled);
  write_jsonl(cfg.work_path(files::kLabelFailures), failed);
  scope.output(out);
  scope.count("input", convs.size());
  scope.count("labeled", labeled.size());
  scope.count("depression_related", positive);
  scope.count("failures", failed.size());
  return scope.finish();
}

StageRecord stage_extract_profiles(const PipelineConfig& cfg, Backends& b) {
  StageScope scope(cfg, "extract-profiles");
  const auto in = require_file(cfg, files::kLabeled);
  scope.input(in);
  std::vector<Conversation> positives;
  for (auto& c : read_conversations(in)) {
    if (c.depression_related == true) positives.push_back(std::move(c));
  }
  std::vector<std::optional<ExtractionResult>> results(positives.size());
  Judge& judge = b.judge();
  parallel_for(positives.size(), cfg.concurrency,
               [&](std::size_t i) { results[i] = extract_profile(positives[i], judge); });
  std::vector<ProfileRecord> profiles;
  std::vector<json> failed;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto& r = *results[i];
    if (r.usable()) {
      profiles.push_back({positives[i].id, r.profile});
      continue;
    }
    json reasons = json::array();
    for (const auto& f : r.failures) reasons.push_back({{"path", f.path}, {"code", to_string(f.code)}, {"message", f.message}});
    for (const auto& v : validate_for_roleplay(r.profile)) {
      reasons.push_back({{"path", v.path}, {"code", to_string(ErrorCode::InvalidProfile)}, {"message", v.message}});
    }
    failed.push_back({{"id", positives[i].id}, {"reasons", reasons}});
  }
  const auto out = cfg.work_path(files::kProfiles);
  write_profiles(out, profiles);
  write_jsonl(cfg.work_path(files::kExtractionFailures), failed);
  scope.output(out);
  scope.count("attempted", positives.size());
  scope.count("profiled", profiles.size());
  scope.count("unusable", failed.size());
  return scope.finish();
}

StageRecord stage_distribution(const PipelineConfig& cfg, const StageOptions& opt) {
  StageScope scope(cfg, "distribution");
  const auto in = opt.input ? *opt.input : require_file(cfg, files::kProfiles);
  scope.input(in);
  std::vector<PsychologicalProfile> profiles;
  for (auto& r : read_profiles(in)) profiles.push_back(std::move(r.profile));
  const auto dist = compute_trait_distribution(profiles);
  const auto table = format_trait_table(dist);
  const auto out = cfg.work_path(files::kDistribution);
  write_text_file(out, table);
  if (opt.text_out) *opt.text_out = table;
  scope.output(out);
  scope.count("profiles", profiles.size());
  return scope.finish();
}

StageRecord stage_rebalance(const PipelineConfig& cfg) {
  StageScope scope(cfg, "rebalance");
  const auto in = require_file(cfg, files::kProfiles);
  scope.input(in);
  const auto profiles = read_profiles(in);
  const auto result = rebalance(profiles, RebalanceConfig{cfg.rebalance_stratum, cfg.rebalance_caps, cfg.seed});
  const auto out = cfg.work_path(files::kRebalanced);
  write_profiles(out, result.retained);
  write_jsonl(cfg.work_path(files::kRebalanceDrops), to_json_lines(result.dropped));
  scope.output(out);
  scope.count("input", profiles.size());
  scope.count("retained", result.retained.size());
  scope.count("dropped", result.dropped.size());
  return scope.finish();
}

namespace {

/// Conversations from labeled.jsonl that have a profile in `profiles`, in profile order.
std::vector<Conversation> conversations_for(const std::vector<ProfileRecord>& profiles,
                                            const std::filesystem::path& labeled) {
  std::map<std::string, Conversation> by_id;
  for (auto& c : read_conversations(labeled)) by_id.emplace(c.id, std::move(c));
  std::vector<Conversation> out;
  for (const auto& p : profiles) {
    auto it = by_id.find(p.conversation_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::SchemaViolation, "profile '" + p.conversation_id + "' has no labeled conversation");
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

StageRecord stage_build_sft(const PipelineConfig& cfg, Backends& b) {
  StageScope scope(cfg, "build-sft");
  const auto labeled = require_file(cfg, files::kLabeled);
  const auto prof_path = require_file(cfg, files::kRebalanced);
  scope.input(labeled);
  scope.input(prof_path);
  const auto profiles = read_profiles(prof_path);
  const auto convs = conversations_for(profiles, labeled);
  std::vector<std::vector<ChatRecord>> per(convs.size());
  Judge& judge = b.judge();
  parallel_for(convs.size(), cfg.concurrency, [&](std::size_t i) {
    const auto& conv = convs[i];
    const auto split = segment_sessions(conv, cfg.max_turns, judge);
    const std::span<const Turn> turns(conv.turns);
    for (std::size_t k = 0; k < split.sessions.size(); ++k) {
      const auto& s = split.sessions[k];
      auto rec = build_sft_record(turns.subspan(s.begin, s.end - s.begin), profiles[i].profile, s.counseling_history);
      rec.id = fmt::format("{}#s{}", conv.id, k + 1);
      validate_chat_record(rec);
      per[i].push_back(std::move(rec));
    }
  });
  std::vector<json> lines;
  std::uint64_t with_history = 0;
  for (const auto& v : per) {
    for (const auto& r : v) {
      lines.push_back(to_json(r));
      if (r.messages.front().content.find("Counseling History") != std::string::npos) ++with_history;
    }
  }
  const auto out = cfg.work_path(files::kSft);
  write_jsonl(out, lines);
  scope.output(out);
  scope.count("conversations", convs.size());
  scope.count("sft_records", lines.size());
  scope.count("with_history", with_history);
  return scope.finish();
}

StageRecord stage_gen_prefs(const PipelineConfig& cfg, Backends& b) {
  StageScope scope(cfg, "gen-prefs");
  const auto labeled = require_file(cfg, files::kLabeled);
  const auto prof_path = require_file(cfg, files::kRebalanced);
  scope.input(labeled);
  scope.input(prof_path);
  const auto profiles = read_profiles(prof_path);
  const auto convs = conversations_for(profiles, labeled);
  PreferenceConfig pc;
  pc.noise_ratio = cfg.noise_ratio;
  pc.tau = cfg.tau;
  pc.seed = cfg.seed;
  pc.decoding = cfg.decoding;
  pc.concurrency = cfg.concurrency;
  const auto run = run_preference_generation(convs, profiles, b.simulator(), b.judge(), pc);

  std::vector<json> audit, kept, failures;
  std::uint64_t tie = 0, ratio = 0;
  for (const auto& c : run.candidates) {
    audit.push_back(to_json(c));
    if (c.kept) kept.push_back(preference_record(c));
    else if (c.drop_reason == DropReason::AdherenceTie) ++tie;
    else ++ratio;
  }
  for (const auto& f : run.failures) failures.push_back(to_json(f));
  const auto audit_path = cfg.work_path(files::kAudit);
  const auto kept_path = cfg.work_path(files::kModelPreferences);
  write_jsonl(audit_path, audit);
  write_jsonl(kept_path, kept);
  write_jsonl(cfg.work_path(files::kPreferenceFailures), failures);
  scope.output(audit_path);
  scope.output(kept_path);
  scope.count("conversations", convs.size());
  scope.count("candidate_pairs", run.candidates.size());
  scope.count("kept_pairs", kept.size());
  scope.count("dropped_adherence_tie", tie);
  scope.count("dropped_ratio_exceeded", ratio);
  scope.count("failures", failures.size());
  return scope.finish();
}

StageRecord stage_ingest_expert(const PipelineConfig& cfg, const StageOptions& opt) {
  StageScope scope(cfg, "ingest-expert");
  std::filesystem::path in = opt.input ? *opt.input : cfg.resolve(cfg.expert_events);
  if (in.empty()) throw Error(ErrorCode::ConfigInvalid, "no expert events given (expert.events or --input)");
  std::vector<ExpertAnnotationEvent> events;
  std::error_code ec;
  if (std::filesystem::is_directory(in, ec)) {
    MockProvider unused;
    AnnotationStore store(AnnotationConfig{in, cfg.seed, cfg.decoding}, {}, unused);
    events = store.export_preferences().events;
  } else {
    scope.input(in);
    for (const auto& j : read_jsonl_strict(in)) events.push_back(expert_event_from_json(j));
  }
  ExpertFilterConfig fc;
  fc.excluded_annotators.insert(cfg.excluded_annotators.begin(), cfg.excluded_annotators.end());
  fc.min_session_turns = cfg.min_session_turns;
  const auto result = ingest_expert_annotations(events, fc);
  const auto out = cfg.work_path(files::kExpertPreferences);
  write_jsonl(out, result.records);
  scope.output(out);
  scope.count("input_events", result.input_events);
  scope.count("pairs", result.records.size());
  scope.count("ties_excluded", result.ties_excluded);
  scope.count("annotator_excluded", result.annotator_excluded);
  scope.count("short_session_excluded", result.short_session_excluded);
  return scope.finish();
}

StageRecord stage_export_dpo(const PipelineConfig& cfg) {
  StageScope scope(cfg, "export-dpo");
  std::vector<json> records;
  for (auto name : {files::kModelPreferences, files::kExpertPreferences}) {
    const auto p = cfg.work_path(name);
    std::error_code ec;
    if (!std::filesystem::exists(p, ec)) continue;
    scope.input(p);
    for (auto& j : read_jsonl_strict(p)) records.push_back(std::move(j));
  }
  const auto out = cfg.work_path(files::kDpoDataset);
  const auto manifest = export_dpo_dataset(records, out);
  auto defaults = trainer_defaults();
  defaults["dpo"]["beta"] = cfg.beta;
  const auto defaults_path = cfg.work_path(files::kTrainerDefaults);
  write_text_file(defaults_path, defaults.dump(2) + "\n");
  scope.output(out);
  scope.output(defaults_path);
  scope.count("total", manifest.total);
  for (const auto& [src, n] : manifest.by_source) scope.count(src, n);
  return scope.finish();
}

StageRecord stage_dpo_check(const PipelineConfig& cfg, const StageOptions& opt) {
  StageScope scope(cfg, "dpo-check");
  const auto in = opt.input ? *opt.input : require_file(cfg, files::kDpoDataset);
  scope.input(in);
  const auto lines = read_jsonl_strict(in);
  std::vector<ScoredPair> pairs;
  std::uint64_t preference_records = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& j = lines[i];
    if (j.contains("logp_policy_chosen")) {
      try {
        pairs.push_back({j.at("logp_policy_chosen").get<double>(), j.at("logp_ref_chosen").get<double>(),
                         j.at("logp_policy_rejected").get<double>(), j.at("logp_ref_rejected").get<double>()});
      } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, fmt::format("line {}: {}", i + 1, e.what()));
      }
    } else {
      try {
        validate_preference_record(j);
      } catch (const Error& e) {
        throw Error(e.code(), fmt::format("line {}: {}", i + 1, e.what()));
      }
      ++preference_records;
    }
  }
  json report{{"preference_records", preference_records}, {"scored_pairs", pairs.size()}, {"beta", cfg.beta}};
  if (!pairs.empty()) {
    const DpoConfig dc{cfg.beta};
    report["loss"] = dpo_loss(pairs, dc);
    report["accuracy"] = preference_accuracy(pairs, dc);
  }
  const auto out = cfg.work_path(files::kDpoCheck);
  write_text_file(out, report.dump(2) + "\n");
  if (opt.text_out) *opt.text_out = report.dump(2);
  scope.output(out);
  scope.count("preference_records", preference_records);
  scope.count("scored_pairs", pairs.size());
  return scope.finish();
}

StageRecord stage_interview(const PipelineConfig& cfg, Backends& b, const StageOptions& opt) {
  StageScope scope(cfg, "interview");
  const auto in = opt.input ? *opt.input : cfg.resolve(cfg.eval_profiles);
  if (in.empty()) throw Error(ErrorCode::ConfigInvalid, "no evaluation profiles given (eval_profiles or --input)");
  scope.input(in);
  const auto profiles = read_profiles(in);
  EvaluationConfig ec;
  ec.decoding = cfg.decoding;
  ec.concurrency = cfg.concurrency;
  const auto ratings = run_evaluation(profiles, b.simulator(), b.judge(), ec);
  const auto out = cfg.work_path(files::kRatings);
  write_jsonl(out, to_json_lines(ratings));
  scope.output(out);
  scope.count("profiles", profiles.size());
  scope.count("interviews", ratings.size());
  return scope.finish();
}

StageRecord stage_report(const PipelineConfig& cfg, const StageOptions& opt) {
  StageScope scope(cfg, "report");
  const auto in = opt.input ? *opt.input : require_file(cfg, files::kRatings);
  scope.input(in);
  std::vector<RatingEntry> ratings;
  for (const auto& j : read_jsonl_strict(in)) ratings.push_back(rating_entry_from_json(j));
  const auto card = aggregate_scores(ratings);
  const auto table = format_scorecard(card);
  const auto out = cfg.work_path(files::kReport);
  write_text_file(out, table);
  if (opt.text_out) *opt.text_out = table;
  scope.output(out);
  scope.count("ratings", ratings.size());
  return scope.finish();
}

PipelineManifest run_pipeline(const PipelineConfig& cfg) {
  Backends backends(cfg);
  PipelineManifest manifest;
  const auto manifest_path = cfg.work_path(files::kManifest);
  write_manifest(manifest_path, manifest);
  using StageFn = std::function<StageRecord()>;
  const std::pair<const char*, StageFn> stages[] = {
      {"ingest", [&] { return stage_ingest(cfg); }},
      {"label", [&] { return stage_label(cfg, backends); }},
      {"extract-profiles", [&] { return stage_extract_profiles(cfg, backends); }},
      {"rebalance", [&] { return stage_rebalance(cfg); }},
      {"build-sft", [&] { return stage_build_sft(cfg, backends); }},
      {"gen-prefs", [&] { return stage_gen_prefs(cfg, backends); }},
      {"export-dpo", [&] { return stage_export_dpo(cfg); }},
  };
  for (const auto& [name, fn] : stages) {
    try {
      manifest.stages.push_back(fn());
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("stage '{}': {}", name, e.what()));
    }
    write_manifest(manifest_path, manifest);
  }
  return manifest;
}

}  // namespace profsim
