// profsim command line: one subcommand per pipeline stage plus the annotation server.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "profsim/annotation.hpp"
#include "profsim/pipeline.hpp"

namespace {

using namespace profsim;

enum Exit { kOk = 0, kUsage = 2, kStage = 3, kEndpoint = 4 };

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::UnknownSubcommand:
      return kUsage;
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::RateLimited:
    case ErrorCode::MalformedResponse:
    case ErrorCode::ScoringUnsupported:
    case ErrorCode::JudgeUnavailable:
    case ErrorCode::SummarizerUnavailable:
      return kEndpoint;
    default:
      return kStage;
  }
}

struct GlobalOptions {
  std::string config;
  std::vector<std::string> overrides;
  bool mock = false;
  std::optional<std::uint64_t> seed;
  std::string work_dir;
  bool verbose = false;
  bool quiet = false;
};

PipelineConfig effective_config(const GlobalOptions& g) {
  auto overrides = g.overrides;
  if (g.mock) overrides.push_back("mock=true");
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (!g.work_dir.empty()) overrides.push_back("work_dir=" + json(g.work_dir).dump());
  std::optional<std::filesystem::path> path;
  if (!g.config.empty()) path = g.config;
  return load_config(path, overrides);
}

int serve(const PipelineConfig& cfg) {
  if (cfg.profile_pool.empty()) throw Error(ErrorCode::ConfigInvalid, "'profile_pool' is required to serve");
  auto pool = read_profiles(cfg.resolve(cfg.profile_pool));
  Backends backends(cfg);
  AnnotationStore store(AnnotationConfig{cfg.resolve(cfg.annotation.data_dir), cfg.seed, cfg.decoding},
                        std::move(pool), backends.simulator());
  AnnotationServerConfig sc;
  sc.host = cfg.annotation.host;
  sc.port = cfg.annotation.port;
  if (const char* t = std::getenv(cfg.annotation.token_env.c_str())) sc.token = t;
  if (sc.token.empty()) spdlog::warn("{} is not set; the API is unauthenticated", cfg.annotation.token_env);
  if (cfg.annotation.static_dir) sc.static_dir = cfg.resolve(*cfg.annotation.static_dir);
  AnnotationServer server(store, sc);
  server.run();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"profsim: profile-guided client simulation data pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("-c,--config", g.config, "pipeline configuration file (JSON)");
  app.add_option("--set", g.overrides, "override a config value, e.g. --set tau=2.5 (repeatable)");
  app.add_flag("--mock", g.mock, "use deterministic offline providers");
  app.add_option("--seed", g.seed, "override the run seed");
  app.add_option("--work-dir", g.work_dir, "override the work directory");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");
  app.add_flag("-q,--quiet", g.quiet, "only log errors");

  std::optional<std::string> input;
  auto with_input = [&](CLI::App* sub, const char* what) { sub->add_option("-i,--input", input, what); };

  auto* ingest = app.add_subcommand("ingest", "parse corpus inputs into the canonical corpus");
  auto* label = app.add_subcommand("label", "label depression-related conversations");
  auto* extract = app.add_subcommand("extract-profiles", "extract psychological profiles");
  auto* distribution = app.add_subcommand("distribution", "print the trait distribution table");
  with_input(distribution, "profiles file (default: work profiles)");
  auto* rebalance_cmd = app.add_subcommand("rebalance", "apply per-stratum caps");
  auto* build_sft = app.add_subcommand("build-sft", "build instruction-tuning records");
  auto* gen_prefs = app.add_subcommand("gen-prefs", "generate and filter model preference pairs");
  auto* ingest_expert = app.add_subcommand("ingest-expert", "turn expert annotations into preference pairs");
  with_input(ingest_expert, "event JSONL file or annotation data directory");
  auto* dpo_check = app.add_subcommand("dpo-check", "validate a preference dataset or score DPO pairs");
  with_input(dpo_check, "preference dataset or scored pairs (default: work dpo dataset)");
  auto* export_dpo = app.add_subcommand("export-dpo", "write the DPO dataset, manifest and trainer defaults");
  auto* interview = app.add_subcommand("interview", "run interviewer evaluations");
  with_input(interview, "evaluation profiles (default: eval_profiles)");
  auto* report = app.add_subcommand("report", "aggregate interview ratings into the report table");
  with_input(report, "ratings log (default: work ratings)");
  auto* serve_cmd = app.add_subcommand("serve", "run the annotation service");
  auto* run_all = app.add_subcommand("run-pipeline", "run every data stage in order");
  auto* show_config = app.add_subcommand("config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  spdlog::set_level(g.quiet ? spdlog::level::err : g.verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_default_logger(spdlog::stderr_color_mt("profsim"));
  spdlog::set_level(g.quiet ? spdlog::level::err : g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const auto cfg = effective_config(g);
    if (show_config->parsed()) {
      std::cout << to_json(cfg).dump(2) << "\n";
      return kOk;
    }
    if (serve_cmd->parsed()) return serve(cfg);
    if (run_all->parsed()) {
      const auto m = run_pipeline(cfg);
      std::cout << json(m.funnel()).dump(2) << "\n";
      return m.funnel_is_monotone() ? kOk : kStage;
    }

    Backends backends(cfg);
    std::string text;
    StageOptions opt;
    if (input) opt.input = std::filesystem::path(*input);
    opt.text_out = &text;
    StageRecord rec;
    if (ingest->parsed()) rec = stage_ingest(cfg);
    else if (label->parsed()) rec = stage_label(cfg, backends);
    else if (extract->parsed()) rec = stage_extract_profiles(cfg, backends);
    else if (distribution->parsed()) rec = stage_distribution(cfg, opt);
    else if (rebalance_cmd->parsed()) rec = stage_rebalance(cfg);
    else if (build_sft->parsed()) rec = stage_build_sft(cfg, backends);
    else if (gen_prefs->parsed()) rec = stage_gen_prefs(cfg, backends);
    else if (ingest_expert->parsed()) rec = stage_ingest_expert(cfg, opt);
    else if (dpo_check->parsed()) rec = stage_dpo_check(cfg, opt);
    else if (export_dpo->parsed()) rec = stage_export_dpo(cfg);
    else if (interview->parsed()) rec = stage_interview(cfg, backends, opt);
    else if (report->parsed()) rec = stage_report(cfg, opt);
    else throw Error(ErrorCode::UnknownSubcommand, "no subcommand given");
    record_stage(cfg, rec);
    if (!text.empty()) std::cout << text << (text.back() == '\n' ? "" : "\n");
    else std::cout << json(rec.counts).dump() << "\n";
    return kOk;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kStage;
  }
}
