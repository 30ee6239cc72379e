#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>

#include "profsim/pipeline.hpp"
#include "profsim/util.hpp"
#include "testkit.hpp"

using namespace profsim;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr discarded; returns the exit status and stdout.
Run cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + " \"" PROFSIM_CLI "\" " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int raw = ::pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string fixture_config() { return "-c \"" + (testkit::fixtures_dir() / "pipeline.json").string() + "\""; }

std::string work(const testkit::TempDir& d) { return "--work-dir \"" + d.path().string() + "\""; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").status, 2);
  EXPECT_EQ(cli("frobnicate").status, 2);
  EXPECT_EQ(cli("ingest --no-such-flag").status, 2);
  EXPECT_EQ(cli("--help").status, 0);
}

TEST(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(cli("-c /nonexistent/profsim.json config").status, 2);
  EXPECT_EQ(cli("--set colour=blue config").status, 2);
  const auto r = cli(fixture_config() + " --set seed=3 config");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(json::parse(r.out)["seed"], 3);
}

TEST(Cli, DistributionOnAProfileFile) {
  testkit::TempDir d("cli_dist");
  const auto r = cli(fixture_config() + " " + work(d) + " distribution -i \"" +
                     (testkit::fixtures_dir() / "profiles_3.jsonl").string() + "\"");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out.rfind("Category\tSubcategory\tCount\n", 0), 0u);
  EXPECT_NE(r.out.find("Depression Severity"), std::string::npos);
}

TEST(Cli, StageErrorsExitThree) {
  testkit::TempDir d("cli_stage");
  EXPECT_EQ(cli(fixture_config() + " " + work(d) + " rebalance").status, 3);
}

TEST(Cli, GenPrefsCountsMatchTheAudit) {
  testkit::TempDir d("cli_prefs");
  const std::string base = fixture_config() + " --mock " + work(d) + " ";
  for (const char* stage : {"ingest", "label", "extract-profiles", "rebalance"}) {
    ASSERT_EQ(cli(base + stage).status, 0) << stage;
  }
  const auto r = cli(base + "gen-prefs");
  ASSERT_EQ(r.status, 0);
  const auto counts = json::parse(r.out);
  std::uint64_t kept = 0, total = 0;
  for (const auto& j : read_jsonl_strict(d / files::kAudit)) {
    kept += j["kept"].get<bool>();
    ++total;
  }
  EXPECT_EQ(counts["candidate_pairs"], total);
  EXPECT_EQ(counts["kept_pairs"], kept);
  EXPECT_EQ(read_manifest(d / files::kManifest).stages.back().stage, "gen-prefs");
}

TEST(Cli, MissingCredentialExitsFourAtTheFirstLiveStage) {
  testkit::TempDir d("cli_cred");
  const std::string base = fixture_config() + " " + work(d) + " ";
  EXPECT_EQ(cli(base + "ingest", "env -u PROFSIM_API_KEY").status, 0);
  EXPECT_EQ(cli(base + "label", "env -u PROFSIM_API_KEY").status, 4);
  EXPECT_EQ(cli(base + "run-pipeline", "env -u PROFSIM_API_KEY").status, 4);
}

TEST(Cli, MockPipelineIsReproducible) {
  testkit::TempDir a("cli_a");
  const std::string env = "SOURCE_DATE_EPOCH=1714557600";
  const std::string cmd = fixture_config() + " --mock " + work(a) + " run-pipeline";
  const auto first = cli(cmd, env);
  ASSERT_EQ(first.status, 0);
  const auto manifest = read_text_file(a / files::kManifest);
  const auto second = cli(cmd, env);
  ASSERT_EQ(second.status, 0);
  EXPECT_EQ(first.out, second.out);
  EXPECT_EQ(read_text_file(a / files::kManifest), manifest);
}
