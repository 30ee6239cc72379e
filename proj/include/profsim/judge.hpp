#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "profsim/error.hpp"
#include "profsim/gateway.hpp"

namespace profsim {

enum class JudgeTask { ClassifyDepression, ExtractAttribute, Adherence, Summarize, Rate };

std::string_view to_string(JudgeTask task) noexcept;

struct JudgeRequest {
  JudgeTask task = JudgeTask::ClassifyDepression;
  std::string attribute;  // profile path, rating dimension, or empty
  std::string prompt;     // full text sent to the judge model
  int attempt = 0;        // 0 for the first try
};

/// LLM-as-judge. Implementations throw JudgeUnavailable when the judge cannot be reached.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string ask(const JudgeRequest& request) = 0;
};

inline constexpr int kJudgeRetries = 3;

/// Asks, parses, and re-asks up to `retries` more times while parse() returns
/// nullopt. Throws JudgeUnparseable with the last raw answer.
template <class T>
T ask_parsed(Judge& judge, JudgeRequest request, const std::function<std::optional<T>(std::string_view)>& parse,
             int retries = kJudgeRetries) {
  std::string last;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    request.attempt = attempt;
    last = judge.ask(request);
    if (auto v = parse(last)) return *v;
  }
  throw Error(ErrorCode::JudgeUnparseable,
              (request.attribute.empty() ? std::string(to_string(request.task)) : request.attribute) +
                  ": unparseable answer '" + last.substr(0, 120) + "'");
}

/// Sends the prompt as a single user turn to a chat provider.
class ProviderJudge final : public Judge {
 public:
  ProviderJudge(Provider& provider, DecodingConfig cfg);
  std::string ask(const JudgeRequest& request) override;

 private:
  Provider& provider_;
  DecodingConfig cfg_;
};

/// Test double: delegates to a function and counts calls.
class ScriptedJudge final : public Judge {
 public:
  using Fn = std::function<std::string(const JudgeRequest&)>;
  explicit ScriptedJudge(Fn fn) : fn_(std::move(fn)) {}
  std::string ask(const JudgeRequest& request) override {
    ++calls_;
    return fn_(request);
  }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Deterministic offline judge: every answer is a pure function of (seed, request)
/// and always parses for its task.
class MockJudge final : public Judge {
 public:
  explicit MockJudge(std::uint64_t seed = 0) : seed_(seed) {}
  std::string ask(const JudgeRequest& request) override;
  std::uint64_t calls() const { return calls_.load(); }

 private:
  std::uint64_t seed_;
  std::atomic<std::uint64_t> calls_{0};
};

// ---- answer parsing shared by judge clients ------------------------------

/// Index of the option the answer selects. Only the first line counts; a
/// leading ordinal ("2-", "3 -", "1.") and surrounding quotes are stripped and
/// the option must be followed by end of text or a non-alphanumeric character,
/// so "Moderate. The client..." matches "Moderate". Longest option wins.
std::optional<std::size_t> match_option(std::string_view answer, std::span<const std::string> options);
std::optional<bool> parse_yes_no(std::string_view answer);

}  // namespace profsim
