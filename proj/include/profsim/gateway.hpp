#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/chat.hpp"
#include "profsim/util.hpp"

namespace profsim {

struct DecodingConfig {
  double temperature = 1.0;
  double top_p = 0.8;
  double eos_bias = -4.0;
  double eos_decay_factor = 1.01;
  int max_new_tokens = 256;
  std::uint64_t sample_seed = 0;  // distinguishes otherwise identical sampling requests

  void validate() const;  // throws InvalidArgument
  bool operator==(const DecodingConfig&) const = default;
};

json to_json(const DecodingConfig& c);
DecodingConfig decoding_config_from_json(const json& j);

struct TokenLogprobSeq {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::uint64_t prompt_fingerprint = 0;

  void validate() const;  // throws EmptySequence, MalformedResponse
  bool operator==(const TokenLogprobSeq&) const = default;
};

/// exp(mean(logprobs)). Throws EmptySequence, NonFiniteInput.
double avg_token_prob(std::span<const double> logprobs);
double avg_token_prob(const TokenLogprobSeq& seq);

class Provider {
 public:
  virtual ~Provider() = default;
  /// messages must be non-empty and start with a System message.
  virtual std::string chat(std::span<const ChatMessage> messages, const DecodingConfig& cfg) = 0;
  /// Per-token log probabilities of `response` as the assistant continuation of `prompt`.
  virtual TokenLogprobSeq score(std::span<const ChatMessage> prompt, std::string_view response) = 0;
  virtual std::string name() const = 0;
};

void check_chat_messages(std::span<const ChatMessage> messages);

/// Offline provider. Replies are drawn from a phrase bank by hashing
/// (messages, cfg, seed); scores come from a keyed hash of (prompt, token, position).
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::uint64_t seed = 0) : seed_(seed) {}

  std::string chat(std::span<const ChatMessage> messages, const DecodingConfig& cfg) override;
  TokenLogprobSeq score(std::span<const ChatMessage> prompt, std::string_view response) override;
  std::string name() const override { return "mock"; }

  std::uint64_t chat_calls() const { return chat_calls_.load(); }
  std::uint64_t score_calls() const { return score_calls_.load(); }

 private:
  std::uint64_t seed_;
  std::atomic<std::uint64_t> chat_calls_{0};
  std::atomic<std::uint64_t> score_calls_{0};
};

struct HttpProviderConfig {
  std::string base_url;                 // e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "PROFSIM_API_KEY";
  int max_in_flight = 8;
  int max_retries = 4;
  int initial_backoff_ms = 200;
  int timeout_s = 60;
  bool logit_processing = false;  // endpoint honors eos_bias / eos_decay_factor

  bool operator==(const HttpProviderConfig&) const = default;
};

json to_json(const HttpProviderConfig& c);
HttpProviderConfig http_provider_config_from_json(const json& j);

/// Chat-completions style client. Scoring sends the continuation as a final
/// assistant message with echo=true, logprobs=true, max_tokens=0 and reads
/// choices[0].logprobs.content[] = {token, logprob} for that continuation.
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);

  std::string chat(std::span<const ChatMessage> messages, const DecodingConfig& cfg) override;
  TokenLogprobSeq score(std::span<const ChatMessage> prompt, std::string_view response) override;
  std::string name() const override { return "http:" + cfg_.base_url; }

  /// Request bodies, exposed for tests.
  json chat_body(std::span<const ChatMessage> messages, const DecodingConfig& cfg) const;
  json score_body(std::span<const ChatMessage> prompt, std::string_view response) const;

 private:
  json post(const json& body);

  HttpProviderConfig cfg_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<bool> warned_logit_{false};
};

std::string extract_chat_text(const json& response);
TokenLogprobSeq extract_token_logprobs(const json& response);

}  // namespace profsim
