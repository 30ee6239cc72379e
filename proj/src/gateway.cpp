#include "profsim/gateway.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "profsim/error.hpp"

namespace profsim {

void DecodingConfig::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be a finite value >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0, 1]");
  if (!std::isfinite(eos_bias)) throw Error(ErrorCode::InvalidArgument, "eos_bias must be finite");
  if (!(eos_decay_factor >= 1.0) || !std::isfinite(eos_decay_factor)) {
    throw Error(ErrorCode::InvalidArgument, "eos_decay_factor must be >= 1");
  }
  if (max_new_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be positive");
}

json to_json(const DecodingConfig& c) {
  return json{{"temperature", c.temperature},
              {"top_p", c.top_p},
              {"eos_bias", c.eos_bias},
              {"eos_decay_factor", c.eos_decay_factor},
              {"max_new_tokens", c.max_new_tokens},
              {"sample_seed", c.sample_seed}};
}

DecodingConfig decoding_config_from_json(const json& j) {
  DecodingConfig c;
  try {
    c.temperature = j.value("temperature", c.temperature);
    c.top_p = j.value("top_p", c.top_p);
    c.eos_bias = j.value("eos_bias", c.eos_bias);
    c.eos_decay_factor = j.value("eos_decay_factor", c.eos_decay_factor);
    c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
    c.sample_seed = j.value("sample_seed", c.sample_seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("decoding: ") + e.what());
  }
  c.validate();
  return c;
}

void TokenLogprobSeq::validate() const {
  if (tokens.empty()) throw Error(ErrorCode::EmptySequence, "no scored tokens");
  if (tokens.size() != logprobs.size()) {
    throw Error(ErrorCode::MalformedResponse,
                fmt::format("{} tokens but {} logprobs", tokens.size(), logprobs.size()));
  }
  for (double lp : logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw Error(ErrorCode::MalformedResponse, fmt::format("logprob {} is not a finite value <= 0", lp));
    }
  }
}

double avg_token_prob(std::span<const double> logprobs) {
  if (logprobs.empty()) throw Error(ErrorCode::EmptySequence, "average of an empty sequence");
  double sum = 0.0;
  for (double lp : logprobs) {
    if (!std::isfinite(lp)) throw Error(ErrorCode::NonFiniteInput, "non-finite logprob");
    sum += lp;
  }
  return std::exp(sum / static_cast<double>(logprobs.size()));
}

double avg_token_prob(const TokenLogprobSeq& seq) {
  seq.validate();
  return avg_token_prob(std::span<const double>(seq.logprobs));
}

void check_chat_messages(std::span<const ChatMessage> messages) {
  if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "chat needs at least one message");
  if (messages.front().role != Role::System) {
    throw Error(ErrorCode::InvalidArgument, "first chat message must be the system prompt");
  }
}

// ---- mock ----------------------------------------------------------------

namespace {

constexpr std::string_view kPhrases[] = {
    "I don't really know where to start.",
    "Honestly I've been so tired lately, even getting out of bed feels like a lot.",
    "I guess things have been kind of rough.",
    "Work has been piling up and I just can't seem to focus on anything.",
    "I keep thinking it's all my fault somehow.",
    "My friends keep asking me to go out but I just don't feel like it anymore.",
    "I haven't been sleeping well, I'm up until 3 or 4 most nights.",
    "It's not that bad, I mean other people have it worse.",
    "Sometimes I wonder what the point of any of it is.",
    "I used to love painting but I haven't touched it in months.",
    "I don't want to be a burden to anyone.",
    "Yeah, I guess that makes sense.",
    "I'm not sure talking about it will help, but okay.",
    "Everything just feels heavy, you know?",
    "My mom keeps telling me to snap out of it.",
    "I snapped at my roommate yesterday over nothing and felt awful after.",
    "I've been eating a lot less, food just doesn't taste like anything.",
    "If one thing goes wrong the whole day is ruined.",
    "I tried journaling once but I stopped after a few days.",
    "Thanks for listening, I mean it.",
    "I don't know, maybe.",
    "It's been like this since the breakup.",
    "I feel like everyone else has their life figured out except me.",
    "I've been skipping classes and now I'm so behind there's no way to catch up.",
};

std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::uint64_t config_key(const DecodingConfig& c) {
  return fnv1a64(fmt::format("{:.17g}|{:.17g}|{:.17g}|{:.17g}|{}|{}", c.temperature, c.top_p, c.eos_bias,
                             c.eos_decay_factor, c.max_new_tokens, c.sample_seed));
}

}  // namespace

std::string MockProvider::chat(std::span<const ChatMessage> messages, const DecodingConfig& cfg) {
  check_chat_messages(messages);
  cfg.validate();
  ++chat_calls_;
  std::uint64_t h = hash_mix(hash_mix(prompt_fingerprint(messages), config_key(cfg)), seed_);
  const std::size_t n_sentences = 1 + h % 3;
  std::string out;
  for (std::size_t i = 0; i < n_sentences; ++i) {
    h = splitmix64(h + i);
    if (!out.empty()) out += ' ';
    out += kPhrases[h % std::size(kPhrases)];
  }
  return out;
}

TokenLogprobSeq MockProvider::score(std::span<const ChatMessage> prompt, std::string_view response) {
  check_chat_messages(prompt);
  ++score_calls_;
  TokenLogprobSeq seq;
  seq.tokens = split_whitespace(response);
  if (seq.tokens.empty()) throw Error(ErrorCode::EmptySequence, "response has no tokens to score");
  seq.prompt_fingerprint = prompt_fingerprint(prompt);
  const std::uint64_t key = hash_mix(seq.prompt_fingerprint, seed_);
  const double scale = 0.5 + 2.5 * unit_interval(hash_mix(key, fnv1a64(response)));
  seq.logprobs.reserve(seq.tokens.size());
  for (std::size_t pos = 0; pos < seq.tokens.size(); ++pos) {
    const std::uint64_t h = hash_mix(hash_mix(key, fnv1a64(seq.tokens[pos])), pos);
    seq.logprobs.push_back(-scale * unit_interval(h));
  }
  return seq;
}

// ---- HTTP ----------------------------------------------------------------

json to_json(const HttpProviderConfig& c) {
  return json{{"base_url", c.base_url},
              {"path", c.path},
              {"model", c.model},
              {"api_key_env", c.api_key_env},
              {"max_in_flight", c.max_in_flight},
              {"max_retries", c.max_retries},
              {"initial_backoff_ms", c.initial_backoff_ms},
              {"timeout_s", c.timeout_s},
              {"logit_processing", c.logit_processing}};
}

HttpProviderConfig http_provider_config_from_json(const json& j) {
  HttpProviderConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.path = j.value("path", c.path);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.initial_backoff_ms = j.value("initial_backoff_ms", c.initial_backoff_ms);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.logit_processing = j.value("logit_processing", c.logit_processing);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("endpoint: ") + e.what());
  }
  if (c.max_in_flight <= 0 || c.max_in_flight > 1024) {
    throw Error(ErrorCode::ConfigInvalid, "endpoint.max_in_flight must lie in [1, 1024]");
  }
  if (c.max_retries < 0 || c.initial_backoff_ms < 0 || c.timeout_s <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "endpoint retry/timeout values must be non-negative");
  }
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)), in_flight_(cfg_.max_in_flight) {
  if (cfg_.max_in_flight <= 0 || cfg_.max_in_flight > 1024) {
    throw Error(ErrorCode::InvalidArgument, "max_in_flight must lie in [1, 1024]");
  }
}

json HttpProvider::chat_body(std::span<const ChatMessage> messages, const DecodingConfig& cfg) const {
  json body{{"model", cfg_.model},
            {"messages", to_json(messages)},
            {"temperature", cfg.temperature},
            {"top_p", cfg.top_p},
            {"max_tokens", cfg.max_new_tokens},
            {"seed", cfg.sample_seed}};
  if (cfg_.logit_processing) {
    body["eos_bias"] = cfg.eos_bias;
    body["eos_decay_factor"] = cfg.eos_decay_factor;
  }
  return body;
}

json HttpProvider::score_body(std::span<const ChatMessage> prompt, std::string_view response) const {
  json messages = to_json(prompt);
  messages.push_back(to_json(ChatMessage{Role::Assistant, std::string(response)}));
  return json{{"model", cfg_.model},
              {"messages", std::move(messages)},
              {"echo", true},
              {"logprobs", true},
              {"max_tokens", 0}};
}

namespace {

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

json HttpProvider::post(const json& body) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::EndpointUnreachable,
                fmt::format("credential variable {} is not set", cfg_.api_key_env));
  }
  if (cfg_.base_url.empty()) throw Error(ErrorCode::EndpointUnreachable, "endpoint base_url is empty");

  const std::string payload = body.dump();
  // Same key on every retry of this request so the server can deduplicate.
  const std::string idem = sha256_hex(payload).substr(0, 32);
  httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}, {"Idempotency-Key", idem}};

  SemaphoreGuard guard(in_flight_);
  httplib::Client client(cfg_.base_url);
  client.set_connection_timeout(cfg_.timeout_s, 0);
  client.set_read_timeout(cfg_.timeout_s, 0);
  client.set_write_timeout(cfg_.timeout_s, 0);

  int backoff = cfg_.initial_backoff_ms;
  std::string last_error;
  bool rate_limited = false;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    auto res = client.Post(cfg_.path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      rate_limited = false;
      continue;
    }
    if (res->status == 429) {
      last_error = "HTTP 429";
      rate_limited = true;
      continue;
    }
    if (res->status >= 500) {
      last_error = fmt::format("HTTP {}", res->status);
      rate_limited = false;
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::EndpointUnreachable,
                  fmt::format("{} rejected the request: HTTP {}", cfg_.base_url, res->status));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedResponse, std::string("response is not JSON: ") + e.what());
    }
  }
  if (rate_limited) {
    throw Error(ErrorCode::RateLimited,
                fmt::format("{} still rate limiting after {} retries", cfg_.base_url, cfg_.max_retries));
  }
  throw Error(ErrorCode::EndpointUnreachable,
              fmt::format("{} unreachable after {} retries: {}", cfg_.base_url, cfg_.max_retries, last_error));
}

std::string extract_chat_text(const json& response) {
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error(ErrorCode::MalformedResponse, "message content is not a string");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("chat response: ") + e.what());
  }
}

TokenLogprobSeq extract_token_logprobs(const json& response) {
  const json* content = nullptr;
  try {
    const auto& choice = response.at("choices").at(0);
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
        choice["logprobs"]["content"].is_array()) {
      content = &choice["logprobs"]["content"];
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("scoring response: ") + e.what());
  }
  if (content == nullptr) {
    throw Error(ErrorCode::ScoringUnsupported, "endpoint returned no per-token logprobs for the continuation");
  }
  TokenLogprobSeq seq;
  try {
    for (const auto& t : *content) {
      seq.tokens.push_back(t.at("token").get<std::string>());
      seq.logprobs.push_back(t.at("logprob").get<double>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("logprob entry: ") + e.what());
  }
  seq.validate();
  return seq;
}

std::string HttpProvider::chat(std::span<const ChatMessage> messages, const DecodingConfig& cfg) {
  check_chat_messages(messages);
  cfg.validate();
  if (!cfg_.logit_processing && !warned_logit_.exchange(true)) {
    spdlog::warn("{}: endpoint does not take eos_bias/eos_decay_factor; ignoring them", name());
  }
  return extract_chat_text(post(chat_body(messages, cfg)));
}

TokenLogprobSeq HttpProvider::score(std::span<const ChatMessage> prompt, std::string_view response) {
  check_chat_messages(prompt);
  if (split_whitespace(response).empty()) throw Error(ErrorCode::EmptySequence, "response has no tokens to score");
  auto seq = extract_token_logprobs(post(score_body(prompt, response)));
  seq.prompt_fingerprint = prompt_fingerprint(prompt);
  return seq;
}

}  // namespace profsim
