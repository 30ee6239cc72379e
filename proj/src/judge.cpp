#include "profsim/judge.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "profsim/profile.hpp"

namespace profsim {

std::string_view to_string(JudgeTask task) noexcept {
  switch (task) {
    case JudgeTask::ClassifyDepression: return "classify";
    case JudgeTask::ExtractAttribute: return "extract";
    case JudgeTask::Adherence: return "adherence";
    case JudgeTask::Summarize: return "summarize";
    case JudgeTask::Rate: return "rate";
  }
  return "unknown";
}

ProviderJudge::ProviderJudge(Provider& provider, DecodingConfig cfg) : provider_(provider), cfg_(cfg) {
  cfg_.validate();
}

std::string ProviderJudge::ask(const JudgeRequest& request) {
  const std::vector<ChatMessage> messages{
      {Role::System, "You are an experienced clinical psychologist reviewing counseling conversations. "
                     "Answer exactly in the requested format."},
      {Role::User, request.prompt},
  };
  DecodingConfig cfg = cfg_;
  // A retry must not receive the identical sampled answer again.
  cfg.sample_seed = cfg_.sample_seed + static_cast<std::uint64_t>(request.attempt);
  try {
    return provider_.chat(messages, cfg);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::EndpointUnreachable:
      case ErrorCode::RateLimited:
      case ErrorCode::MalformedResponse:
        throw Error(ErrorCode::JudgeUnavailable, e.what());
      default:
        throw;
    }
  }
}

// ---- mock ----------------------------------------------------------------

namespace {

constexpr std::string_view kNames[] = {"Alex", "Sam", "Jordan", "Maria", "Chris", "Taylor", "Priya", "Daniel"};
constexpr std::string_view kGenders[] = {"Female", "Male"};
constexpr std::string_view kOccupations[] = {"Student", "Teacher", "Nurse", "Office worker", "Unemployed",
                                             "Engineer", "Retail worker"};
constexpr std::string_view kSituations[] = {
    "The client recently lost their job and feels stuck and hopeless about finding new work.",
    "The client is a student struggling with exam stress and growing isolation from friends.",
    "The client went through a breakup and has been withdrawing from family and hobbies.",
    "The client has been overwhelmed by caring for a sick parent while working full time.",
    "The client moved to a new city and feels lonely and unable to connect with anyone.",
};

template <std::size_t N>
std::string_view pick(const std::string_view (&bank)[N], std::uint64_t h) {
  return bank[h % N];
}

}  // namespace

std::string MockJudge::ask(const JudgeRequest& request) {
  ++calls_;
  const std::uint64_t h = splitmix64(seed_ ^ fnv1a64(request.prompt) ^ splitmix64(fnv1a64(request.attribute)) ^
                                     static_cast<std::uint64_t>(request.attempt));
  const double u = unit_interval(h);
  switch (request.task) {
    case JudgeTask::ClassifyDepression:
      return u < 0.8 ? "Yes" : "No";
    case JudgeTask::Summarize:
      return "Content Covered: the client described ongoing low mood and stress. Interventions Used: reflective "
             "listening and gentle questions about coping. Client Response: the client opened up but stayed "
             "doubtful that things could improve.";
    case JudgeTask::Rate:
      return std::to_string(3 + h % 3);
    case JudgeTask::Adherence:
      return u < 0.85 ? "Consistent" : "Inconsistent";
    case JudgeTask::ExtractAttribute:
      break;
  }
  const auto& path = request.attribute;
  const bool unidentified = u < 0.25;
  if (path == "name") return unidentified ? std::string(kUnidentified) : std::string(pick(kNames, h >> 8));
  if (path == "gender") return unidentified ? std::string(kUnidentified) : std::string(pick(kGenders, h >> 8));
  if (path == "occupation") {
    return unidentified ? std::string(kUnidentified) : std::string(pick(kOccupations, h >> 8));
  }
  if (path == "situation") return std::string(pick(kSituations, h >> 8));
  if (auto attr = attribute_from_path(path)) {
    const auto labels = domain_labels(*attr, true);
    std::string answer = labels[(h >> 8) % labels.size()];
    // Enumerated answers sometimes carry the ordinal and an explanation, as a real judge would.
    if ((h >> 40) % 2 == 0) answer += ". Based on the client's statements in the dialogue.";
    return answer;
  }
  return std::string(kUnidentified);
}

// ---- answer parsing ------------------------------------------------------

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string strip_decoration(std::string_view answer) {
  std::string s = trim(split_lines(trim(answer)).front());
  auto strip_quotes = [](std::string& t) {
    while (!t.empty() && (t.front() == '"' || t.front() == '\'' || t.front() == '`' || t.front() == '*')) {
      t.erase(t.begin());
    }
  };
  strip_quotes(s);
  // Leading ordinal: digits followed by '-', '.', ')' or ':' (spaces allowed around the separator).
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0) {
    std::size_t j = i;
    while (j < s.size() && s[j] == ' ') ++j;
    if (j < s.size() && (s[j] == '-' || s[j] == '.' || s[j] == ')' || s[j] == ':')) {
      s = trim(std::string_view(s).substr(j + 1));
    }
  }
  strip_quotes(s);
  return s;
}

}  // namespace

namespace {

std::optional<std::size_t> longest_prefix_match(std::string_view s, std::span<const std::string> options) {
  std::optional<std::size_t> best;
  std::size_t best_len = 0;
  for (std::size_t k = 0; k < options.size(); ++k) {
    const auto& opt = options[k];
    if (opt.empty() || (best && opt.size() <= best_len)) continue;
    if (!istarts_with(s, opt)) continue;
    if (s.size() > opt.size() && is_alnum(s[opt.size()])) continue;
    best = k;
    best_len = opt.size();
  }
  return best;
}

}  // namespace

std::optional<std::size_t> match_option(std::string_view answer, std::span<const std::string> options) {
  if (trim(answer).empty()) return std::nullopt;
  // Options such as "25-44" look like an ordinal prefix, so try the undecorated line first.
  std::string raw = trim(split_lines(trim(answer)).front());
  while (!raw.empty() && (raw.front() == '"' || raw.front() == '\'' || raw.front() == '`' || raw.front() == '*')) {
    raw.erase(raw.begin());
  }
  if (auto k = longest_prefix_match(raw, options)) return k;
  return longest_prefix_match(strip_decoration(answer), options);
}

std::optional<bool> parse_yes_no(std::string_view answer) {
  static const std::vector<std::string> kOptions{"Yes", "No"};
  auto k = match_option(answer, kOptions);
  if (!k) return std::nullopt;
  return *k == 0;
}

}  // namespace profsim
