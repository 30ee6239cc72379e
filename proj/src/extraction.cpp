#include "profsim/extraction.hpp"

#include <fmt/format.h>

namespace profsim {

namespace {

constexpr std::string_view kUnidentifiedHint = "'Cannot be identified'";

// Distortion names as listed in the extraction question.
constexpr std::string_view kDistortionPromptNames[] = {
    "selective abstraction", "overgeneralizing", "personalization",
    "catastrophic thinking", "minimisation",     "arbitrary inference",
};

std::string question_for(std::string_view path) {
  if (path == "name") return fmt::format("What is the name of this client? Answer with only the name or {}", kUnidentifiedHint);
  if (path == "gender") {
    return fmt::format(
        "What is the most probable gender of this client based on information, such as the client's name and "
        "the pronouns used in the conversation? Answer with only the gender or {}",
        kUnidentifiedHint);
  }
  if (path == "age_bracket") {
    return fmt::format(
        "Estimate the client's age from the conversation. Reply with an estimated age range among 0-24, 25-44, "
        "45-64, and 65+. If there is not enough information to estimate age range, return {}",
        kUnidentifiedHint);
  }
  if (path == "occupation") {
    return fmt::format("What is the client's occupation? Answer with only the occupation or {}", kUnidentifiedHint);
  }
  if (path == "marital_status") {
    return fmt::format(
        "Determine the client's marital status based on the conversation. Select one of the following options: "
        "Single, Married, Divorced, Widowed, Separated, In a relationship, or Other. If there is not enough "
        "information to determine marital status, return {}.",
        kUnidentifiedHint);
  }
  if (path == "situation") {
    return "What is the situation for the client before help-seeking to the supporter in the conversation? "
           "Provide a brief and clear explanation about the situation of the client that sparks this "
           "help-seeking conversation.";
  }
  if (path == "resistance") {
    return "Identify the level of resistance of the client towards the supporter. Choose one of the following "
           "options: 'Low', 'Medium', 'High', or 'Cannot be identified' and provide your reason in one sentence.";
  }
  if (path == "depression_severity") {
    return "Assume you are a psychologist, based on the dialogue, assess the severity level of depression the "
           "client shows in the dialogue. Choose one of the following options with one sentence of explanation "
           "following behind: 1-Minimal Depression, 2-Mild Depression, 3-Moderate Depression, and 4-Severe "
           "Depression";
  }
  if (path == "suicidal_ideation" || path == "homicidal_ideation") {
    const bool suicidal = path == "suicidal_ideation";
    const std::string_view what = suicidal ? "suicidal ideation" : "homicidal ideation";
    const std::string_view What = suicidal ? "Suicidal Ideation" : "Homicidal Ideation";
    const std::string_view topic = suicidal ? "suicide or self-harm" : "harming others";
    const std::string_view act = suicidal ? "death or dying" : "harming others";
    const std::string_view persistent = suicidal ? "suicide" : "harming others";
    const std::string_view plan = suicidal ? "thinks about suicide" : "thinks about harming others";
    return fmt::format(
        "Assume you are a counselor, based on the dialogue, assess the severity level of {0} the client shows "
        "in the dialogue. No {0} if the client does not exhibit any thoughts, feelings, or expressions related "
        "to {2}. Mild {0} if the client expresses occasional or fleeting thoughts about {3} without any plan or "
        "intent to act on them. Moderate {0} if the client experiences persistent thoughts about {4} and may "
        "consider it as a potential solution but lacks a concrete plan. Severe {0} if the client not only {5} "
        "but also has a specific plan and may have the means to carry it out. Choose one of the following "
        "options with one sentence of explanation following behind: 0-No {1}, 1-Mild {1}, 2-Moderate {1}, and "
        "3-Severe {1}.",
        what, What, topic, act, persistent, plan);
  }
  if (auto attr = attribute_from_path(path)) {
    if (attr->kind == AttributeKind::Symptom) {
      return fmt::format(
          "Based on this conversation, determine the client's exhibited symptoms based on the following "
          "aspects:\n- {}\nReply with the corresponding severity of each symptom by choosing one of the following "
          "options: 1-Not exhibited, 2-Mild, 3-Moderate, and 4-Severe.",
          symptom_info(static_cast<SymptomKind>(attr->index)).description);
    }
    if (attr->kind == AttributeKind::Distortion) {
      return fmt::format(
          "Based on this conversation, determine the clients' exhibited cognition distortion based on the below "
          "types:\n- {}\nReply with the presence of each cognition distortion by choosing one of the following "
          "options: 1-Not exhibited and 2-Exhibited.",
          kDistortionPromptNames[static_cast<std::size_t>(attr->index)]);
    }
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("no extraction question for '{}'", path));
}

// (option text as the judge may phrase it, enum label it maps to)
using OptionMap = std::vector<std::pair<std::string, std::string>>;

OptionMap options_for(const CategoricalAttribute& attr) {
  OptionMap out;
  for (const auto& label : domain_labels(attr, true)) out.emplace_back(label, label);
  auto add_suffixed = [&](std::string_view suffix) {
    for (const auto& label : domain_labels(attr, false)) out.emplace_back(label + std::string(suffix), label);
  };
  switch (attr.kind) {
    case AttributeKind::DepressionSeverity:
      add_suffixed(" Depression");
      break;
    case AttributeKind::SuicidalIdeation:
      add_suffixed(" Suicidal Ideation");
      out.emplace_back("None", "No");
      break;
    case AttributeKind::HomicidalIdeation:
      add_suffixed(" Homicidal Ideation");
      out.emplace_back("None", "No");
      break;
    default:
      break;
  }
  return out;
}

std::optional<std::string> parse_free_text(std::string_view answer) {
  std::string s = collapse_whitespace(answer);
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '`')) s.erase(s.begin());
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '`')) s.pop_back();
  s = trim(s);
  if (s.empty()) return std::nullopt;
  return s;
}

bool is_unidentified(std::string_view s) {
  static const std::vector<std::string> kOpt{std::string(kUnidentified)};
  return match_option(s, kOpt).has_value();
}

}  // namespace

std::vector<std::string> extraction_paths() {
  std::vector<std::string> out{"name", "gender", "age_bracket", "marital_status", "occupation", "situation",
                               "resistance"};
  for (const auto& s : symptom_table()) out.push_back("symptoms." + std::string(s.key));
  for (const auto& d : distortion_table()) out.push_back("distortions." + std::string(d.key));
  out.insert(out.end(), {"depression_severity", "suicidal_ideation", "homicidal_ideation"});
  return out;
}

std::string extraction_prompt(std::string_view transcript, std::string_view path) {
  return fmt::format("Here is a conversation between a supporter and a client.\n\n{}\n{}", transcript,
                     question_for(path));
}

bool apply_extraction_answer(PsychologicalProfile& p, std::string_view path, std::string_view answer) {
  if (path == "name" || path == "gender" || path == "occupation" || path == "situation") {
    auto text = parse_free_text(answer);
    if (!text) return false;
    std::optional<std::string> value;
    if (!is_unidentified(*text)) value = *text;
    if (path == "name") p.name = value;
    else if (path == "gender") p.gender = value;
    else if (path == "occupation") p.occupation = value;
    else p.situation = value.value_or("");
    return true;
  }
  auto attr = attribute_from_path(path);
  if (!attr) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown attribute '{}'", path));
  const auto options = options_for(*attr);
  std::vector<std::string> texts;
  texts.reserve(options.size());
  for (const auto& o : options) texts.push_back(o.first);
  auto k = match_option(answer, texts);
  if (!k) return false;
  set_label(p, *attr, options[*k].second);
  return true;
}

bool ExtractionResult::usable() const { return failures.empty() && validate_for_roleplay(profile).empty(); }

ExtractionResult extract_profile(const Conversation& conv, Judge& judge) {
  if (conv.depression_related != true) {
    throw Error(ErrorCode::InvalidArgument, conv.id + ": extraction needs a depression-related conversation");
  }
  ExtractionResult result{PsychologicalProfile::blank(), {}};
  const std::string transcript = format_transcript(conv);
  for (const auto& path : extraction_paths()) {
    JudgeRequest req{JudgeTask::ExtractAttribute, path, extraction_prompt(transcript, path), 0};
    bool done = false;
    std::string last;
    for (int attempt = 0; attempt <= kJudgeRetries && !done; ++attempt) {
      req.attempt = attempt;
      last = judge.ask(req);
      done = apply_extraction_answer(result.profile, path, last);
    }
    if (!done) {
      result.failures.push_back(
          {path, ErrorCode::JudgeUnparseable, fmt::format("unparseable answer '{}'", last.substr(0, 120))});
    }
  }
  return result;
}

}  // namespace profsim
