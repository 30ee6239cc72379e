#include "profsim/interviewer.hpp"

#include <algorithm>
#include <fmt/format.h>

#include <regex>

namespace profsim {

namespace {

constexpr std::string_view kDimensionNames[] = {"Symptom Severity", "Cognitive Distortion", "Depression Severity"};

constexpr std::string_view kSymptomPlaceholder = "SYMPTOM";
constexpr std::string_view kDistortionPlaceholder = "COGNITIVE DISTORTION";

constexpr std::string_view kSymptomQuestions[] = {
    "Have you been experiencing SYMPTOM recently?",
    "How much does SYMPTOM affect your daily life or ability to do things you enjoy?",
    "What, if anything, helps when SYMPTOM happens? Have you found ways to manage or reduce it?",
};

constexpr std::string_view kDistortionQuestions[] = {
    "Can you describe a recent situation where you felt COGNITIVE DISTORTION influencing your thoughts?",
    "Have you noticed any patterns or triggers that make COGNITIVE DISTORTION more frequent or intense?",
    "What impact does COGNITIVE DISTORTION have on your mood, motivation, or self-esteem?",
};

constexpr std::string_view kDepressionQuestions[] = {
    "How have you been feeling emotionally over the past few weeks?",
    "Do you still enjoy activities that you used to find fun or meaningful?",
    "How has your energy been lately? Do you feel tired or drained often?",
    "Do you ever feel guilty, worthless, or overly critical of yourself?",
    "Have you had any thoughts about death, feeling hopeless, or that things won't get better?",
};

constexpr std::string_view kRatingScale =
    "Rate on a scale from 1 to 5, where 1 means not aligned at all and 5 means fully aligned. Answer with a single "
    "integer.";

std::string substitute(std::string_view tmpl, std::string_view placeholder, std::string_view value) {
  std::string out(tmpl);
  for (auto pos = out.find(placeholder); pos != std::string::npos; pos = out.find(placeholder, pos + value.size())) {
    out.replace(pos, placeholder.size(), value);
  }
  return out;
}

}  // namespace

std::string_view to_string(DimensionKind d) noexcept { return kDimensionNames[static_cast<std::size_t>(d)]; }

std::optional<DimensionKind> dimension_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (iequals(s, kDimensionNames[i])) return static_cast<DimensionKind>(i);
  }
  if (iequals(s, "symptom")) return DimensionKind::SymptomSeverity;
  if (iequals(s, "distortion")) return DimensionKind::CognitiveDistortion;
  if (iequals(s, "depression")) return DimensionKind::DepressionSeverity;
  return std::nullopt;
}

std::string Dimension::trait_path() const {
  switch (kind) {
    case DimensionKind::SymptomSeverity: return "symptoms." + std::string(symptom_info(symptom).key);
    case DimensionKind::CognitiveDistortion: return "distortions." + std::string(distortion_info(distortion).key);
    case DimensionKind::DepressionSeverity: return "depression_severity";
  }
  return {};
}

std::span<const std::string_view> question_templates(DimensionKind kind) {
  switch (kind) {
    case DimensionKind::SymptomSeverity: return kSymptomQuestions;
    case DimensionKind::CognitiveDistortion: return kDistortionQuestions;
    case DimensionKind::DepressionSeverity: return kDepressionQuestions;
  }
  return {};
}

InterviewPlan plan_interview(const PsychologicalProfile& profile, const Dimension& dimension) {
  InterviewPlan plan;
  plan.dimension = dimension;
  std::string_view placeholder;
  switch (dimension.kind) {
    case DimensionKind::SymptomSeverity: {
      auto it = profile.symptoms.find(dimension.symptom);
      if (it == profile.symptoms.end() || it->second == Severity4::NotExhibited) {
        throw Error(ErrorCode::TraitAbsentInProfile, dimension.trait_path() + " is not exhibited");
      }
      plan.trait = to_lower(symptom_info(dimension.symptom).name);
      plan.target_level = enum_label(it->second);
      placeholder = kSymptomPlaceholder;
      plan.rating_question = fmt::format(
          "How subtly and consistently does the client reflect a {} level of {} in their responses?",
          to_lower(plan.target_level), plan.trait);
      break;
    }
    case DimensionKind::CognitiveDistortion: {
      auto it = profile.distortions.find(dimension.distortion);
      if (it == profile.distortions.end() || it->second != Exhibition::Exhibited) {
        throw Error(ErrorCode::TraitAbsentInProfile, dimension.trait_path() + " is not exhibited");
      }
      plan.trait = to_lower(distortion_info(dimension.distortion).name);
      plan.target_level = enum_label(it->second);
      placeholder = kDistortionPlaceholder;
      plan.rating_question =
          fmt::format("How subtly and consistently does the client exhibit {} in their responses?", plan.trait);
      break;
    }
    case DimensionKind::DepressionSeverity: {
      if (profile.depression_severity == DepressionSeverity::Unidentified) {
        throw Error(ErrorCode::TraitAbsentInProfile, "depression_severity is not identified");
      }
      plan.trait = "depression";
      plan.target_level = enum_label(profile.depression_severity);
      plan.rating_question = fmt::format(
          "How subtly and consistently does the client reflect a {} level of depression in their responses?",
          to_lower(plan.target_level));
      break;
    }
  }
  for (auto tmpl : question_templates(dimension.kind)) {
    plan.questions.push_back(placeholder.empty() ? std::string(tmpl) : substitute(tmpl, placeholder, plan.trait));
  }
  return plan;
}

std::vector<Dimension> interview_dimensions(const PsychologicalProfile& profile, std::span<const DimensionKind> kinds) {
  auto wanted = [&](DimensionKind k) { return kinds.empty() || std::find(kinds.begin(), kinds.end(), k) != kinds.end(); };
  std::vector<Dimension> out;
  if (wanted(DimensionKind::SymptomSeverity)) {
    for (const auto& [kind, sev] : profile.symptoms) {
      if (sev != Severity4::NotExhibited) out.push_back(Dimension::of(kind));
    }
  }
  if (wanted(DimensionKind::CognitiveDistortion)) {
    for (const auto& [kind, ex] : profile.distortions) {
      if (ex == Exhibition::Exhibited) out.push_back(Dimension::of(kind));
    }
  }
  if (wanted(DimensionKind::DepressionSeverity) && profile.depression_severity != DepressionSeverity::Unidentified) {
    out.push_back(Dimension::depression());
  }
  return out;
}

std::string rating_prompt(const InterviewPlan& plan, std::span<const ChatMessage> transcript) {
  std::string body;
  for (const auto& m : transcript) {
    if (m.role == Role::System) continue;
    body += m.role == Role::User ? "Interviewer: " : "Client: ";
    body += m.content;
    body += '\n';
  }
  return fmt::format("Here is an interview between an interviewer and a client.\n\n{}\n{} {}", body,
                     plan.rating_question, kRatingScale);
}

std::optional<int> parse_rating(std::string_view answer) {
  static const std::regex kRating(R"(^\s*(?:rating\s*:\s*)?([0-9]+)(?:\s*/\s*5)?\s*[.!]?\s*$)", std::regex::icase);
  const auto lines = split_lines(answer);
  if (lines.empty()) return std::nullopt;
  std::smatch m;
  const std::string first = trim(lines.front());
  if (!std::regex_match(first, m, kRating)) return std::nullopt;
  if (m[1].length() > 1) return std::nullopt;
  const int v = std::stoi(m[1].str());
  if (v < 1 || v > 5) return std::nullopt;
  return v;
}

InterviewResult run_interview(const InterviewPlan& plan, const PsychologicalProfile& profile, Provider& chatbot,
                              const DecodingConfig& cfg, Judge& judge) {
  InterviewResult r;
  r.plan = plan;
  r.transcript.push_back({Role::System, render_system_prompt(profile)});
  for (const auto& q : plan.questions) {
    r.transcript.push_back({Role::User, q});
    r.transcript.push_back({Role::Assistant, chatbot.chat(r.transcript, cfg)});
  }
  JudgeRequest req{JudgeTask::Rate, plan.dimension.trait_path(), rating_prompt(plan, r.transcript), 0};
  r.rating = ask_parsed<int>(judge, req, parse_rating);
  return r;
}

json to_json(const RatingEntry& e) {
  return json{{"profile_id", e.profile_id},
              {"dimension", to_string(e.dimension.kind)},
              {"trait_path", e.dimension.trait_path()},
              {"trait", e.trait},
              {"target_level", e.target_level},
              {"rating", e.rating}};
}

RatingEntry rating_entry_from_json(const json& j) {
  try {
    RatingEntry e;
    e.profile_id = j.at("profile_id").get<std::string>();
    const auto dim = j.at("dimension").get<std::string>();
    const auto kind = dimension_kind_from_string(dim);
    if (!kind) throw Error(ErrorCode::SchemaViolation, "unknown dimension '" + dim + "'");
    const auto path = j.at("trait_path").get<std::string>();
    e.dimension.kind = *kind;
    if (*kind == DimensionKind::SymptomSeverity) {
      auto s = istarts_with(path, "symptoms.") ? symptom_from_key(path.substr(9)) : std::nullopt;
      if (!s) throw Error(ErrorCode::SchemaViolation, "bad trait_path '" + path + "'");
      e.dimension.symptom = *s;
    } else if (*kind == DimensionKind::CognitiveDistortion) {
      auto d = istarts_with(path, "distortions.") ? distortion_from_key(path.substr(12)) : std::nullopt;
      if (!d) throw Error(ErrorCode::SchemaViolation, "bad trait_path '" + path + "'");
      e.dimension.distortion = *d;
    }
    e.trait = j.value("trait", std::string());
    e.target_level = j.value("target_level", std::string());
    e.rating = j.at("rating").get<int>();
    if (e.rating < 1 || e.rating > 5) throw Error(ErrorCode::ScoreOutOfRange, "rating outside 1..5");
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, std::string("rating entry: ") + ex.what());
  }
}

std::vector<RatingEntry> run_evaluation(std::span<const ProfileRecord> profiles, Provider& chatbot, Judge& judge,
                                        const EvaluationConfig& cfg) {
  cfg.decoding.validate();
  struct Cell {
    const ProfileRecord* record;
    Dimension dimension;
  };
  std::vector<Cell> cells;
  for (const auto& rec : profiles) {
    for (const auto& d : interview_dimensions(rec.profile, cfg.dimensions)) cells.push_back({&rec, d});
  }
  std::vector<RatingEntry> out(cells.size());
  parallel_for(cells.size(), cfg.concurrency, [&](std::size_t i) {
    const auto& cell = cells[i];
    const auto plan = plan_interview(cell.record->profile, cell.dimension);
    const auto result = run_interview(plan, cell.record->profile, chatbot, cfg.decoding, judge);
    out[i] = {cell.record->conversation_id, cell.dimension, plan.trait, plan.target_level, result.rating};
  });
  return out;
}

EvalScorecard aggregate_scores(const std::map<DimensionKind, std::vector<int>>& groups) {
  EvalScorecard card;
  for (const auto& [kind, ratings] : groups) {
    if (ratings.empty()) throw Error(ErrorCode::EmptyGroup, fmt::format("no ratings for {}", to_string(kind)));
    long sum = 0;
    std::size_t fives = 0;
    for (int r : ratings) {
      if (r < 1 || r > 5) throw Error(ErrorCode::ScoreOutOfRange, fmt::format("rating {} outside 1..5", r));
      sum += r;
      if (r == 5) ++fives;
    }
    const auto n = static_cast<double>(ratings.size());
    card.rows.push_back({kind, ratings.size(), static_cast<double>(sum) / n, static_cast<double>(fives) / n});
  }
  return card;
}

EvalScorecard aggregate_scores(std::span<const RatingEntry> entries) {
  std::map<DimensionKind, std::vector<int>> groups;
  for (const auto& e : entries) groups[e.dimension.kind].push_back(e.rating);
  return aggregate_scores(groups);
}

std::string format_scorecard(const EvalScorecard& card) {
  std::string out = "| Dimension | Average Rating | Full Alignment Percentage |\n|---|---|---|\n";
  for (const auto& row : card.rows) {
    out += fmt::format("| {} | {:.3f} | {:.3f} |\n", to_string(row.dimension), row.average, row.full_alignment);
  }
  return out;
}

json to_json(const EvalScorecard& card) {
  json rows = json::array();
  for (const auto& r : card.rows) {
    rows.push_back({{"dimension", to_string(r.dimension)},
                    {"count", r.count},
                    {"average_rating", r.average},
                    {"full_alignment_percentage", r.full_alignment}});
  }
  return json{{"rows", rows}};
}

}  // namespace profsim
