#include "profsim/profile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "profsim/error.hpp"

namespace profsim {

// ---- enum metadata -------------------------------------------------------

namespace {

constexpr EnumEntry<AgeBracket> kAge[] = {
    {AgeBracket::Age0To24, "0-24"},   {AgeBracket::Age25To44, "25-44"},
    {AgeBracket::Age45To64, "45-64"}, {AgeBracket::Age65Plus, "65+"},
    {AgeBracket::Unidentified, kUnidentified},
};
constexpr EnumEntry<MaritalStatus> kMarital[] = {
    {MaritalStatus::Single, "Single"},
    {MaritalStatus::Married, "Married"},
    {MaritalStatus::Divorced, "Divorced"},
    {MaritalStatus::Widowed, "Widowed"},
    {MaritalStatus::Separated, "Separated"},
    {MaritalStatus::InRelationship, "In a relationship"},
    {MaritalStatus::Other, "Other"},
    {MaritalStatus::Unidentified, kUnidentified},
};
constexpr EnumEntry<Resistance> kResistance[] = {
    {Resistance::Low, "Low"},
    {Resistance::Medium, "Medium"},
    {Resistance::High, "High"},
    {Resistance::Unidentified, kUnidentified},
};
constexpr EnumEntry<Severity4> kSeverity4[] = {
    {Severity4::NotExhibited, "Not exhibited"},
    {Severity4::Mild, "Mild"},
    {Severity4::Moderate, "Moderate"},
    {Severity4::Severe, "Severe"},
};
constexpr EnumEntry<Exhibition> kExhibition[] = {
    {Exhibition::NotExhibited, "Not exhibited"},
    {Exhibition::Exhibited, "Exhibited"},
};
constexpr EnumEntry<DepressionSeverity> kDepression[] = {
    {DepressionSeverity::Minimal, "Minimal"},
    {DepressionSeverity::Mild, "Mild"},
    {DepressionSeverity::Moderate, "Moderate"},
    {DepressionSeverity::Severe, "Severe"},
    {DepressionSeverity::Unidentified, kUnidentified},
};
constexpr EnumEntry<IdeationSeverity> kIdeation[] = {
    {IdeationSeverity::No, "No"},
    {IdeationSeverity::Mild, "Mild"},
    {IdeationSeverity::Moderate, "Moderate"},
    {IdeationSeverity::Severe, "Severe"},
    {IdeationSeverity::Unidentified, kUnidentified},
};

constexpr SymptomInfo kSymptoms[] = {
    {SymptomKind::Sadness, "sadness", "Feelings of sadness, tearfulness, emptiness, or hopelessness",
     "Feelings of sadness, tearfulness, emptiness, or hopelessness"},
    {SymptomKind::Irritability, "irritability", "Angry outbursts, irritability, or frustration",
     "Angry outbursts, irritability, or frustration, even over small matters"},
    {SymptomKind::LossOfInterest, "loss_of_interest", "Loss of interest in activities",
     "Loss of interest or pleasure in most or all normal activities, such as sex, hobbies, or sports"},
    {SymptomKind::SleepDisturbance, "sleep_disturbances", "Sleep disturbances",
     "Sleep disturbances, including insomnia or sleeping too much"},
    {SymptomKind::LackOfEnergy, "lack_of_energy", "Lack of energy",
     "Tiredness and lack of energy, so even small tasks take extra effort"},
    {SymptomKind::AppetiteChange, "appetite_changes", "Changes in appetite or weight",
     "Changes in appetite and weight (reduced appetite and weight loss or increased cravings for "
     "food and weight gain)"},
    {SymptomKind::Anxiety, "anxiety", "Anxiety, agitation, or restlessness",
     "Anxiety, agitation, or restlessness"},
    {SymptomKind::SlowedMovement, "slowed_thinking", "Slowed thinking, speaking, or body movements",
     "Slowed thinking, speaking, or body movements"},
    {SymptomKind::Worthlessness, "worthlessness", "Feelings of worthlessness or guilt",
     "Feelings of worthlessness or guilt, fixating on past failures or self-blame"},
    {SymptomKind::TroubleConcentrating, "trouble_concentrating", "Trouble thinking or concentrating",
     "Trouble thinking, concentrating, making decisions, and remembering things"},
    {SymptomKind::SuicidalThoughts, "suicidal_thoughts", "Frequent suicidal thoughts or attempts",
     "Frequent or recurrent thoughts of death, suicidal thoughts, suicide attempts, or suicide"},
    {SymptomKind::PhysicalProblems, "physical_problems", "Unexplained physical problems",
     "Unexplained physical problems, such as back pain or headaches"},
    {SymptomKind::Withdrawn, "withdrawn", "Becoming withdrawn, negative, or detached",
     "Becoming withdrawn, negative, or detached"},
    {SymptomKind::HighRiskActivities, "high_risk_activities", "Increased high-risk activities",
     "Increased engagement in high-risk activities"},
    {SymptomKind::Impulsivity, "impulsivity", "Greater impulsivity", "Greater impulsivity"},
    {SymptomKind::SubstanceUse, "substance_use", "Increased alcohol or drug use",
     "Increased use of alcohol or drugs"},
    {SymptomKind::Isolation, "isolation", "Isolating from family and friends",
     "Isolating from family and friends"},
    {SymptomKind::NeglectedResponsibilities, "neglected_responsibilities",
     "Inability to meet responsibilities",
     "Inability to meet the responsibilities of work and family or ignoring other important roles"},
};
static_assert(std::size(kSymptoms) == kSymptomCount);

constexpr DistortionInfo kDistortions[] = {
    {DistortionKind::SelectiveAbstraction, "selective_abstraction", "Selective abstraction"},
    {DistortionKind::Overgeneralizing, "overgeneralizing", "Overgeneralizing"},
    {DistortionKind::Personalization, "personalization", "Personalization"},
    {DistortionKind::CatastrophicThinking, "catastrophic_thinking", "Catastrophic thinking"},
    {DistortionKind::Minimization, "minimization", "Minimization"},
    {DistortionKind::ArbitraryInference, "arbitrary_inference", "Arbitrary inference"},
};
static_assert(std::size(kDistortions) == kDistortionCount);

}  // namespace

template <> std::span<const EnumEntry<AgeBracket>> enum_entries<AgeBracket>() { return kAge; }
template <> std::span<const EnumEntry<MaritalStatus>> enum_entries<MaritalStatus>() { return kMarital; }
template <> std::span<const EnumEntry<Resistance>> enum_entries<Resistance>() { return kResistance; }
template <> std::span<const EnumEntry<Severity4>> enum_entries<Severity4>() { return kSeverity4; }
template <> std::span<const EnumEntry<Exhibition>> enum_entries<Exhibition>() { return kExhibition; }
template <> std::span<const EnumEntry<DepressionSeverity>> enum_entries<DepressionSeverity>() {
  return kDepression;
}
template <> std::span<const EnumEntry<IdeationSeverity>> enum_entries<IdeationSeverity>() {
  return kIdeation;
}

template <class E>
std::string_view enum_label(E value) {
  for (const auto& e : enum_entries<E>()) {
    if (e.value == value) return e.label;
  }
  return "<invalid>";
}

template <class E>
std::optional<E> enum_from_label(std::string_view label) {
  for (const auto& e : enum_entries<E>()) {
    if (iequals(e.label, label)) return e.value;
  }
  return std::nullopt;
}

#define PROFSIM_INSTANTIATE_ENUM(E)                     \
  template std::string_view enum_label<E>(E);           \
  template std::optional<E> enum_from_label<E>(std::string_view);
PROFSIM_INSTANTIATE_ENUM(AgeBracket)
PROFSIM_INSTANTIATE_ENUM(MaritalStatus)
PROFSIM_INSTANTIATE_ENUM(Resistance)
PROFSIM_INSTANTIATE_ENUM(Severity4)
PROFSIM_INSTANTIATE_ENUM(Exhibition)
PROFSIM_INSTANTIATE_ENUM(DepressionSeverity)
PROFSIM_INSTANTIATE_ENUM(IdeationSeverity)
#undef PROFSIM_INSTANTIATE_ENUM

std::span<const SymptomInfo> symptom_table() { return kSymptoms; }
std::span<const DistortionInfo> distortion_table() { return kDistortions; }

const SymptomInfo& symptom_info(SymptomKind kind) {
  const auto i = static_cast<std::size_t>(kind);
  if (i >= kSymptomCount) throw Error(ErrorCode::InvalidArgument, "symptom kind out of range");
  return kSymptoms[i];
}

const DistortionInfo& distortion_info(DistortionKind kind) {
  const auto i = static_cast<std::size_t>(kind);
  if (i >= kDistortionCount) throw Error(ErrorCode::InvalidArgument, "distortion kind out of range");
  return kDistortions[i];
}

std::optional<SymptomKind> symptom_from_key(std::string_view key) {
  for (const auto& s : kSymptoms) {
    if (s.key == key) return s.kind;
  }
  return std::nullopt;
}

std::optional<DistortionKind> distortion_from_key(std::string_view key) {
  for (const auto& d : kDistortions) {
    if (d.key == key) return d.kind;
  }
  return std::nullopt;
}

std::optional<SymptomKind> symptom_from_name(std::string_view name) {
  for (const auto& s : kSymptoms) {
    if (iequals(s.name, name)) return s.kind;
  }
  return std::nullopt;
}

std::optional<DistortionKind> distortion_from_name(std::string_view name) {
  for (const auto& d : kDistortions) {
    if (iequals(d.name, name)) return d.kind;
  }
  return std::nullopt;
}

PsychologicalProfile PsychologicalProfile::blank() {
  PsychologicalProfile p;
  for (const auto& s : kSymptoms) p.symptoms[s.kind] = Severity4::NotExhibited;
  for (const auto& d : kDistortions) p.distortions[d.kind] = Exhibition::NotExhibited;
  return p;
}

// ---- validation ----------------------------------------------------------

namespace {

bool single_line_trimmed(std::string_view s) {
  return s.find('\n') == std::string_view::npos && s.find('\r') == std::string_view::npos &&
         trim(s) == s;
}

void check_free_text(ValidationReport& r, std::string_view path, const std::optional<std::string>& v,
                     bool unidentified_allowed_literal = false) {
  if (!v) return;
  if (v->empty()) {
    r.push_back({std::string(path), "present but empty (use null for unidentified)"});
  } else if (!single_line_trimmed(*v)) {
    r.push_back({std::string(path), "must be a single trimmed line"});
  } else if (!unidentified_allowed_literal && iequals(*v, kUnidentified)) {
    r.push_back({std::string(path), "literal 'Cannot be identified' must be stored as null"});
  }
}

template <class E>
void check_enum(ValidationReport& r, std::string_view path, E value) {
  if (!enum_in_domain(value)) {
    r.push_back({std::string(path),
                 fmt::format("value {} outside enumeration", static_cast<int>(value))});
  }
}

}  // namespace

ValidationReport validate_profile(const PsychologicalProfile& p) {
  ValidationReport r;
  check_free_text(r, "name", p.name);
  check_free_text(r, "gender", p.gender);
  check_enum(r, "age_bracket", p.age_bracket);
  check_enum(r, "marital_status", p.marital_status);
  check_free_text(r, "occupation", p.occupation);
  if (!p.situation.empty() && !single_line_trimmed(p.situation)) {
    r.push_back({"situation", "must be a single trimmed line"});
  }
  check_free_text(r, "counseling_history", p.counseling_history);
  check_enum(r, "resistance", p.resistance);

  if (p.symptoms.size() != kSymptomCount) {
    r.push_back({"symptoms", fmt::format("expected {} keys, found {}", kSymptomCount, p.symptoms.size())});
  }
  for (const auto& [kind, sev] : p.symptoms) {
    const auto i = static_cast<std::size_t>(kind);
    if (i >= kSymptomCount) {
      r.push_back({"symptoms", fmt::format("unknown symptom ordinal {}", i)});
      continue;
    }
    check_enum(r, fmt::format("symptoms.{}", kSymptoms[i].key), sev);
  }
  if (p.distortions.size() != kDistortionCount) {
    r.push_back({"distortions",
                 fmt::format("expected {} keys, found {}", kDistortionCount, p.distortions.size())});
  }
  for (const auto& [kind, ex] : p.distortions) {
    const auto i = static_cast<std::size_t>(kind);
    if (i >= kDistortionCount) {
      r.push_back({"distortions", fmt::format("unknown distortion ordinal {}", i)});
      continue;
    }
    check_enum(r, fmt::format("distortions.{}", kDistortions[i].key), ex);
  }
  check_enum(r, "depression_severity", p.depression_severity);
  check_enum(r, "suicidal_ideation", p.suicidal_ideation);
  check_enum(r, "homicidal_ideation", p.homicidal_ideation);
  return r;
}

ValidationReport validate_for_roleplay(const PsychologicalProfile& p) {
  auto r = validate_profile(p);
  if (trim(p.situation).empty()) r.push_back({"situation", "must be non-empty for role-play"});
  return r;
}

std::string format_report(const ValidationReport& report) {
  std::string out;
  for (const auto& v : report) {
    if (!out.empty()) out += "; ";
    out += v.path + ": " + v.message;
  }
  return out;
}

// ---- serialization -------------------------------------------------------

namespace {

json optional_text(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

void read_optional_text(const json& j, std::string_view key, std::optional<std::string>& out,
                        ValidationReport& r) {
  const std::string k(key);
  if (!j.contains(k) || j[k].is_null()) {
    out.reset();
    return;
  }
  if (!j[k].is_string()) {
    r.push_back({k, "must be a string or null"});
    return;
  }
  out = j[k].get<std::string>();
}

template <class E>
void read_enum(const json& j, std::string_view key, E& out, ValidationReport& r) {
  const std::string k(key);
  if (!j.contains(k)) {
    r.push_back({k, "missing"});
    return;
  }
  if (!j[k].is_string()) {
    r.push_back({k, "must be a string label"});
    return;
  }
  const auto label = j[k].get<std::string>();
  if (auto v = enum_from_label<E>(label)) {
    out = *v;
  } else {
    r.push_back({k, fmt::format("'{}' is not an allowed value", label)});
  }
}

}  // namespace

json profile_to_json(const PsychologicalProfile& p) {
  json j;
  j["profile_schema_version"] = kProfileSchemaVersion;
  j["name"] = optional_text(p.name);
  j["gender"] = optional_text(p.gender);
  j["age_bracket"] = enum_label(p.age_bracket);
  j["marital_status"] = enum_label(p.marital_status);
  j["occupation"] = optional_text(p.occupation);
  j["situation"] = p.situation;
  j["counseling_history"] = optional_text(p.counseling_history);
  j["resistance"] = enum_label(p.resistance);
  json symptoms = json::object();
  for (const auto& [kind, sev] : p.symptoms) {
    symptoms[std::string(symptom_info(kind).key)] = enum_label(sev);
  }
  j["symptoms"] = std::move(symptoms);
  json distortions = json::object();
  for (const auto& [kind, ex] : p.distortions) {
    distortions[std::string(distortion_info(kind).key)] = enum_label(ex);
  }
  j["distortions"] = std::move(distortions);
  j["depression_severity"] = enum_label(p.depression_severity);
  j["suicidal_ideation"] = enum_label(p.suicidal_ideation);
  j["homicidal_ideation"] = enum_label(p.homicidal_ideation);
  return j;
}

PsychologicalProfile profile_from_json(const json& j, ValidationReport& r) {
  PsychologicalProfile p;
  if (!j.is_object()) {
    r.push_back({"", "profile must be an object"});
    return p;
  }
  if (j.contains("profile_schema_version")) {
    const auto& v = j["profile_schema_version"];
    if (!v.is_number_integer() || v.get<int>() != kProfileSchemaVersion) {
      r.push_back({"profile_schema_version", fmt::format("expected {}", kProfileSchemaVersion)});
    }
  }
  read_optional_text(j, "name", p.name, r);
  read_optional_text(j, "gender", p.gender, r);
  read_enum(j, "age_bracket", p.age_bracket, r);
  read_enum(j, "marital_status", p.marital_status, r);
  read_optional_text(j, "occupation", p.occupation, r);
  if (j.contains("situation") && j["situation"].is_string()) {
    p.situation = j["situation"].get<std::string>();
  } else if (j.contains("situation") && !j["situation"].is_null()) {
    r.push_back({"situation", "must be a string"});
  }
  read_optional_text(j, "counseling_history", p.counseling_history, r);
  read_enum(j, "resistance", p.resistance, r);

  if (j.contains("symptoms") && j["symptoms"].is_object()) {
    for (const auto& [key, value] : j["symptoms"].items()) {
      const auto kind = symptom_from_key(key);
      const std::string path = "symptoms." + key;
      if (!kind) {
        r.push_back({path, "unknown symptom"});
        continue;
      }
      const auto sev = value.is_string() ? enum_from_label<Severity4>(value.get<std::string>())
                                         : std::nullopt;
      if (!sev) {
        r.push_back({path, "not a four-level severity"});
        p.symptoms[*kind] = Severity4::NotExhibited;
        continue;
      }
      p.symptoms[*kind] = *sev;
    }
  } else {
    r.push_back({"symptoms", "missing or not an object"});
  }
  if (j.contains("distortions") && j["distortions"].is_object()) {
    for (const auto& [key, value] : j["distortions"].items()) {
      const auto kind = distortion_from_key(key);
      const std::string path = "distortions." + key;
      if (!kind) {
        r.push_back({path, "unknown distortion"});
        continue;
      }
      const auto ex = value.is_string() ? enum_from_label<Exhibition>(value.get<std::string>())
                                        : std::nullopt;
      if (!ex) {
        r.push_back({path, "must be Exhibited or Not exhibited"});
        p.distortions[*kind] = Exhibition::NotExhibited;
        continue;
      }
      p.distortions[*kind] = *ex;
    }
  } else {
    r.push_back({"distortions", "missing or not an object"});
  }
  read_enum(j, "depression_severity", p.depression_severity, r);
  read_enum(j, "suicidal_ideation", p.suicidal_ideation, r);
  read_enum(j, "homicidal_ideation", p.homicidal_ideation, r);

  // Structural checks not already covered by a field-level report.
  for (auto& v : validate_profile(p)) {
    const bool seen = std::any_of(r.begin(), r.end(), [&](const Violation& x) {
      return x.path == v.path || (v.path == "symptoms" && istarts_with(x.path, "symptoms")) ||
             (v.path == "distortions" && istarts_with(x.path, "distortions"));
    });
    if (!seen) r.push_back(std::move(v));
  }
  return p;
}

PsychologicalProfile profile_from_json(const json& j) {
  ValidationReport r;
  auto p = profile_from_json(j, r);
  if (!r.empty()) throw Error(ErrorCode::InvalidProfile, format_report(r));
  return p;
}

json to_json(const ProfileRecord& r) {
  json j = profile_to_json(r.profile);
  j["conversation_id"] = r.conversation_id;
  return j;
}

ProfileRecord profile_record_from_json(const json& j) {
  if (!j.is_object() || !j.contains("conversation_id") || !j["conversation_id"].is_string()) {
    throw Error(ErrorCode::SchemaViolation, "profile record needs a string conversation_id");
  }
  return ProfileRecord{j["conversation_id"].get<std::string>(), profile_from_json(j)};
}

std::vector<ProfileRecord> read_profiles(const std::filesystem::path& path) {
  std::vector<ProfileRecord> out;
  for (const auto& j : read_jsonl_strict(path)) out.push_back(profile_record_from_json(j));
  return out;
}

void write_profiles(const std::filesystem::path& path, std::span<const ProfileRecord> records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

// ---- system prompt -------------------------------------------------------

namespace {

constexpr std::string_view kPreamble =
    "You are role-playing a client talking with a supporter. Speak as this person would, in "
    "their own words, and stay consistent with the profile below in every reply.";
constexpr std::string_view kDemographics = "## Demographics";
constexpr std::string_view kSituational = "## Situational Context";
constexpr std::string_view kManifestations = "## Manifestations";

constexpr std::string_view kName = "Name";
constexpr std::string_view kGender = "Gender";
constexpr std::string_view kAgeKey = "Age";
constexpr std::string_view kMaritalKey = "Marital Status";
constexpr std::string_view kOccupation = "Occupation";
constexpr std::string_view kSituation = "Situation of the Client";
constexpr std::string_view kHistory = "Counseling History";
constexpr std::string_view kResistanceKey = "Resistance Toward the Support";
constexpr std::string_view kSymptomHeader = "Symptom Severity";
constexpr std::string_view kDistortionHeader = "Cognitive Distortion Exhibition";
constexpr std::string_view kDepressionKey = "Depression Severity";
constexpr std::string_view kSuicidalKey = "Suicidal Ideation Severity";
constexpr std::string_view kHomicidalKey = "Homicidal Ideation Severity";

void item(std::string& out, std::string_view key, std::string_view value) {
  out += "- ";
  out += key;
  out += ": ";
  out += value;
  out += '\n';
}

}  // namespace

std::string render_system_prompt(const PsychologicalProfile& p) {
  if (auto r = validate_for_roleplay(p); !r.empty()) {
    throw Error(ErrorCode::InvalidProfile, format_report(r));
  }
  std::string out;
  out += kPreamble;
  out += "\n\n";

  out += kDemographics;
  out += '\n';
  if (p.name) item(out, kName, *p.name);
  if (p.gender) item(out, kGender, *p.gender);
  if (p.age_bracket != AgeBracket::Unidentified) item(out, kAgeKey, enum_label(p.age_bracket));
  if (p.marital_status != MaritalStatus::Unidentified) {
    item(out, kMaritalKey, enum_label(p.marital_status));
  }
  if (p.occupation) item(out, kOccupation, *p.occupation);
  out += '\n';

  out += kSituational;
  out += '\n';
  item(out, kSituation, p.situation);
  if (p.counseling_history) item(out, kHistory, *p.counseling_history);
  if (p.resistance != Resistance::Unidentified) item(out, kResistanceKey, enum_label(p.resistance));
  out += '\n';

  out += kManifestations;
  out += '\n';
  const bool any_symptom = std::any_of(p.symptoms.begin(), p.symptoms.end(), [](const auto& kv) {
    return kv.second != Severity4::NotExhibited;
  });
  if (any_symptom) {
    out += "- ";
    out += kSymptomHeader;
    out += ":\n";
    for (const auto& [kind, sev] : p.symptoms) {
      if (sev == Severity4::NotExhibited) continue;
      out += "  ";
      item(out, symptom_info(kind).name, enum_label(sev));
    }
  }
  const bool any_distortion = std::any_of(p.distortions.begin(), p.distortions.end(),
                                          [](const auto& kv) { return kv.second == Exhibition::Exhibited; });
  if (any_distortion) {
    out += "- ";
    out += kDistortionHeader;
    out += ":\n";
    for (const auto& [kind, ex] : p.distortions) {
      if (ex != Exhibition::Exhibited) continue;
      out += "  ";
      item(out, distortion_info(kind).name, enum_label(ex));
    }
  }
  if (p.depression_severity != DepressionSeverity::Unidentified) {
    item(out, kDepressionKey, enum_label(p.depression_severity));
  }
  if (p.suicidal_ideation != IdeationSeverity::Unidentified) {
    item(out, kSuicidalKey, enum_label(p.suicidal_ideation));
  }
  if (p.homicidal_ideation != IdeationSeverity::Unidentified) {
    item(out, kHomicidalKey, enum_label(p.homicidal_ideation));
  }
  return out;
}

namespace {

[[noreturn]] void prompt_error(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::SchemaViolation, fmt::format("system prompt line {}: {}", line_no, why));
}

template <class E>
E parse_label(std::string_view value, std::size_t line_no) {
  auto v = enum_from_label<E>(value);
  if (!v) prompt_error(line_no, fmt::format("unknown value '{}'", value));
  return *v;
}

// Splits "- Key: value" (after any indentation has been removed).
bool split_item(std::string_view line, std::string& key, std::string& value) {
  if (line.substr(0, 2) != "- ") return false;
  line.remove_prefix(2);
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return false;
  key = std::string(line.substr(0, colon));
  auto rest = line.substr(colon + 1);
  if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  value = std::string(rest);
  return true;
}

}  // namespace

PsychologicalProfile parse_system_prompt(std::string_view text) {
  PsychologicalProfile p = PsychologicalProfile::blank();
  enum class Section { Preamble, Demographics, Situational, Manifestations };
  enum class Sublist { None, Symptoms, Distortions };
  Section section = Section::Preamble;
  Sublist sublist = Sublist::None;
  bool saw_situation = false;

  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string_view line = lines[i];
    if (line.empty()) continue;
    if (line == kDemographics) {
      if (section != Section::Preamble) prompt_error(line_no, "section out of order");
      section = Section::Demographics;
      continue;
    }
    if (line == kSituational) {
      if (section != Section::Demographics) prompt_error(line_no, "section out of order");
      section = Section::Situational;
      continue;
    }
    if (line == kManifestations) {
      if (section != Section::Situational) prompt_error(line_no, "section out of order");
      section = Section::Manifestations;
      continue;
    }
    if (section == Section::Preamble) continue;

    std::string key;
    std::string value;
    if (line.substr(0, 2) == "  ") {
      if (section != Section::Manifestations || sublist == Sublist::None ||
          !split_item(line.substr(2), key, value)) {
        prompt_error(line_no, "unexpected indented line");
      }
      if (sublist == Sublist::Symptoms) {
        auto kind = symptom_from_name(key);
        if (!kind) prompt_error(line_no, fmt::format("unknown symptom '{}'", key));
        p.symptoms[*kind] = parse_label<Severity4>(value, line_no);
      } else {
        auto kind = distortion_from_name(key);
        if (!kind) prompt_error(line_no, fmt::format("unknown distortion '{}'", key));
        p.distortions[*kind] = parse_label<Exhibition>(value, line_no);
      }
      continue;
    }
    sublist = Sublist::None;
    if (!split_item(line, key, value)) prompt_error(line_no, "expected '- Key: value'");

    switch (section) {
      case Section::Demographics:
        if (key == kName) p.name = value;
        else if (key == kGender) p.gender = value;
        else if (key == kAgeKey) p.age_bracket = parse_label<AgeBracket>(value, line_no);
        else if (key == kMaritalKey) p.marital_status = parse_label<MaritalStatus>(value, line_no);
        else if (key == kOccupation) p.occupation = value;
        else prompt_error(line_no, fmt::format("unknown demographic '{}'", key));
        break;
      case Section::Situational:
        if (key == kSituation) {
          p.situation = value;
          saw_situation = true;
        } else if (key == kHistory) {
          p.counseling_history = value;
        } else if (key == kResistanceKey) {
          p.resistance = parse_label<Resistance>(value, line_no);
        } else {
          prompt_error(line_no, fmt::format("unknown situational entry '{}'", key));
        }
        break;
      case Section::Manifestations:
        if (key == kSymptomHeader && value.empty()) sublist = Sublist::Symptoms;
        else if (key == kDistortionHeader && value.empty()) sublist = Sublist::Distortions;
        else if (key == kDepressionKey) p.depression_severity = parse_label<DepressionSeverity>(value, line_no);
        else if (key == kSuicidalKey) p.suicidal_ideation = parse_label<IdeationSeverity>(value, line_no);
        else if (key == kHomicidalKey) p.homicidal_ideation = parse_label<IdeationSeverity>(value, line_no);
        else prompt_error(line_no, fmt::format("unknown manifestation '{}'", key));
        break;
      case Section::Preamble:
        break;
    }
  }
  if (section != Section::Manifestations) prompt_error(lines.size(), "missing sections");
  if (!saw_situation) prompt_error(lines.size(), "missing situation");
  return p;
}

// ---- categorical attributes ----------------------------------------------

std::string CategoricalAttribute::path() const {
  switch (kind) {
    case AttributeKind::Symptom:
      return "symptoms." + std::string(symptom_info(static_cast<SymptomKind>(index)).key);
    case AttributeKind::Distortion:
      return "distortions." + std::string(distortion_info(static_cast<DistortionKind>(index)).key);
    case AttributeKind::DepressionSeverity: return "depression_severity";
    case AttributeKind::SuicidalIdeation: return "suicidal_ideation";
    case AttributeKind::HomicidalIdeation: return "homicidal_ideation";
    case AttributeKind::Resistance: return "resistance";
    case AttributeKind::AgeBracket: return "age_bracket";
    case AttributeKind::MaritalStatus: return "marital_status";
  }
  return {};
}

std::optional<CategoricalAttribute> attribute_from_path(std::string_view path) {
  if (istarts_with(path, "symptoms.")) {
    if (auto k = symptom_from_key(path.substr(9))) {
      return CategoricalAttribute{AttributeKind::Symptom, static_cast<int>(*k)};
    }
    return std::nullopt;
  }
  if (istarts_with(path, "distortions.")) {
    if (auto k = distortion_from_key(path.substr(12))) {
      return CategoricalAttribute{AttributeKind::Distortion, static_cast<int>(*k)};
    }
    return std::nullopt;
  }
  if (path == "depression_severity") return CategoricalAttribute{AttributeKind::DepressionSeverity};
  if (path == "suicidal_ideation") return CategoricalAttribute{AttributeKind::SuicidalIdeation};
  if (path == "homicidal_ideation") return CategoricalAttribute{AttributeKind::HomicidalIdeation};
  if (path == "resistance") return CategoricalAttribute{AttributeKind::Resistance};
  if (path == "age_bracket") return CategoricalAttribute{AttributeKind::AgeBracket};
  if (path == "marital_status") return CategoricalAttribute{AttributeKind::MaritalStatus};
  return std::nullopt;
}

namespace {

template <class E>
std::vector<std::string> labels_of(bool include_unidentified) {
  std::vector<std::string> out;
  for (const auto& e : enum_entries<E>()) {
    if (e.label == kUnidentified) continue;
    out.emplace_back(e.label);
  }
  if (include_unidentified && enum_from_label<E>(kUnidentified)) out.emplace_back(kUnidentified);
  return out;
}

template <class E>
void assign(E& field, std::string_view label) {
  auto v = enum_from_label<E>(label);
  if (!v) throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' is not an allowed value", label));
  field = *v;
}

}  // namespace

std::vector<std::string> domain_labels(const CategoricalAttribute& attr, bool include_unidentified) {
  switch (attr.kind) {
    case AttributeKind::Symptom: return labels_of<Severity4>(false);
    case AttributeKind::Distortion: return labels_of<Exhibition>(false);
    case AttributeKind::DepressionSeverity: return labels_of<DepressionSeverity>(include_unidentified);
    case AttributeKind::SuicidalIdeation:
    case AttributeKind::HomicidalIdeation: return labels_of<IdeationSeverity>(include_unidentified);
    case AttributeKind::Resistance: return labels_of<Resistance>(include_unidentified);
    case AttributeKind::AgeBracket: return labels_of<AgeBracket>(include_unidentified);
    case AttributeKind::MaritalStatus: return labels_of<MaritalStatus>(include_unidentified);
  }
  return {};
}

std::string get_label(const PsychologicalProfile& p, const CategoricalAttribute& attr) {
  switch (attr.kind) {
    case AttributeKind::Symptom: {
      auto it = p.symptoms.find(static_cast<SymptomKind>(attr.index));
      return std::string(it == p.symptoms.end() ? "<missing>" : enum_label(it->second));
    }
    case AttributeKind::Distortion: {
      auto it = p.distortions.find(static_cast<DistortionKind>(attr.index));
      return std::string(it == p.distortions.end() ? "<missing>" : enum_label(it->second));
    }
    case AttributeKind::DepressionSeverity: return std::string(enum_label(p.depression_severity));
    case AttributeKind::SuicidalIdeation: return std::string(enum_label(p.suicidal_ideation));
    case AttributeKind::HomicidalIdeation: return std::string(enum_label(p.homicidal_ideation));
    case AttributeKind::Resistance: return std::string(enum_label(p.resistance));
    case AttributeKind::AgeBracket: return std::string(enum_label(p.age_bracket));
    case AttributeKind::MaritalStatus: return std::string(enum_label(p.marital_status));
  }
  return {};
}

void set_label(PsychologicalProfile& p, const CategoricalAttribute& attr, std::string_view label) {
  switch (attr.kind) {
    case AttributeKind::Symptom:
      assign(p.symptoms[static_cast<SymptomKind>(attr.index)], label);
      return;
    case AttributeKind::Distortion:
      assign(p.distortions[static_cast<DistortionKind>(attr.index)], label);
      return;
    case AttributeKind::DepressionSeverity: assign(p.depression_severity, label); return;
    case AttributeKind::SuicidalIdeation: assign(p.suicidal_ideation, label); return;
    case AttributeKind::HomicidalIdeation: assign(p.homicidal_ideation, label); return;
    case AttributeKind::Resistance: assign(p.resistance, label); return;
    case AttributeKind::AgeBracket: assign(p.age_bracket, label); return;
    case AttributeKind::MaritalStatus: assign(p.marital_status, label); return;
  }
}

// ---- noise augmentation --------------------------------------------------

json to_json(const ProfileDiff& d) {
  json changed = json::array();
  for (const auto& c : d.changed) {
    changed.push_back({{"path", c.path}, {"old", c.old_value}, {"new", c.new_value}});
  }
  return json{{"changed", std::move(changed)}, {"seed", d.seed}, {"ratio", d.ratio}};
}

ProfileDiff profile_diff_from_json(const json& j) {
  try {
    ProfileDiff d;
    d.seed = j.at("seed").get<std::uint64_t>();
    d.ratio = j.at("ratio").get<double>();
    for (const auto& c : j.at("changed")) {
      d.changed.push_back({c.at("path").get<std::string>(), c.at("old").get<std::string>(),
                           c.at("new").get<std::string>()});
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("profile diff: ") + e.what());
  }
}

std::vector<CategoricalAttribute> eligible_attributes(const PsychologicalProfile& p) {
  std::vector<CategoricalAttribute> out;
  for (const auto& [kind, sev] : p.symptoms) {
    if (sev != Severity4::NotExhibited) {
      out.push_back({AttributeKind::Symptom, static_cast<int>(kind)});
    }
  }
  for (const auto& [kind, ex] : p.distortions) {
    out.push_back({AttributeKind::Distortion, static_cast<int>(kind)});
  }
  if (p.depression_severity != DepressionSeverity::Unidentified) {
    out.push_back({AttributeKind::DepressionSeverity});
  }
  if (p.suicidal_ideation != IdeationSeverity::Unidentified) {
    out.push_back({AttributeKind::SuicidalIdeation});
  }
  if (p.homicidal_ideation != IdeationSeverity::Unidentified) {
    out.push_back({AttributeKind::HomicidalIdeation});
  }
  if (p.resistance != Resistance::Unidentified) out.push_back({AttributeKind::Resistance});
  return out;
}

std::size_t perturbation_count(double ratio, std::size_t eligible) {
  if (eligible == 0) return 0;
  // Half-up; the epsilon keeps exact halves like 0.3 * 5 from rounding down.
  const double scaled = ratio * static_cast<double>(eligible);
  const auto rounded = static_cast<std::size_t>(std::floor(scaled + 0.5 + 1e-9));
  return std::min(eligible, std::max<std::size_t>(1, rounded));
}

PerturbationResult perturb_profile(const PsychologicalProfile& p, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("noise ratio {} outside (0, 1]", ratio));
  }
  if (auto r = validate_profile(p); !r.empty()) {
    throw Error(ErrorCode::InvalidProfile, format_report(r));
  }
  const auto eligible = eligible_attributes(p);
  if (eligible.empty()) throw Error(ErrorCode::NoEligibleAttributes, "profile has no categorical signal");

  const std::size_t k = perturbation_count(ratio, eligible.size());
  Rng rng(seed);
  std::vector<std::size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(chosen.begin(), chosen.end());

  PerturbationResult result{p, ProfileDiff{{}, seed, ratio}};
  for (std::size_t idx : chosen) {
    const auto& attr = eligible[idx];
    const std::string old_value = get_label(p, attr);
    std::vector<std::string> candidates;
    for (auto& label : domain_labels(attr, false)) {
      if (label != old_value) candidates.push_back(std::move(label));
    }
    const std::string& new_value = candidates[rng.uniform_index(candidates.size())];
    set_label(result.noisy, attr, new_value);
    result.diff.changed.push_back({attr.path(), old_value, new_value});
  }
  return result;
}

}  // namespace profsim
