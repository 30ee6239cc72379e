#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/util.hpp"

namespace profsim {

inline constexpr int kProfileSchemaVersion = 2;
inline constexpr std::string_view kUnidentified = "Cannot be identified";

enum class AgeBracket { Age0To24, Age25To44, Age45To64, Age65Plus, Unidentified };
enum class MaritalStatus { Single, Married, Divorced, Widowed, Separated, InRelationship, Other, Unidentified };
enum class Resistance { Low, Medium, High, Unidentified };
enum class Severity4 { NotExhibited, Mild, Moderate, Severe };
enum class Exhibition { NotExhibited, Exhibited };
enum class DepressionSeverity { Minimal, Mild, Moderate, Severe, Unidentified };
enum class IdeationSeverity { No, Mild, Moderate, Severe, Unidentified };

// Order matches the symptom list of the extraction prompt.
enum class SymptomKind {
  Sadness,
  Irritability,
  LossOfInterest,
  SleepDisturbance,
  LackOfEnergy,
  AppetiteChange,
  Anxiety,
  SlowedMovement,
  Worthlessness,
  TroubleConcentrating,
  SuicidalThoughts,
  PhysicalProblems,
  Withdrawn,
  HighRiskActivities,
  Impulsivity,
  SubstanceUse,
  Isolation,
  NeglectedResponsibilities,
};
inline constexpr std::size_t kSymptomCount = 18;

enum class DistortionKind {
  SelectiveAbstraction,
  Overgeneralizing,
  Personalization,
  CatastrophicThinking,
  Minimization,
  ArbitraryInference,
};
inline constexpr std::size_t kDistortionCount = 6;

// ---- enum metadata -------------------------------------------------------

template <class E>
struct EnumEntry {
  E value;
  std::string_view label;  // serialized and rendered form
};

template <class E>
std::span<const EnumEntry<E>> enum_entries();

template <> std::span<const EnumEntry<AgeBracket>> enum_entries<AgeBracket>();
template <> std::span<const EnumEntry<MaritalStatus>> enum_entries<MaritalStatus>();
template <> std::span<const EnumEntry<Resistance>> enum_entries<Resistance>();
template <> std::span<const EnumEntry<Severity4>> enum_entries<Severity4>();
template <> std::span<const EnumEntry<Exhibition>> enum_entries<Exhibition>();
template <> std::span<const EnumEntry<DepressionSeverity>> enum_entries<DepressionSeverity>();
template <> std::span<const EnumEntry<IdeationSeverity>> enum_entries<IdeationSeverity>();

/// Label of an in-domain value; "<invalid>" otherwise.
template <class E>
std::string_view enum_label(E value);

/// Case-insensitive label lookup.
template <class E>
std::optional<E> enum_from_label(std::string_view label);

template <class E>
bool enum_in_domain(E value) {
  for (const auto& e : enum_entries<E>()) {
    if (e.value == value) return true;
  }
  return false;
}

struct SymptomInfo {
  SymptomKind kind;
  std::string_view key;          // snake_case identifier used in files and paths
  std::string_view name;         // short display name
  std::string_view description;  // wording used in the extraction prompt
};

struct DistortionInfo {
  DistortionKind kind;
  std::string_view key;
  std::string_view name;
};

std::span<const SymptomInfo> symptom_table();
std::span<const DistortionInfo> distortion_table();
const SymptomInfo& symptom_info(SymptomKind kind);
const DistortionInfo& distortion_info(DistortionKind kind);
std::optional<SymptomKind> symptom_from_key(std::string_view key);
std::optional<DistortionKind> distortion_from_key(std::string_view key);
std::optional<SymptomKind> symptom_from_name(std::string_view name);
std::optional<DistortionKind> distortion_from_name(std::string_view name);

// ---- the profile ---------------------------------------------------------

/// Structured client representation: demographics, situational context and
/// depression-related manifestations. Free-text fields hold nullopt when the
/// attribute could not be identified.
struct PsychologicalProfile {
  std::optional<std::string> name;
  std::optional<std::string> gender;
  AgeBracket age_bracket = AgeBracket::Unidentified;
  MaritalStatus marital_status = MaritalStatus::Unidentified;
  std::optional<std::string> occupation;

  std::string situation;
  std::optional<std::string> counseling_history;
  Resistance resistance = Resistance::Unidentified;

  std::map<SymptomKind, Severity4> symptoms;
  std::map<DistortionKind, Exhibition> distortions;
  DepressionSeverity depression_severity = DepressionSeverity::Unidentified;
  IdeationSeverity suicidal_ideation = IdeationSeverity::Unidentified;
  IdeationSeverity homicidal_ideation = IdeationSeverity::Unidentified;

  bool operator==(const PsychologicalProfile&) const = default;

  /// All 18 symptoms and 6 distortions present and NotExhibited; everything else unidentified.
  static PsychologicalProfile blank();
};

struct Violation {
  std::string path;
  std::string message;

  bool operator==(const Violation&) const = default;
};
using ValidationReport = std::vector<Violation>;

/// Structural invariants: complete symptom/distortion maps, in-domain enums,
/// free text trimmed and single-line. Empty report iff valid.
ValidationReport validate_profile(const PsychologicalProfile& p);
/// validate_profile plus the role-play requirement of a non-empty situation.
ValidationReport validate_for_roleplay(const PsychologicalProfile& p);
std::string format_report(const ValidationReport& report);

// ---- serialization -------------------------------------------------------

json profile_to_json(const PsychologicalProfile& p);
/// Lenient conversion: out-of-schema values are reported (with their path)
/// and left at the Unidentified/NotExhibited default.
PsychologicalProfile profile_from_json(const json& j, ValidationReport& report);
/// Strict conversion: throws InvalidProfile on any violation.
PsychologicalProfile profile_from_json(const json& j);

struct ProfileRecord {
  std::string conversation_id;
  PsychologicalProfile profile;
};

json to_json(const ProfileRecord& r);
ProfileRecord profile_record_from_json(const json& j);
std::vector<ProfileRecord> read_profiles(const std::filesystem::path& path);
void write_profiles(const std::filesystem::path& path, std::span<const ProfileRecord> records);

// ---- system prompt -------------------------------------------------------

/// Deterministic role-play prompt. Omits Unidentified attributes and
/// NotExhibited symptoms/distortions. Throws InvalidProfile.
std::string render_system_prompt(const PsychologicalProfile& p);
/// Inverse of render_system_prompt. Throws SchemaViolation on malformed input.
PsychologicalProfile parse_system_prompt(std::string_view text);

// ---- categorical attributes (stratification, noise, adherence) -----------

enum class AttributeKind {
  Symptom,
  Distortion,
  DepressionSeverity,
  SuicidalIdeation,
  HomicidalIdeation,
  Resistance,
  AgeBracket,
  MaritalStatus,
};

struct CategoricalAttribute {
  AttributeKind kind;
  int index = 0;  // symptom / distortion ordinal; 0 otherwise

  std::string path() const;
  bool operator==(const CategoricalAttribute&) const = default;
};

std::optional<CategoricalAttribute> attribute_from_path(std::string_view path);
/// In-domain labels in enum order, optionally followed by "Cannot be identified".
std::vector<std::string> domain_labels(const CategoricalAttribute& attr, bool include_unidentified);
std::string get_label(const PsychologicalProfile& p, const CategoricalAttribute& attr);
void set_label(PsychologicalProfile& p, const CategoricalAttribute& attr, std::string_view label);

// ---- profile noise augmentation ------------------------------------------

struct AttributeChange {
  std::string path;
  std::string old_value;
  std::string new_value;

  bool operator==(const AttributeChange&) const = default;
};

struct ProfileDiff {
  std::vector<AttributeChange> changed;
  std::uint64_t seed = 0;
  double ratio = 0.3;

  bool operator==(const ProfileDiff&) const = default;
};

json to_json(const ProfileDiff& d);
ProfileDiff profile_diff_from_json(const json& j);

/// Attributes eligible for noise, in canonical order: exhibited symptoms, all
/// six distortions, then depression severity, suicidal and homicidal ideation
/// and resistance when not Unidentified.
std::vector<CategoricalAttribute> eligible_attributes(const PsychologicalProfile& p);
/// max(1, round_half_up(ratio * eligible)), capped at eligible.
std::size_t perturbation_count(double ratio, std::size_t eligible);

struct PerturbationResult {
  PsychologicalProfile noisy;
  ProfileDiff diff;
};

/// Changes perturbation_count(ratio, |eligible|) attributes, each to a value
/// drawn uniformly from its clinical domain minus the old value.
/// Throws InvalidProfile, NoEligibleAttributes, InvalidArgument (ratio outside (0,1]).
PerturbationResult perturb_profile(const PsychologicalProfile& p, double ratio, std::uint64_t seed);

}  // namespace profsim
