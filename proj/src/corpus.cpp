#include "profsim/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "profsim/kernels.hpp"

namespace profsim {

std::string_view to_string(Speaker s) noexcept { return s == Speaker::Supporter ? "supporter" : "client"; }

std::string_view to_string(Source s) noexcept {
  switch (s) {
    case Source::RED: return "RED";
    case Source::HOPE: return "HOPE";
    case Source::ESC: return "ESC";
    case Source::AnnoMI: return "AnnoMI";
    case Source::Synthetic: return "Synthetic";
    case Source::Other: return "Other";
  }
  return "Other";
}

std::optional<Speaker> speaker_from_string(std::string_view s) {
  if (iequals(s, "supporter")) return Speaker::Supporter;
  if (iequals(s, "client")) return Speaker::Client;
  return std::nullopt;
}

std::optional<Source> source_from_string(std::string_view s) {
  for (Source src : {Source::RED, Source::HOPE, Source::ESC, Source::AnnoMI, Source::Synthetic, Source::Other}) {
    if (iequals(s, to_string(src))) return src;
  }
  return std::nullopt;
}

void validate_conversation(const Conversation& c) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::SchemaViolation, c.id.empty() ? why : c.id + ": " + why);
  };
  if (c.id.empty()) fail("id must be a non-empty string");
  if (c.turns.size() < 2) fail("needs at least 2 turns");
  bool client = false;
  bool supporter = false;
  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    const auto& t = c.turns[i];
    if (trim(t.text).empty()) fail(fmt::format("turn {} has empty text", i));
    if (i > 0 && t.index <= c.turns[i - 1].index) fail(fmt::format("turn {} index does not increase", i));
    (t.speaker == Speaker::Client ? client : supporter) = true;
  }
  if (!client || !supporter) fail("needs at least one client turn and one supporter turn");
}

json to_json(const Conversation& c) {
  json turns = json::array();
  for (const auto& t : c.turns) turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
  json j{{"id", c.id}, {"source", to_string(c.source)}, {"turns", std::move(turns)}, {"labels", c.labels}};
  if (c.depression_related) j["depression_related"] = *c.depression_related;
  return j;
}

namespace {

[[noreturn]] void schema(const std::string& why) { throw Error(ErrorCode::SchemaViolation, why); }

void add_turn(Conversation& c, Speaker speaker, std::string_view text) {
  c.turns.push_back(Turn{speaker, trim(text), c.turns.size()});
}

std::map<std::string, std::string> string_labels(const json& j, std::initializer_list<std::string_view> skip) {
  std::map<std::string, std::string> labels;
  for (const auto& [k, v] : j.items()) {
    if (std::find(skip.begin(), skip.end(), k) != skip.end()) continue;
    if (v.is_string()) labels[k] = v.get<std::string>();
  }
  return labels;
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) schema(fmt::format("'{}' must be a string", key));
  return j[key].get<std::string>();
}

std::string id_field(const json& j, const char* key) {
  if (!j.contains(key)) schema(fmt::format("missing '{}'", key));
  const auto& v = j[key];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  schema(fmt::format("'{}' must be a string or integer", key));
}

}  // namespace

Conversation conversation_from_json(const json& j, std::optional<Source> default_source) {
  if (!j.is_object()) schema("record must be an object");
  Conversation c;
  c.id = string_field(j, "id");
  if (j.contains("source")) {
    auto s = j["source"].is_string() ? source_from_string(j["source"].get<std::string>()) : std::nullopt;
    if (!s) schema("unknown source");
    c.source = *s;
  } else {
    c.source = default_source.value_or(Source::Other);
  }
  if (!j.contains("turns") || !j["turns"].is_array()) schema("'turns' must be an array");
  for (const auto& t : j["turns"]) {
    if (!t.is_object()) schema("turn must be an object");
    auto sp = speaker_from_string(string_field(t, "speaker"));
    if (!sp) schema("speaker must be supporter or client");
    add_turn(c, *sp, string_field(t, "text"));
  }
  if (j.contains("labels")) {
    if (!j["labels"].is_object()) schema("'labels' must be an object");
    for (const auto& [k, v] : j["labels"].items()) {
      if (!v.is_string()) schema(fmt::format("label '{}' must be a string", k));
      c.labels[k] = v.get<std::string>();
    }
  }
  if (j.contains("depression_related") && !j["depression_related"].is_null()) {
    if (!j["depression_related"].is_boolean()) schema("'depression_related' must be a boolean");
    c.depression_related = j["depression_related"].get<bool>();
  }
  validate_conversation(c);
  return c;
}

json to_json(const ParseIssue& issue) {
  return json{{"line", issue.line}, {"code", to_string(issue.code)}, {"reason", issue.reason}};
}

// ---- raw layouts ---------------------------------------------------------

namespace {

enum class Layout { Canonical, EscDialog, RedThread, AnnoMiRow, HopeRow, Unknown };

Layout detect_layout(const json& j) {
  if (!j.is_object()) return Layout::Unknown;
  if (j.contains("turns")) return Layout::Canonical;
  if (j.contains("dialog")) return Layout::EscDialog;
  if (j.contains("posts")) return Layout::RedThread;
  if (j.contains("utterance_text") && j.contains("transcript_id")) return Layout::AnnoMiRow;
  if (j.contains("utterance") && j.contains("dialog_id")) return Layout::HopeRow;
  return Layout::Unknown;
}

Conversation adapt_esc(const json& j, std::size_t ordinal) {
  Conversation c;
  c.id = j.contains("id") ? id_field(j, "id") : fmt::format("esc-{:05d}", ordinal);
  c.source = Source::ESC;
  if (!j["dialog"].is_array()) schema("'dialog' must be an array");
  for (const auto& t : j["dialog"]) {
    const auto who = string_field(t, "speaker");
    Speaker sp;
    if (iequals(who, "seeker") || iequals(who, "usr")) {
      sp = Speaker::Client;
    } else if (iequals(who, "supporter") || iequals(who, "sys")) {
      sp = Speaker::Supporter;
    } else {
      schema(fmt::format("unknown ESC speaker '{}'", who));
    }
    add_turn(c, sp, string_field(t, "content"));
  }
  c.labels = string_labels(j, {"id", "dialog"});
  return c;
}

Conversation adapt_red(const json& j) {
  Conversation c;
  c.id = j.contains("thread_id") ? id_field(j, "thread_id") : id_field(j, "id");
  c.source = Source::RED;
  const auto op = string_field(j, "op");
  if (!j["posts"].is_array()) schema("'posts' must be an array");
  std::set<std::string> supporters;
  for (const auto& p : j["posts"]) {
    const auto author = string_field(p, "author");
    const bool is_op = author == op;
    if (!is_op) supporters.insert(author);
    add_turn(c, is_op ? Speaker::Client : Speaker::Supporter, string_field(p, "text"));
  }
  if (supporters.size() > 1) {
    schema(fmt::format("thread has {} distinct speakers; only two-party conversations are supported",
                       supporters.size() + 1));
  }
  c.labels = string_labels(j, {"thread_id", "id", "op", "posts"});
  return c;
}

struct RowGroup {
  std::size_t first_line = 0;
  std::string key;
  std::vector<json> rows;
};

Conversation adapt_annomi(const RowGroup& g) {
  Conversation c;
  c.id = "annomi-" + g.key;
  c.source = Source::AnnoMI;
  for (const auto& r : g.rows) {
    const auto who = string_field(r, "interlocutor");
    Speaker sp;
    if (iequals(who, "client")) {
      sp = Speaker::Client;
    } else if (iequals(who, "therapist")) {
      sp = Speaker::Supporter;
    } else {
      schema(fmt::format("unknown AnnoMI interlocutor '{}'", who));
    }
    add_turn(c, sp, string_field(r, "utterance_text"));
  }
  c.labels = string_labels(g.rows.front(), {"transcript_id", "interlocutor", "utterance_text", "utterance_id",
                                            "timestamp", "main_therapist_behaviour", "client_talk_type"});
  return c;
}

Conversation adapt_hope(const RowGroup& g) {
  Conversation c;
  c.id = "hope-" + g.key;
  c.source = Source::HOPE;
  for (const auto& r : g.rows) {
    const auto who = string_field(r, "type");
    Speaker sp;
    if (iequals(who, "P")) {
      sp = Speaker::Client;
    } else if (iequals(who, "T")) {
      sp = Speaker::Supporter;
    } else {
      schema(fmt::format("unknown HOPE speaker type '{}'", who));
    }
    add_turn(c, sp, string_field(r, "utterance"));
  }
  c.labels = string_labels(g.rows.front(), {"dialog_id", "type", "utterance", "id"});
  return c;
}

}  // namespace

ParseResult parse_corpus(const std::filesystem::path& path, std::optional<Source> source) {
  const auto lines = read_jsonl(path);
  ParseResult out;

  // Each produced conversation remembers its line so duplicate ids can be reported there.
  struct Pending {
    std::size_t line;
    std::optional<Conversation> conv;  // empty for a row group not yet built
    Layout layout = Layout::Unknown;
    std::string group_key;
  };
  std::vector<Pending> pending;
  std::map<std::pair<int, std::string>, RowGroup> groups;
  std::size_t esc_ordinal = 0;

  for (const auto& line : lines) {
    if (!line.value) {
      out.issues.push_back({line.line_number, ErrorCode::SchemaViolation, "invalid JSON: " + line.error});
      continue;
    }
    const json& j = *line.value;
    const Layout layout = detect_layout(j);
    try {
      switch (layout) {
        case Layout::Canonical:
          pending.push_back({line.line_number, conversation_from_json(j, source), layout, {}});
          break;
        case Layout::EscDialog:
          pending.push_back({line.line_number, adapt_esc(j, esc_ordinal++), layout, {}});
          break;
        case Layout::RedThread:
          pending.push_back({line.line_number, adapt_red(j), layout, {}});
          break;
        case Layout::AnnoMiRow:
        case Layout::HopeRow: {
          const std::string key = id_field(j, layout == Layout::AnnoMiRow ? "transcript_id" : "dialog_id");
          auto [it, inserted] = groups.try_emplace({static_cast<int>(layout), key});
          if (inserted) {
            it->second.first_line = line.line_number;
            it->second.key = key;
            pending.push_back({line.line_number, std::nullopt, layout, key});
          }
          it->second.rows.push_back(j);
          break;
        }
        case Layout::Unknown:
          schema("unrecognized record layout");
      }
    } catch (const Error& e) {
      out.issues.push_back({line.line_number, e.code(), e.what()});
    }
  }

  std::unordered_set<std::string> seen;
  for (auto& p : pending) {
    try {
      if (!p.conv) {
        const auto& g = groups.at({static_cast<int>(p.layout), p.group_key});
        p.conv = p.layout == Layout::AnnoMiRow ? adapt_annomi(g) : adapt_hope(g);
      }
      if (source && p.layout != Layout::Canonical) p.conv->source = *source;
      validate_conversation(*p.conv);
    } catch (const Error& e) {
      out.issues.push_back({p.line, e.code(), e.what()});
      continue;
    }
    if (!seen.insert(p.conv->id).second) {
      out.issues.push_back({p.line, ErrorCode::DuplicateId, "duplicate id " + p.conv->id});
      continue;
    }
    out.conversations.push_back(std::move(*p.conv));
  }
  std::stable_sort(out.issues.begin(), out.issues.end(),
                   [](const ParseIssue& a, const ParseIssue& b) { return a.line < b.line; });
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Conversation> conversations) {
  std::vector<json> rows;
  rows.reserve(conversations.size());
  for (const auto& c : conversations) rows.push_back(to_json(c));
  write_jsonl(path, rows);
}

std::string format_transcript(std::span<const Turn> turns) {
  std::string out;
  for (const auto& t : turns) {
    out += t.speaker == Speaker::Supporter ? "Supporter: " : "Client: ";
    out += t.text;
    out += '\n';
  }
  return out;
}

std::string format_transcript(const Conversation& c) { return format_transcript(std::span<const Turn>(c.turns)); }

// ---- labelling -----------------------------------------------------------

LabelPolicy default_label_policy(Source source) {
  switch (source) {
    case Source::RED: return LabelPolicy::assume_positive();
    case Source::ESC: return LabelPolicy::use_existing("problem_type", {"depression"});
    default: return LabelPolicy::judge_classify();
  }
}

std::string classification_prompt(const Conversation& c) {
  return "Below is a conversation between a supporter and a client.\n\n" + format_transcript(c) +
         "\nDoes the client show at least one core feature of depression, for example a persistently "
         "depressed mood or loss of interest in activities? A formal diagnosis is not required. "
         "Answer with only Yes or No.";
}

bool classify_depression(Conversation& c, const LabelPolicy& policy, Judge& judge) {
  bool verdict = false;
  switch (policy.mode) {
    case LabelPolicy::Mode::AssumePositive:
      verdict = true;
      break;
    case LabelPolicy::Mode::UseExistingLabel: {
      auto it = c.labels.find(policy.field);
      if (it == c.labels.end()) {
        throw Error(ErrorCode::MissingLabel, fmt::format("{}: no label '{}'", c.id, policy.field));
      }
      verdict = policy.positive_values.count(it->second) > 0;
      break;
    }
    case LabelPolicy::Mode::JudgeClassify:
      verdict = ask_parsed<bool>(judge, JudgeRequest{JudgeTask::ClassifyDepression, "", classification_prompt(c), 0},
                                 parse_yes_no);
      break;
  }
  c.depression_related = verdict;
  return verdict;
}

// ---- trait distribution --------------------------------------------------

namespace {

template <class E>
void emit_enum(std::vector<TraitDistribution>& out, std::string category, const kernels::TraitTally& t,
               std::size_t slot) {
  TraitDistribution d{std::move(category), {}};
  for (const auto& e : enum_entries<E>()) {
    const auto n = t[slot + static_cast<std::size_t>(e.value)];
    if (n > 0) d.counts.emplace_back(std::string(e.label), n);
  }
  out.push_back(std::move(d));
}

}  // namespace

std::vector<TraitDistribution> compute_trait_distribution(std::span<const PsychologicalProfile> profiles) {
  const auto t = kernels::tally_traits_omp(profiles);
  std::vector<TraitDistribution> out;
  emit_enum<AgeBracket>(out, "Age", t, kernels::kAgeSlot);
  emit_enum<MaritalStatus>(out, "Marital Status", t, kernels::kMaritalSlot);
  emit_enum<Resistance>(out, "Resistance Toward Support", t, kernels::kResistanceSlot);
  TraitDistribution symptoms{"Symptom", {}};
  for (const auto& s : symptom_table()) {
    const auto n = t[kernels::kSymptomSlot + static_cast<std::size_t>(s.kind)];
    if (n > 0) symptoms.counts.emplace_back(std::string(s.name), n);
  }
  out.push_back(std::move(symptoms));
  TraitDistribution distortions{"Cognitive Distortion Exhibition", {}};
  for (const auto& d : distortion_table()) {
    const auto n = t[kernels::kDistortionSlot + static_cast<std::size_t>(d.kind)];
    if (n > 0) distortions.counts.emplace_back(std::string(d.name), n);
  }
  out.push_back(std::move(distortions));
  emit_enum<DepressionSeverity>(out, "Depression Severity", t, kernels::kDepressionSlot);
  emit_enum<IdeationSeverity>(out, "Suicidal Ideation Severity", t, kernels::kSuicidalSlot);
  emit_enum<IdeationSeverity>(out, "Homicidal Ideation Severity", t, kernels::kHomicidalSlot);
  return out;
}

std::string format_trait_table(std::span<const TraitDistribution> dist) {
  std::string out = "Category\tSubcategory\tCount\n";
  for (const auto& d : dist) {
    for (const auto& [label, n] : d.counts) out += fmt::format("{}\t{}\t{}\n", d.category, label, n);
  }
  return out;
}

json to_json(const TraitDistribution& d) {
  json counts = json::array();
  for (const auto& [label, n] : d.counts) counts.push_back({{"subcategory", label}, {"count", n}});
  return json{{"category", d.category}, {"counts", std::move(counts)}};
}

// ---- rebalancing ---------------------------------------------------------

json to_json(const DropRecord& d) { return json{{"id", d.id}, {"stratum", d.stratum}, {"reason", d.reason}}; }

RebalanceResult rebalance(std::span<const ProfileRecord> items, const RebalanceConfig& cfg) {
  const auto attr = attribute_from_path(cfg.stratum_key);
  if (!attr) throw Error(ErrorCode::UnknownStratumKey, "cannot stratify by '" + cfg.stratum_key + "'");
  const auto domain = domain_labels(*attr, true);
  for (const auto& [label, cap] : cfg.caps) {
    if (std::find(domain.begin(), domain.end(), label) == domain.end()) {
      throw Error(ErrorCode::UnknownCapSubcategory,
                  fmt::format("'{}' is not a value of {}", label, cfg.stratum_key));
    }
  }

  std::map<std::string, std::vector<std::size_t>> strata;
  std::vector<std::string> label_of(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    label_of[i] = get_label(items[i].profile, *attr);
    strata[label_of[i]].push_back(i);
  }

  std::vector<char> keep(items.size(), 1);
  for (auto& [label, members] : strata) {
    auto cap_it = cfg.caps.find(label);
    if (cap_it == cfg.caps.end() || members.size() <= cap_it->second) continue;
    const std::size_t cap = cap_it->second;
    // Partial Fisher-Yates over the stratum, seeded per stratum so strata are independent.
    Rng rng(mix_seed(cfg.seed, cfg.stratum_key + "=" + label));
    for (std::size_t k = 0; k < cap; ++k) {
      const std::size_t j = k + rng.uniform_index(members.size() - k);
      std::swap(members[k], members[j]);
    }
    for (std::size_t k = cap; k < members.size(); ++k) keep[members[k]] = 0;
  }

  RebalanceResult out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (keep[i]) {
      out.retained.push_back(items[i]);
    } else {
      out.dropped.push_back(DropRecord{items[i].conversation_id, label_of[i], "cap_exceeded"});
    }
  }
  return out;
}

}  // namespace profsim
