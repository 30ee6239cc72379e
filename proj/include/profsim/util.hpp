#pragma once

// Small shared helpers: text normalization, stable hashing, seeded draws and
// line-delimited JSON files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace profsim {

using json = nlohmann::json;

// ---- text ----------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
/// Collapses every run of whitespace (including line breaks) to one space and trims.
std::string collapse_whitespace(std::string_view s);

// ---- hashing -------------------------------------------------------------

/// FNV-1a 64-bit. Stable across platforms; used for seed derivation and mock keys.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);
/// Derives an independent stream seed from a base seed and a textual key.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view key);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// ---- seeded randomness ---------------------------------------------------

/// mt19937_64 with draws implemented here rather than through
/// std::uniform_*_distribution, whose output differs between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Maps a 64-bit hash to [0, 1).
double unit_interval(std::uint64_t h);

// ---- JSONL ---------------------------------------------------------------

struct JsonlLine {
  std::size_t line_number = 0;  // 1-based
  std::optional<json> value;    // empty when the line is not valid JSON
  std::string error;
};

/// Reads every non-blank line. Throws Error(FileUnreadable) if the file cannot be opened.
std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path);
/// Reads and requires every line to parse; throws SchemaViolation with the line number otherwise.
std::vector<json> read_jsonl_strict(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
void append_jsonl(const std::filesystem::path& path, const json& record);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// ---- concurrency ---------------------------------------------------------

/// Runs fn(i) for every i in [0, n) on up to `workers` threads (inline when
/// workers <= 1). If any call throws, remaining indices are skipped and the
/// exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace profsim
