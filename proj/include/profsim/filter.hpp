#pragma once

#include <limits>
#include <optional>
#include <string_view>

namespace profsim {

inline constexpr double kDefaultTau = 2.0;

enum class DropReason { AdherenceTie, RatioExceeded };

std::string_view to_string(DropReason r) noexcept;
std::optional<DropReason> drop_reason_from_string(std::string_view s);

struct FilterDecision {
  bool kept = false;
  std::optional<DropReason> reason;
  double ratio = 0.0;  // p_avg_o / p_avg_n

  bool operator==(const FilterDecision&) const = default;
};

/// Keep iff s_o > s_n and p_avg_o / p_avg_n < tau, both strict. The adherence
/// check runs first and names the drop reason. tau may be +infinity.
/// Throws DegenerateProbability when p_avg_n == 0, NonFiniteInput on NaN/inf inputs.
FilterDecision filter_pair(double s_o, double s_n, double p_avg_o, double p_avg_n, double tau = kDefaultTau);

}  // namespace profsim
