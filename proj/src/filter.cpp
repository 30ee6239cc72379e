#include "profsim/filter.hpp"

#include <cmath>

#include <fmt/format.h>

#include "profsim/error.hpp"

namespace profsim {

std::string_view to_string(DropReason r) noexcept {
  switch (r) {
    case DropReason::AdherenceTie: return "AdherenceTie";
    case DropReason::RatioExceeded: return "RatioExceeded";
  }
  return "AdherenceTie";
}

std::optional<DropReason> drop_reason_from_string(std::string_view s) {
  if (s == "AdherenceTie") return DropReason::AdherenceTie;
  if (s == "RatioExceeded") return DropReason::RatioExceeded;
  return std::nullopt;
}

FilterDecision filter_pair(double s_o, double s_n, double p_avg_o, double p_avg_n, double tau) {
  if (!std::isfinite(s_o) || !std::isfinite(s_n) || !std::isfinite(p_avg_o) || !std::isfinite(p_avg_n)) {
    throw Error(ErrorCode::NonFiniteInput, "filter inputs must be finite");
  }
  if (std::isnan(tau) || tau <= 0.0) throw Error(ErrorCode::InvalidArgument, fmt::format("tau {} must be > 0", tau));
  if (p_avg_n <= 0.0 || p_avg_o < 0.0) {
    throw Error(ErrorCode::DegenerateProbability,
                fmt::format("average probabilities {} / {} are not usable", p_avg_o, p_avg_n));
  }
  FilterDecision d;
  d.ratio = p_avg_o / p_avg_n;
  if (!(s_o > s_n)) {
    d.reason = DropReason::AdherenceTie;
  } else if (!(d.ratio < tau)) {
    d.reason = DropReason::RatioExceeded;
  } else {
    d.kept = true;
  }
  return d;
}

}  // namespace profsim
