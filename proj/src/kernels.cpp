#include "profsim/kernels.hpp"

#include <cmath>

#include <fmt/format.h>

#include "profsim/error.hpp"
#include "profsim/gateway.hpp"

namespace profsim::kernels {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

void check_finite(std::span<const ScoredPair> pairs) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!std::isfinite(p.logp_policy_chosen) || !std::isfinite(p.logp_ref_chosen) ||
        !std::isfinite(p.logp_policy_rejected) || !std::isfinite(p.logp_ref_rejected)) {
      throw Error(ErrorCode::NonFiniteInput, fmt::format("pair {} has a non-finite log-probability", i));
    }
  }
}

namespace {

void check_out(std::size_t n, std::size_t m) {
  if (n != m) throw Error(ErrorCode::InvalidArgument, "output span size mismatch");
}

ScoredPair gradient_one(const ScoredPair& p, double beta, double inv_n) {
  // d/dz [-log sigmoid(z)] = -sigmoid(-z)
  const double g = beta * sigmoid(-dpo_margin(p, beta)) * inv_n;
  return ScoredPair{-g, g, g, -g};
}

}  // namespace

void dpo_losses_serial(std::span<const ScoredPair> pairs, double beta, std::span<double> out) {
  check_out(pairs.size(), out.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = neg_log_sigmoid(dpo_margin(pairs[i], beta));
}

void dpo_losses_omp(std::span<const ScoredPair> pairs, double beta, std::span<double> out) {
  check_out(pairs.size(), out.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = neg_log_sigmoid(dpo_margin(pairs[i], beta));
}

double dpo_loss_serial(std::span<const ScoredPair> pairs, double beta) {
  std::vector<double> losses(pairs.size());
  dpo_losses_serial(pairs, beta, losses);
  return pairwise_sum(losses) / static_cast<double>(pairs.size());
}

double dpo_loss_omp(std::span<const ScoredPair> pairs, double beta) {
  std::vector<double> losses(pairs.size());
  dpo_losses_omp(pairs, beta, losses);
  return pairwise_sum(losses) / static_cast<double>(pairs.size());
}

std::uint64_t count_correct_serial(std::span<const ScoredPair> pairs, double beta) {
  std::uint64_t n = 0;
  for (const auto& p : pairs) n += dpo_margin(p, beta) > 0.0 ? 1 : 0;
  return n;
}

std::uint64_t count_correct_omp(std::span<const ScoredPair> pairs, double beta) {
  std::uint64_t n = 0;
  const auto size = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for reduction(+ : n) schedule(static)
  for (std::ptrdiff_t i = 0; i < size; ++i) n += dpo_margin(pairs[i], beta) > 0.0 ? 1 : 0;
  return n;
}

void dpo_gradient_serial(std::span<const ScoredPair> pairs, double beta, std::span<ScoredPair> out) {
  check_out(pairs.size(), out.size());
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = gradient_one(pairs[i], beta, inv_n);
}

void dpo_gradient_omp(std::span<const ScoredPair> pairs, double beta, std::span<ScoredPair> out) {
  check_out(pairs.size(), out.size());
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = gradient_one(pairs[i], beta, inv_n);
}

std::vector<double> avg_token_prob_serial(std::span<const std::vector<double>> seqs) {
  std::vector<double> out(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) out[i] = avg_token_prob(seqs[i]);
  return out;
}

std::vector<double> avg_token_prob_omp(std::span<const std::vector<double>> seqs) {
  std::vector<double> out(seqs.size());
  const auto n = static_cast<std::ptrdiff_t>(seqs.size());
  // Exceptions must not escape an OpenMP region; record the first failing index instead.
  std::ptrdiff_t bad = n;
#pragma omp parallel for schedule(dynamic, 64) reduction(min : bad)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = avg_token_prob(seqs[i]);
    } catch (const Error&) {
      bad = std::min(bad, i);
    }
  }
  if (bad < n) out[bad] = avg_token_prob(seqs[bad]);  // rethrows with the original code
  return out;
}

std::vector<FilterDecision> filter_batch_serial(std::span<const FilterInput> in, double tau) {
  std::vector<FilterDecision> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = filter_pair(in[i].s_o, in[i].s_n, in[i].p_avg_o, in[i].p_avg_n, tau);
  }
  return out;
}

std::vector<FilterDecision> filter_batch_omp(std::span<const FilterInput> in, double tau) {
  std::vector<FilterDecision> out(in.size());
  const auto n = static_cast<std::ptrdiff_t>(in.size());
  std::ptrdiff_t bad = n;
#pragma omp parallel for schedule(static) reduction(min : bad)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = filter_pair(in[i].s_o, in[i].s_n, in[i].p_avg_o, in[i].p_avg_n, tau);
    } catch (const Error&) {
      bad = std::min(bad, i);
    }
  }
  if (bad < n) filter_pair(in[bad].s_o, in[bad].s_n, in[bad].p_avg_o, in[bad].p_avg_n, tau);
  return out;
}

namespace {

template <class E>
std::size_t ord(E e) {
  return static_cast<std::size_t>(e);
}

void tally_one(const PsychologicalProfile& p, TraitTally& t) {
  ++t[kAgeSlot + ord(p.age_bracket)];
  ++t[kMaritalSlot + ord(p.marital_status)];
  ++t[kResistanceSlot + ord(p.resistance)];
  for (const auto& [kind, sev] : p.symptoms) {
    if (sev != Severity4::NotExhibited) ++t[kSymptomSlot + ord(kind)];
  }
  for (const auto& [kind, ex] : p.distortions) {
    if (ex == Exhibition::Exhibited) ++t[kDistortionSlot + ord(kind)];
  }
  ++t[kDepressionSlot + ord(p.depression_severity)];
  ++t[kSuicidalSlot + ord(p.suicidal_ideation)];
  ++t[kHomicidalSlot + ord(p.homicidal_ideation)];
}

}  // namespace

TraitTally tally_traits_serial(std::span<const PsychologicalProfile> profiles) {
  TraitTally t{};
  for (const auto& p : profiles) tally_one(p, t);
  return t;
}

TraitTally tally_traits_omp(std::span<const PsychologicalProfile> profiles) {
  TraitTally total{};
  const auto n = static_cast<std::ptrdiff_t>(profiles.size());
#pragma omp parallel
  {
    TraitTally local{};
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) tally_one(profiles[i], local);
#pragma omp critical(profsim_tally)
    for (std::size_t k = 0; k < kTallySlots; ++k) total[k] += local[k];
  }
  return total;
}

}  // namespace profsim::kernels
