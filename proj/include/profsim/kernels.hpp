#pragma once

// Data-parallel numeric kernels. Each has a serial reference and an OpenMP
// version; both compute per-element values independently and reduce with the
// same pairwise summation, so their results are bit-identical.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "profsim/dpo.hpp"
#include "profsim/filter.hpp"
#include "profsim/profile.hpp"

namespace profsim::kernels {

/// Recursive pairwise summation (blocks of 8 summed left to right).
double pairwise_sum(std::span<const double> values);

/// Throws NonFiniteInput naming the first bad pair.
void check_finite(std::span<const ScoredPair> pairs);

void dpo_losses_serial(std::span<const ScoredPair> pairs, double beta, std::span<double> out);
void dpo_losses_omp(std::span<const ScoredPair> pairs, double beta, std::span<double> out);

double dpo_loss_serial(std::span<const ScoredPair> pairs, double beta);
double dpo_loss_omp(std::span<const ScoredPair> pairs, double beta);

std::uint64_t count_correct_serial(std::span<const ScoredPair> pairs, double beta);
std::uint64_t count_correct_omp(std::span<const ScoredPair> pairs, double beta);

void dpo_gradient_serial(std::span<const ScoredPair> pairs, double beta, std::span<ScoredPair> out);
void dpo_gradient_omp(std::span<const ScoredPair> pairs, double beta, std::span<ScoredPair> out);

/// exp(mean) per sequence. Throws EmptySequence / NonFiniteInput.
std::vector<double> avg_token_prob_serial(std::span<const std::vector<double>> seqs);
std::vector<double> avg_token_prob_omp(std::span<const std::vector<double>> seqs);

struct FilterInput {
  double s_o = 0.0;
  double s_n = 0.0;
  double p_avg_o = 0.0;
  double p_avg_n = 0.0;
};

std::vector<FilterDecision> filter_batch_serial(std::span<const FilterInput> in, double tau);
std::vector<FilterDecision> filter_batch_omp(std::span<const FilterInput> in, double tau);

// Trait tally layout: one slot per enum value, categories laid out back to back.
inline constexpr std::size_t kAgeSlot = 0;                                 // 5 values
inline constexpr std::size_t kMaritalSlot = kAgeSlot + 5;                  // 8
inline constexpr std::size_t kResistanceSlot = kMaritalSlot + 8;           // 4
inline constexpr std::size_t kSymptomSlot = kResistanceSlot + 4;           // 18 (exhibited)
inline constexpr std::size_t kDistortionSlot = kSymptomSlot + kSymptomCount;  // 6 (exhibited)
inline constexpr std::size_t kDepressionSlot = kDistortionSlot + kDistortionCount;  // 5
inline constexpr std::size_t kSuicidalSlot = kDepressionSlot + 5;          // 5
inline constexpr std::size_t kHomicidalSlot = kSuicidalSlot + 5;           // 5
inline constexpr std::size_t kTallySlots = kHomicidalSlot + 5;

using TraitTally = std::array<std::uint64_t, kTallySlots>;

TraitTally tally_traits_serial(std::span<const PsychologicalProfile> profiles);
TraitTally tally_traits_omp(std::span<const PsychologicalProfile> profiles);

}  // namespace profsim::kernels
