#include <gtest/gtest.h>

#include <random>

#include "profsim/corpus.hpp"
#include "profsim/kernels.hpp"
#include "testkit.hpp"

using namespace profsim;
using namespace profsim::kernels;

namespace {

std::vector<ScoredPair> random_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> lp(-300.0, -0.5);
  std::vector<ScoredPair> out(n);
  for (auto& p : out) p = {lp(gen), lp(gen), lp(gen), lp(gen)};
  return out;
}

}  // namespace

TEST(Kernels, PairwiseSumIsExactOnIntegers) {
  std::vector<double> v(10007);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_EQ(pairwise_sum(v), 10006.0 * 10007.0 / 2.0);
  EXPECT_EQ(pairwise_sum(std::span<const double>{}), 0.0);
}

TEST(Kernels, OmpMatchesSerialBitForBit) {
  for (std::size_t n : {1u, 7u, 1000u, 65537u}) {
    const auto pairs = random_pairs(n, n);
    EXPECT_EQ(dpo_loss_serial(pairs, 0.1), dpo_loss_omp(pairs, 0.1)) << n;
    EXPECT_EQ(count_correct_serial(pairs, 0.1), count_correct_omp(pairs, 0.1)) << n;
    std::vector<ScoredPair> gs(n), go(n);
    dpo_gradient_serial(pairs, 0.3, gs);
    dpo_gradient_omp(pairs, 0.3, go);
    EXPECT_EQ(gs, go) << n;
  }
}

TEST(Kernels, AvgTokenProbBatchesAgree) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> lp(-8.0, 0.0);
  std::vector<std::vector<double>> seqs(3000);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    seqs[i].resize(1 + i % 57);
    for (auto& x : seqs[i]) x = lp(gen);
  }
  EXPECT_EQ(avg_token_prob_serial(seqs), avg_token_prob_omp(seqs));
  seqs[1234].clear();
  EXPECT_THROW(avg_token_prob_omp(seqs), Error);
}

TEST(Kernels, FilterBatchMatchesScalarFilter) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<FilterInput> in(5000);
  for (auto& x : in) x = {std::round(u(gen) * 4) / 4, std::round(u(gen) * 4) / 4, u(gen), u(gen)};
  const auto serial = filter_batch_serial(in, 2.0);
  EXPECT_EQ(serial, filter_batch_omp(in, 2.0));
  for (std::size_t i = 0; i < in.size(); ++i) {
    ASSERT_EQ(serial[i], filter_pair(in[i].s_o, in[i].s_n, in[i].p_avg_o, in[i].p_avg_n, 2.0));
  }
}

TEST(Kernels, TraitTallyMatchesDistribution) {
  Rng rng(8);
  std::vector<PsychologicalProfile> profiles;
  for (int i = 0; i < 400; ++i) profiles.push_back(testkit::random_profile(rng));
  const auto serial = tally_traits_serial(profiles);
  EXPECT_EQ(serial, tally_traits_omp(profiles));

  std::uint64_t exhibited_sadness = 0;
  for (const auto& p : profiles) exhibited_sadness += p.symptoms.at(SymptomKind::Sadness) != Severity4::NotExhibited;
  EXPECT_EQ(serial[kSymptomSlot + static_cast<std::size_t>(SymptomKind::Sadness)], exhibited_sadness);
  std::uint64_t ages = 0;
  for (std::size_t i = 0; i < 5; ++i) ages += serial[kAgeSlot + i];
  EXPECT_EQ(ages, profiles.size());
}
