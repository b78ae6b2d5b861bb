#include <gtest/gtest.h>

#include <random>

#include "nnfuse/attribution.hpp"
#include "nnfuse/datagen.hpp"
#include "support/oracles.hpp"

namespace nnfuse {
namespace {

// A cooperative game over feature masks, ignoring x.
struct TableGame {
  std::vector<double> v;  // indexed by mask
  double operator()(const BitVector&, FeatureMask m) const { return v[m]; }
};

std::vector<std::size_t> iota_players(std::size_t m) {
  std::vector<std::size_t> p(m);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

const BitVector kAnyX = BitVector(1);

TEST(Shapley, TwoPlayerTable) {
  const TableGame game{{1, 3, 2, 6}};
  const auto s = shapley(kAnyX, game, iota_players(2));
  EXPECT_DOUBLE_EQ(s.phi[0], 3.0);
  EXPECT_DOUBLE_EQ(s.phi[1], 2.0);
  EXPECT_DOUBLE_EQ(s.full, 6.0);
  EXPECT_DOUBLE_EQ(s.empty, 1.0);
  EXPECT_NEAR(s.efficiency_residual(), 0.0, 1e-12);
}

TEST(Shapley, AdditiveGameGivesOwnContribution) {
  const std::vector<double> a{0.5, -2.0, 3.0, 1.25};
  TableGame game{std::vector<double>(16, 7.0)};
  for (std::size_t m = 0; m < 16; ++m) {
    for (std::size_t k = 0; k < 4; ++k) {
      if ((m >> k) & 1u) game.v[m] += a[k];
    }
  }
  const auto s = shapley(kAnyX, game, iota_players(4));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(s.phi[k], a[k], 1e-12);
}

TEST(Shapley, NullPlayerAndSymmetry) {
  // Players 0 and 1 are interchangeable, player 2 never matters.
  TableGame game{std::vector<double>(8)};
  for (std::size_t m = 0; m < 8; ++m) {
    const int a = (m & 1) != 0, b = (m & 2) != 0;
    game.v[m] = 1.0 + 2.0 * (a + b) + 5.0 * a * b;
  }
  const auto s = shapley(kAnyX, game, iota_players(3));
  EXPECT_NEAR(s.phi[2], 0.0, 1e-12);
  EXPECT_NEAR(s.phi[0], s.phi[1], 1e-12);
  EXPECT_NEAR(s.phi[0], 4.5, 1e-12);
}

TEST(Shapley, AgreesWithPermutationOracle) {
  std::mt19937_64 gen(103);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (std::size_t m = 1; m <= 6; ++m) {
    for (int t = 0; t < 10; ++t) {
      TableGame game{std::vector<double>(std::size_t{1} << m)};
      for (auto& v : game.v) v = u(gen);
      const auto s = shapley(kAnyX, game, iota_players(m));
      const auto oracle = testing::shapley_by_permutations(m, [&](std::uint64_t mask) { return game.v[mask]; });
      for (std::size_t k = 0; k < m; ++k) EXPECT_NEAR(s.phi[k], oracle[k], 1e-9);
      EXPECT_LE(s.efficiency_residual(), 1e-9);
    }
  }
}

TEST(Shapley, Linearity) {
  std::mt19937_64 gen(107);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TableGame v{std::vector<double>(16)}, w{std::vector<double>(16)}, sum{std::vector<double>(16)};
  for (std::size_t m = 0; m < 16; ++m) {
    v.v[m] = u(gen);
    w.v[m] = u(gen);
    sum.v[m] = v.v[m] + 2.0 * w.v[m];
  }
  const auto sv = shapley(kAnyX, v, iota_players(4));
  const auto sw = shapley(kAnyX, w, iota_players(4));
  const auto ss = shapley(kAnyX, sum, iota_players(4));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(ss.phi[k], sv.phi[k] + 2.0 * sw.phi[k], 1e-12);
}

TEST(Shapley, BaseMaskAndPlayerSubset) {
  // Players are groups 1 and 3; group 0 is always visible.
  TableGame game{std::vector<double>(16, 0.0)};
  for (std::size_t m = 0; m < 16; ++m) game.v[m] = (m & 1 ? 10.0 : 0.0) + (m & 8 ? 1.0 : 0.0);
  const std::vector<std::size_t> players{1, 3};
  const auto s = shapley(kAnyX, game, players, 1);
  EXPECT_DOUBLE_EQ(s.empty, 10.0);
  EXPECT_DOUBLE_EQ(s.phi[0], 0.0);
  EXPECT_DOUBLE_EQ(s.phi[1], 1.0);
}

TEST(Shapley, TooManyPlayers) {
  TableGame game{std::vector<double>(1, 0.0)};
  try {
    shapley(kAnyX, game, iota_players(13));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kArgument);
  }
}

EncodedDataset two_feature_dataset(std::vector<std::tuple<std::string, double>> rows) {
  EncodedDataset ds{FeatureDictionary::from_groups({{"Income", {"high", "low"}}, {"Sex", {"F", "M"}}}), "S", 2017, {}};
  for (auto& [x, y] : rows) ds.samples.push_back({"h", BitVector::from_string(x), y});
  return ds;
}

TEST(BucketMean, MaskedPredictions) {
  const auto ds = two_feature_dataset({{"1010", 4}, {"1010", 6}, {"1001", 2}, {"0110", 0}});
  const BucketMeanPredictor p(ds.dictionary, build_buckets(ds));
  const auto x = BitVector::from_string("1010");
  EXPECT_DOUBLE_EQ(p(x, 0b11), 5.0);
  // Empty mask: every bucket ties, member-weighted mean of all y.
  EXPECT_DOUBLE_EQ(p(x, 0b00), 3.0);
  // Only income visible: buckets 1010 (2 members) and 1001 tie.
  EXPECT_DOUBLE_EQ(p(x, 0b01), 4.0);
  // Only sex visible: 1010 and 0110 tie.
  EXPECT_DOUBLE_EQ(p(x, 0b10), 10.0 / 3.0);
}

TEST(Attribution, ConstantTargetGivesZeros) {
  const auto ds = two_feature_dataset({{"1010", 2}, {"0101", 2}, {"1001", 2}, {"0000", 2}});
  const BucketMeanPredictor p(ds.dictionary, build_buckets(ds));
  const auto r = attribute_dataset(ds, p, 100, 1);
  EXPECT_EQ(r.evaluated.size(), 4u);
  for (const auto& f : r.features) EXPECT_NEAR(f.mean_abs, 0.0, 1e-12);
  for (const auto& f : r.to_json()["features"]) {
    for (const auto& c : f["categories"]) EXPECT_EQ(c["direction"], "none");
  }
}

TEST(Attribution, DominantFeatureIsFound) {
  // High income always has y = 5, everyone else 0; sex is noise.
  std::mt19937_64 gen(109);
  EncodedDataset ds = two_feature_dataset({});
  for (int i = 0; i < 200; ++i) {
    const bool high = gen() % 2;
    const bool female = gen() % 2;
    std::string x = std::string(high ? "10" : "01") + (female ? "10" : "01");
    ds.samples.push_back({"h" + std::to_string(i), BitVector::from_string(x), high ? 5.0 : 0.0});
  }
  const BucketMeanPredictor p(ds.dictionary, build_buckets(ds));
  const auto r = attribute_dataset(ds, p, 1000, 1, 4);
  ASSERT_EQ(r.features.size(), 2u);
  EXPECT_GT(r.features[0].mean_abs, 10 * r.features[1].mean_abs + 1.0);
  EXPECT_LE(r.max_efficiency_residual, 1e-9);
  for (const auto& c : r.features[0].categories) {
    if (c.category == "high") {
      EXPECT_GT(c.mean, 0.0);
    } else if (c.category == "low") {
      EXPECT_LT(c.mean, 0.0);
    }
  }
}

TEST(Attribution, SampleLimitIsSeededSubset) {
  auto gs = generate(default_population_model(), 100, "G", 2017, 3);
  const auto ds = gs.full;
  const BucketMeanPredictor p(ds.dictionary, build_buckets(ds));
  const auto a = attribute_dataset(ds, p, 25, 8, 1);
  const auto b = attribute_dataset(ds, p, 25, 8, 8);
  EXPECT_EQ(a.evaluated.size(), 25u);
  EXPECT_TRUE(std::is_sorted(a.evaluated.begin(), a.evaluated.end()));
  EXPECT_EQ(std::adjacent_find(a.evaluated.begin(), a.evaluated.end()), a.evaluated.end());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_LE(a.max_efficiency_residual, 1e-9);
  // Category counts partition the evaluated samples, Missing included.
  for (const auto& f : a.features) {
    std::size_t n = 0;
    for (const auto& c : f.categories) n += c.count;
    EXPECT_EQ(n, 25u);
  }
}

}  // namespace
}  // namespace nnfuse
