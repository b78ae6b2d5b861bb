#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nnfuse/bitvector.hpp"
#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/matching.hpp"
#include "nnfuse/parallel.hpp"
#include "nnfuse/rng.hpp"

namespace nnfuse {

/// Bit g set = dictionary feature group g is visible to the predictor.
using FeatureMask = std::uint64_t;

inline constexpr std::size_t kMaxShapleyPlayers = 12;

template <class P>
concept Predictor = requires(const P& p, const BitVector& x, FeatureMask m) {
  { p(x, m) } -> std::convertible_to<double>;
};

/// Predicts the member-weighted mean y of the buckets nearest to x, where
/// distance counts only the columns of visible features (masked columns are
/// zeroed on both sides). With nothing visible every bucket ties, so the
/// prediction is the global candidate mean.
class BucketMeanPredictor {
 public:
  BucketMeanPredictor(const FeatureDictionary& dict, std::vector<Bucket> buckets)
      : buckets_(std::move(buckets)) {
    if (buckets_.empty()) fail(ErrorKind::kMatch, "bucket-mean predictor needs buckets");
    if (dict.group_count() > 64) fail(ErrorKind::kArgument, "at most 64 feature groups");
    packed_ = PackedBits(bucket_vectors(buckets_));
    if (packed_.dimension() != dict.dimension()) {
      fail(ErrorKind::kDimension, "bucket dimension does not match dictionary");
    }
    const std::size_t stride = packed_.stride();
    for (const auto& g : dict.groups()) {
      std::vector<std::uint64_t> mask(stride, 0);
      for (std::size_t c = g.offset; c < g.offset + g.width(); ++c) {
        mask[c >> 6] |= std::uint64_t{1} << (c & 63);
      }
      group_masks_.push_back(std::move(mask));
    }
  }

  double operator()(const BitVector& x, FeatureMask visible) const {
    const std::size_t stride = packed_.stride();
    std::vector<std::uint64_t> cols(stride, 0);
    for (std::size_t g = 0; g < group_masks_.size(); ++g) {
      if ((visible >> g) & 1u) {
        for (std::size_t k = 0; k < stride; ++k) cols[k] |= group_masks_[g][k];
      }
    }
    const std::uint64_t* q = x.words().data();
    std::size_t best = std::numeric_limits<std::size_t>::max();
    double weighted = 0.0;
    double weight = 0.0;
    for (std::size_t j = 0; j < packed_.rows(); ++j) {
      const std::uint64_t* b = packed_.row(j);
      std::size_t d = 0;
      for (std::size_t k = 0; k < stride; ++k) {
        d += static_cast<std::size_t>(std::popcount((q[k] ^ b[k]) & cols[k]));
      }
      if (d > best) continue;
      const auto& bucket = buckets_[j];
      if (d < best) {
        best = d;
        weighted = 0.0;
        weight = 0.0;
      }
      weighted += bucket.y_mean * static_cast<double>(bucket.member_count);
      weight += static_cast<double>(bucket.member_count);
    }
    return weighted / weight;
  }

 private:
  std::vector<Bucket> buckets_;
  PackedBits packed_;
  std::vector<std::vector<std::uint64_t>> group_masks_;
};

struct ShapleyValues {
  std::vector<double> phi;  // one per player, in the order given
  double full = 0.0;        // prediction with every player visible
  double empty = 0.0;       // prediction with no player visible

  double efficiency_residual() const {
    double sum = 0.0;
    for (double v : phi) sum += v;
    return std::abs(sum - (full - empty));
  }
};

/// Exact Shapley values by enumerating all 2^m coalitions of the player
/// features. Each player is a whole feature group. Groups in `base` are
/// visible in every coalition.
template <Predictor P>
ShapleyValues shapley(const BitVector& x, const P& predictor, std::span<const std::size_t> players,
                      FeatureMask base = 0) {
  const std::size_t m = players.size();
  if (m > kMaxShapleyPlayers) {
    fail(ErrorKind::kArgument, "exact Shapley supports at most " +
                                   std::to_string(kMaxShapleyPlayers) + " features, got " +
                                   std::to_string(m) + "; sampled Shapley is not available");
  }
  for (std::size_t p : players) {
    if (p >= 64) fail(ErrorKind::kArgument, "feature index out of range");
  }

  const std::size_t n_coalitions = std::size_t{1} << m;
  std::vector<double> value(n_coalitions);
  for (std::size_t s = 0; s < n_coalitions; ++s) {
    FeatureMask mask = base;
    for (std::size_t k = 0; k < m; ++k) {
      if ((s >> k) & 1u) mask |= FeatureMask{1} << players[k];
    }
    value[s] = static_cast<double>(predictor(x, mask));
  }

  // weight[s] = s! (m - s - 1)! / m!
  std::vector<double> weight(m == 0 ? 0 : m);
  for (std::size_t s = 0; s < m; ++s) {
    double w = 1.0 / static_cast<double>(m);
    // 1 / (m * C(m-1, s))
    for (std::size_t i = 1; i <= s; ++i) {
      w *= static_cast<double>(i) / static_cast<double>(m - i);
    }
    weight[s] = w;
  }

  ShapleyValues out;
  out.phi.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t bit = std::size_t{1} << k;
    for (std::size_t s = 0; s < n_coalitions; ++s) {
      if (s & bit) continue;
      out.phi[k] += weight[static_cast<std::size_t>(std::popcount(s))] * (value[s | bit] - value[s]);
    }
  }
  out.full = value[n_coalitions - 1];
  out.empty = value[0];
  return out;
}

struct CategoryAttribution {
  std::string category;  // "Missing" for an all-zero group
  std::size_t count = 0;
  double mean = 0.0;     // mean signed Shapley value
};

struct FeatureAttribution {
  std::string name;
  double mean_abs = 0.0;
  double mean = 0.0;
  std::vector<CategoryAttribution> categories;
};

struct AttributionReport {
  std::uint64_t seed = 0;
  std::vector<std::size_t> evaluated;  // sample indices, ascending
  std::vector<FeatureAttribution> features;
  double max_efficiency_residual = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["samples_evaluated"] = evaluated.size();
    j["max_efficiency_residual"] = max_efficiency_residual;
    auto& fs = j["features"] = nlohmann::json::array();
    for (const auto& f : features) {
      nlohmann::json fj{{"name", f.name}, {"mean", f.mean}, {"mean_abs", f.mean_abs}};
      auto& cs = fj["categories"] = nlohmann::json::array();
      for (const auto& c : f.categories) {
        cs.push_back({{"category", c.category},
                      {"count", c.count},
                      {"mean", c.mean},
                      {"direction", c.mean > 0.0 ? "more" : (c.mean < 0.0 ? "fewer" : "none")}});
      }
      fs.push_back(std::move(fj));
    }
    return j;
  }
};

/// Shapley values over every feature group for up to `sample_limit` samples
/// (a seeded random subset when the dataset is larger), aggregated per
/// (feature, category the sample actually has).
template <Predictor P>
AttributionReport attribute_dataset(const EncodedDataset& ds, const P& predictor,
                                    std::size_t sample_limit, std::uint64_t seed,
                                    std::size_t threads = 1) {
  if (ds.empty()) fail(ErrorKind::kArgument, "attribution over an empty dataset");
  const auto& groups = ds.dictionary.groups();

  AttributionReport report;
  report.seed = seed;
  if (sample_limit >= ds.size()) {
    report.evaluated.resize(ds.size());
    std::iota(report.evaluated.begin(), report.evaluated.end(), std::size_t{0});
  } else {
    auto eng = rng::make_stream(seed, 0);
    report.evaluated = rng::sample_without_replacement(eng, ds.size(), sample_limit);
    std::sort(report.evaluated.begin(), report.evaluated.end());
  }

  std::vector<std::size_t> players(groups.size());
  std::iota(players.begin(), players.end(), std::size_t{0});
  std::vector<ShapleyValues> values(report.evaluated.size());
  parallel_for(values.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      values[i] = shapley(ds.samples[report.evaluated[i]].x, predictor, players);
    }
  });

  for (std::size_t g = 0; g < groups.size(); ++g) {
    FeatureAttribution fa;
    fa.name = groups[g].name;
    std::vector<double> sums(groups[g].width() + 1, 0.0);
    std::vector<std::size_t> counts(groups[g].width() + 1, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const BitVector& x = ds.samples[report.evaluated[i]].x;
      std::size_t cat = groups[g].width();  // missing
      for (std::size_t c = 0; c < groups[g].width(); ++c) {
        if (x.test(groups[g].offset + c)) {
          cat = c;
          break;
        }
      }
      const double phi = values[i].phi[g];
      sums[cat] += phi;
      ++counts[cat];
      fa.mean += phi;
      fa.mean_abs += std::abs(phi);
    }
    fa.mean /= static_cast<double>(values.size());
    fa.mean_abs /= static_cast<double>(values.size());
    for (std::size_t c = 0; c <= groups[g].width(); ++c) {
      if (counts[c] == 0) continue;
      fa.categories.push_back({c < groups[g].width() ? groups[g].categories[c] : "Missing",
                               counts[c], sums[c] / static_cast<double>(counts[c])});
    }
    report.features.push_back(std::move(fa));
  }
  for (const auto& v : values) {
    report.max_efficiency_residual = std::max(report.max_efficiency_residual, v.efficiency_residual());
  }
  return report;
}

}  // namespace nnfuse
