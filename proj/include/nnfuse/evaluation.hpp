#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/matching.hpp"
#include "nnfuse/parallel.hpp"
#include "nnfuse/rng.hpp"

namespace nnfuse {

/// Mean squared difference of the two vectors after sorting each ascending.
inline double sorted_mse(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kDimension, "sorted_mse length mismatch: " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
  }
  if (a.empty()) fail(ErrorKind::kArgument, "sorted_mse of empty vectors");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation.
inline double stddev_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

inline std::vector<double> totals_vector(const HouseholdTotals& totals) {
  std::vector<double> v;
  v.reserve(totals.size());
  for (const auto& [_, y] : totals) v.push_back(y);
  return v;
}

/// `n` households drawn without replacement from `population` using stream
/// (seed, stream). Households are indexed in key order, so the draw depends
/// only on the set of ids.
inline std::vector<double> draw_households(const std::vector<double>& population,
                                           std::size_t n, std::uint64_t seed,
                                           std::uint64_t stream) {
  auto eng = rng::make_stream(seed, stream);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i : rng::sample_without_replacement(eng, population.size(), n)) {
    out.push_back(population[i]);
  }
  return out;
}

struct CutoffStats {
  std::size_t iterations = 0;
  double mse_mean = 0.0;         // mean sorted-MSE over the first k iterations
  double mse_stddev = 0.0;       // spread of the per-iteration MSE
  double mse_stderr = 0.0;       // mse_stddev / sqrt(k)
  double mean_of_means = 0.0;    // of the drawn household totals
  double mean_of_stddevs = 0.0;
};

struct EvaluationReport {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<std::size_t> cutoffs;
  std::vector<CutoffStats> per_cutoff;
  double truth_mean = 0.0;
  double truth_stddev = 0.0;
  std::vector<double> iteration_mse;  // all iterations, in order

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["n"] = n;
    j["truth_mean"] = truth_mean;
    j["truth_stddev"] = truth_stddev;
    auto& pc = j["per_cutoff"] = nlohmann::json::array();
    for (const auto& c : per_cutoff) {
      pc.push_back({{"iterations", c.iterations},
                    {"mse_mean", c.mse_mean},
                    {"mse_stddev", c.mse_stddev},
                    {"mse_stderr", c.mse_stderr},
                    {"mean_of_means", c.mean_of_means},
                    {"mean_of_stddevs", c.mean_of_stddevs}});
    }
    return j;
  }
};

/// Repeatedly draws `n` imputed households, compares their sorted totals
/// with the truth totals, and averages over the first k iterations for every
/// cutoff k. Iteration i uses RNG stream (seed, i), so the iterations behind
/// a smaller cutoff are a prefix of those behind a larger one.
inline EvaluationReport subsample_compare(const HouseholdTotals& imputed,
                                          const HouseholdTotals& truth, std::size_t n,
                                          std::vector<std::size_t> cutoffs, std::uint64_t seed,
                                          std::size_t threads = 1) {
  if (n == 0) fail(ErrorKind::kArgument, "subset size must be positive");
  if (n > imputed.size()) {
    fail(ErrorKind::kArgument, "subset size " + std::to_string(n) + " exceeds the " +
                                   std::to_string(imputed.size()) + " imputed households");
  }
  if (truth.size() != n) {
    fail(ErrorKind::kArgument, "truth has " + std::to_string(truth.size()) +
                                   " households, subset size is " + std::to_string(n));
  }
  if (cutoffs.empty()) fail(ErrorKind::kArgument, "no cutoffs given");
  std::sort(cutoffs.begin(), cutoffs.end());
  if (cutoffs.front() == 0) fail(ErrorKind::kArgument, "cutoffs must be positive");

  const std::vector<double> population = totals_vector(imputed);
  const std::vector<double> truth_v = totals_vector(truth);
  const std::size_t iterations = cutoffs.back();

  std::vector<double> mse(iterations), means(iterations), stddevs(iterations);
  parallel_for(iterations, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto drawn = draw_households(population, n, seed, i);
      mse[i] = sorted_mse(drawn, truth_v);
      means[i] = mean_of(drawn);
      stddevs[i] = stddev_of(drawn);
    }
  });

  EvaluationReport report;
  report.seed = seed;
  report.n = n;
  report.cutoffs = cutoffs;
  report.truth_mean = mean_of(truth_v);
  report.truth_stddev = stddev_of(truth_v);
  for (std::size_t k : cutoffs) {
    std::span<const double> m(mse.data(), k);
    CutoffStats c;
    c.iterations = k;
    c.mse_mean = mean_of(m);
    c.mse_stddev = stddev_of(m);
    c.mse_stderr = c.mse_stddev / std::sqrt(static_cast<double>(k));
    c.mean_of_means = mean_of(std::span<const double>(means.data(), k));
    c.mean_of_stddevs = mean_of(std::span<const double>(stddevs.data(), k));
    report.per_cutoff.push_back(c);
  }
  report.iteration_mse = std::move(mse);
  return report;
}

struct SpikeReport {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<double> mse;  // one per repeat

  nlohmann::json to_json() const {
    return {{"seed", seed}, {"n", n}, {"mse", mse}};
  }
};

/// Sorted-MSE between size-n random subsets of two years' household totals.
/// A side whose size equals n is used whole. Repeat r draws from streams
/// (seed, 2r) and (seed, 2r + 1).
inline SpikeReport spike(const HouseholdTotals& early, const HouseholdTotals& late,
                         std::size_t n, std::uint64_t seed, std::size_t repeats = 1) {
  if (n == 0) fail(ErrorKind::kArgument, "subset size must be positive");
  if (n > early.size() || n > late.size()) {
    fail(ErrorKind::kArgument, "subset size " + std::to_string(n) + " exceeds a dataset (" +
                                   std::to_string(early.size()) + ", " +
                                   std::to_string(late.size()) + " households)");
  }
  const auto a = totals_vector(early);
  const auto b = totals_vector(late);
  SpikeReport out{seed, n, {}};
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto da = a.size() == n ? a : draw_households(a, n, seed, 2 * r);
    const auto db = b.size() == n ? b : draw_households(b, n, seed, 2 * r + 1);
    out.mse.push_back(sorted_mse(da, db));
  }
  return out;
}

/// Comparison baseline: every missing y becomes the mean of the present y.
inline ImputationResult baseline_mean_impute(const EncodedDataset& source) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& s : source.samples) {
    if (s.y) {
      sum += *s.y;
      ++present;
    }
  }
  if (present == 0) fail(ErrorKind::kData, "mean imputation needs at least one present y");
  const double mean = sum / static_cast<double>(present);

  ImputationResult r;
  r.per_sample_y.resize(source.size());
  r.imputed.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& y = source.samples[i].y;
    r.per_sample_y[i] = y ? *y : mean;
    r.imputed[i] = !y.has_value();
  }
  r.per_household_y = household_totals(source, r.per_sample_y);
  return r;
}

/// Ascending sorted vectors side by side, for plotting.
inline std::string serialize_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  auto sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::string out = "rank,imputed,truth\n";
  const std::size_t n = std::max(sa.size(), sb.size());
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i) + ',';
    if (i < sa.size()) out += format_double(sa[i]);
    out += ',';
    if (i < sb.size()) out += format_double(sb[i]);
    out += '\n';
  }
  return out;
}

}  // namespace nnfuse
