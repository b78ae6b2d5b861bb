#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nnfuse/bitvector.hpp"
#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/parallel.hpp"
#include "nnfuse/rng.hpp"

namespace nnfuse {

/// Candidate samples sharing one covariate vector.
struct Bucket {
  BitVector x;
  std::size_t member_count = 0;
  double y_mean = 0.0;
};

struct Bucketing {
  std::vector<Bucket> buckets;            // ordered by first occurrence
  std::vector<std::size_t> sample_bucket;  // candidate sample -> bucket
};

/// Groups identical covariate vectors and averages their targets. Every
/// candidate sample must carry y.
inline Bucketing bucketize(const EncodedDataset& candidate) {
  Bucketing out;
  out.sample_bucket.reserve(candidate.size());
  std::unordered_map<BitVector, std::size_t, BitVectorHash> index;
  std::vector<double> sums;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const auto& s = candidate.samples[i];
    if (!s.y) {
      fail(ErrorKind::kData, "candidate sample " + std::to_string(i) +
                                 " has no target value; filter unlabeled samples first");
    }
    auto [it, inserted] = index.try_emplace(s.x, out.buckets.size());
    if (inserted) {
      out.buckets.push_back({s.x, 0, 0.0});
      sums.push_back(0.0);
    }
    ++out.buckets[it->second].member_count;
    sums[it->second] += *s.y;
    out.sample_bucket.push_back(it->second);
  }
  for (std::size_t b = 0; b < out.buckets.size(); ++b) {
    out.buckets[b].y_mean = sums[b] / static_cast<double>(out.buckets[b].member_count);
  }
  return out;
}

inline std::vector<Bucket> build_buckets(const EncodedDataset& candidate) {
  return bucketize(candidate).buckets;
}

inline std::vector<BitVector> bucket_vectors(const std::vector<Bucket>& buckets) {
  std::vector<BitVector> xs;
  xs.reserve(buckets.size());
  for (const auto& b : buckets) xs.push_back(b.x);
  return xs;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour search

enum class TieBreak { kLowestIndex, kRandom };

struct MatchOptions {
  TieBreak tie_break = TieBreak::kLowestIndex;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool use_index = false;  // popcount-pruned search instead of the full scan
};

/// mu[i] is the target matched to query i; distance_bits[i] the number of
/// differing coordinates.
struct MatchAssignment {
  std::vector<std::size_t> mu;
  std::vector<std::size_t> distance_bits;
  std::size_t dimension = 0;

  std::size_t size() const noexcept { return mu.size(); }
  double distance(std::size_t i) const {
    return static_cast<double>(distance_bits[i]) / static_cast<double>(dimension);
  }
};

struct Neighbor {
  std::size_t index = 0;
  std::size_t distance = std::numeric_limits<std::size_t>::max();
};

/// Exhaustive scan; the first (lowest-index) target wins ties.
template <std::size_t kWords = 0>
inline Neighbor scan_nearest(const std::uint64_t* query, const PackedBits& targets) {
  Neighbor best;
  const std::size_t n = targets.rows();
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t d;
    if constexpr (kWords == 1) {
      d = static_cast<std::size_t>(std::popcount(query[0] ^ targets.row(j)[0]));
    } else {
      d = xor_popcount(query, targets.row(j), targets.stride());
    }
    if (d < best.distance) {
      best = {j, d};
      if (d == 0) break;
    }
  }
  return best;
}

/// Exact search over targets sorted by popcount. Since
/// |popcount(a) - popcount(b)| <= HD(a, b), levels are visited in order of
/// that lower bound and the search stops once it exceeds the best distance.
/// Returns the same answer as scan_nearest, including tie-breaking.
class PopcountIndex {
 public:
  explicit PopcountIndex(const PackedBits& targets) : targets_(&targets) {
    const std::size_t dim = targets.dimension();
    level_start_.assign(dim + 2, 0);
    std::vector<std::size_t> pc(targets.rows());
    for (std::size_t j = 0; j < targets.rows(); ++j) {
      pc[j] = 0;
      for (std::size_t k = 0; k < targets.stride(); ++k) {
        pc[j] += static_cast<std::size_t>(std::popcount(targets.row(j)[k]));
      }
      ++level_start_[pc[j] + 1];
    }
    std::partial_sum(level_start_.begin(), level_start_.end(), level_start_.begin());
    order_.resize(targets.rows());
    std::vector<std::size_t> fill(level_start_.begin(), level_start_.end() - 1);
    for (std::size_t j = 0; j < targets.rows(); ++j) order_[fill[pc[j]]++] = j;
  }

  Neighbor nearest(const std::uint64_t* query) const {
    const std::size_t dim = targets_->dimension();
    std::size_t q = 0;
    for (std::size_t k = 0; k < targets_->stride(); ++k) {
      q += static_cast<std::size_t>(std::popcount(query[k]));
    }
    Neighbor best;
    for (std::size_t delta = 0; delta <= dim; ++delta) {
      if (delta > best.distance) break;
      visit_level(query, q + delta, best);
      if (delta > 0 && q >= delta) visit_level(query, q - delta, best);
    }
    return best;
  }

 private:
  void visit_level(const std::uint64_t* query, std::size_t level, Neighbor& best) const {
    if (level + 1 >= level_start_.size()) return;
    for (std::size_t p = level_start_[level]; p < level_start_[level + 1]; ++p) {
      const std::size_t j = order_[p];
      const std::size_t d = xor_popcount(query, targets_->row(j), targets_->stride());
      if (d < best.distance || (d == best.distance && j < best.index)) best = {j, d};
    }
  }

  const PackedBits* targets_;
  std::vector<std::size_t> level_start_;  // targets with popcount p: [start[p], start[p+1])
  std::vector<std::size_t> order_;
};

/// Nearest target for every query under Hamming distance. Work is split over
/// queries; each query writes only its own slot and, in random tie-break
/// mode, draws from its own RNG stream, so the result does not depend on the
/// thread count.
inline MatchAssignment nearest_neighbor(std::span<const BitVector> queries,
                                        std::span<const BitVector> targets,
                                        const MatchOptions& options = {}) {
  if (targets.empty()) fail(ErrorKind::kMatch, "nearest-neighbour search over an empty target set");
  const PackedBits packed(targets);
  const std::size_t dim = packed.dimension();
  if (dim == 0) fail(ErrorKind::kDimension, "nearest-neighbour search over zero-length vectors");
  const PackedBits packed_queries(queries);
  if (!queries.empty() && packed_queries.dimension() != dim) {
    fail(ErrorKind::kDimension, "query dimension " + std::to_string(packed_queries.dimension()) +
                                    " does not match target dimension " + std::to_string(dim));
  }

  MatchAssignment out;
  out.dimension = dim;
  out.mu.resize(queries.size());
  out.distance_bits.resize(queries.size());

  std::optional<PopcountIndex> index;
  if (options.use_index) index.emplace(packed);

  parallel_for(queries.size(), options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> ties;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint64_t* q = packed_queries.row(i);
      Neighbor nb;
      if (index) {
        nb = index->nearest(q);
      } else if (packed.stride() == 1) {
        nb = scan_nearest<1>(q, packed);
      } else {
        nb = scan_nearest(q, packed);
      }
      if (options.tie_break == TieBreak::kRandom) {
        ties.clear();
        for (std::size_t j = nb.index; j < packed.rows(); ++j) {
          if (xor_popcount(q, packed.row(j), packed.stride()) == nb.distance) ties.push_back(j);
        }
        if (ties.size() > 1) {
          auto eng = rng::make_stream(options.seed, i);
          nb.index = ties[static_cast<std::size_t>(rng::uniform_index(eng, ties.size()))];
        }
      }
      out.mu[i] = nb.index;
      out.distance_bits[i] = nb.distance;
    }
  });
  return out;
}

inline MatchAssignment nearest_neighbor(const EncodedDataset& source,
                                        const std::vector<Bucket>& buckets,
                                        const MatchOptions& options = {}) {
  const auto qs = source.covariates();
  const auto ts = bucket_vectors(buckets);
  if (!ts.empty() && ts.front().size() != source.dictionary.dimension()) {
    fail(ErrorKind::kDimension, "bucket dimension does not match source dictionary");
  }
  return nearest_neighbor(qs, ts, options);
}

// ---------------------------------------------------------------------------
// Imputation

enum class WeightMode {
  kGlobal,        // w = |source| / |candidate| for every sample
  kPerHousehold,  // w_h = n_h / (|candidate| / households(candidate))
};

struct ImputeOptions {
  bool impute_all = false;  // otherwise observed y are kept
  WeightMode weight = WeightMode::kGlobal;
  MatchOptions match;
};

struct ImputationResult {
  std::vector<double> per_sample_y;
  std::vector<bool> imputed;  // true where per_sample_y came from a bucket
  HouseholdTotals per_household_y;
  double weight = 1.0;  // global w
  std::vector<Bucket> buckets;
  MatchAssignment assignment;
};

/// Bucket the candidate, match every source sample to its nearest bucket,
/// set y = bucket mean / w, then sum per household.
inline ImputationResult impute(const EncodedDataset& source, const EncodedDataset& candidate,
                               const ImputeOptions& options = {}) {
  require_same_dictionary(source, candidate);
  if (candidate.empty()) fail(ErrorKind::kMatch, "empty candidate dataset");
  if (source.empty()) fail(ErrorKind::kMatch, "empty source dataset");

  ImputationResult r;
  r.buckets = build_buckets(candidate);
  r.assignment = nearest_neighbor(source, r.buckets, options.match);
  r.weight = static_cast<double>(source.size()) / static_cast<double>(candidate.size());

  std::vector<double> sample_weight(source.size(), r.weight);
  if (options.weight == WeightMode::kPerHousehold) {
    std::unordered_map<std::string, std::size_t> cand_households;
    for (const auto& s : candidate.samples) ++cand_households[s.household_id];
    const double per_household = static_cast<double>(candidate.size()) /
                                 static_cast<double>(cand_households.size());
    std::unordered_map<std::string, std::size_t> n_h;
    for (const auto& s : source.samples) ++n_h[s.household_id];
    for (std::size_t i = 0; i < source.size(); ++i) {
      sample_weight[i] = static_cast<double>(n_h[source.samples[i].household_id]) / per_household;
    }
  }

  r.per_sample_y.resize(source.size());
  r.imputed.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& s = source.samples[i];
    if (s.y && !options.impute_all) {
      r.per_sample_y[i] = *s.y;
      r.imputed[i] = false;
    } else {
      r.per_sample_y[i] = r.buckets[r.assignment.mu[i]].y_mean / sample_weight[i];
      r.imputed[i] = true;
    }
  }
  r.per_household_y = household_totals(source, r.per_sample_y);
  return r;
}

/// Copy of `source` with y replaced by the imputed values.
inline EncodedDataset apply_imputation(const EncodedDataset& source, const ImputationResult& r) {
  EncodedDataset out = source;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i].y = r.per_sample_y[i];
  return out;
}

/// Sample-level result CSV: household_id,sample_index,matched_bucket,distance,y_imputed
inline std::string serialize_assignment(const EncodedDataset& source, const ImputationResult& r) {
  std::string out = "household_id,sample_index,matched_bucket,distance,y_imputed\n";
  for (std::size_t i = 0; i < source.size(); ++i) {
    out += csv_escape(source.samples[i].household_id);
    out += ',' + std::to_string(i);
    out += ',' + std::to_string(r.assignment.mu[i]);
    out += ',' + format_double(r.assignment.distance(i));
    out += ',' + format_double(r.per_sample_y[i]);
    out += '\n';
  }
  return out;
}

}  // namespace nnfuse
