#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/matching.hpp"

namespace nnfuse {

/// Nodes and matchings of the three-level graph:
///   V1 = candidate buckets, V2 = source1 samples, V3 = labeled source2 samples,
///   E1 = V2 -> V1 (to_buckets), E2 = V3 -> V2 (to_source1).
struct TriPartiteGraph {
  Bucketing candidate;             // V1 plus candidate sample membership
  std::size_t source1_size = 0;    // |V2|
  std::vector<double> source2_y;   // y of each V3 node
  std::vector<std::size_t> source2_rows;  // V3 node -> row in the original source2
  std::size_t source2_dropped = 0;        // source2 rows without y
  std::size_t candidate_size = 0;
  MatchAssignment to_buckets;      // E1
  MatchAssignment to_source1;      // E2

  const std::vector<Bucket>& buckets() const noexcept { return candidate.buckets; }

  /// Bucket reached from V3 node g through E2 then E1.
  std::size_t nested(std::size_t g) const { return to_buckets.mu[to_source1.mu[g]]; }
};

/// Builds both matchings. source2 rows without y are dropped first; the
/// candidate must be fully labeled.
inline TriPartiteGraph nested_match(const EncodedDataset& source2, const EncodedDataset& source1,
                                    const EncodedDataset& candidate,
                                    const MatchOptions& options = {}) {
  require_same_dictionary(source1, candidate);
  require_same_dictionary(source2, source1);
  if (candidate.empty() || source1.empty() || source2.empty()) {
    fail(ErrorKind::kMatch, "nested matching needs non-empty source2, source1 and candidate");
  }

  TriPartiteGraph g;
  g.candidate = bucketize(candidate);
  g.candidate_size = candidate.size();
  g.source1_size = source1.size();

  std::vector<BitVector> v3;
  for (std::size_t i = 0; i < source2.size(); ++i) {
    const auto& s = source2.samples[i];
    if (!s.y) {
      ++g.source2_dropped;
      continue;
    }
    v3.push_back(s.x);
    g.source2_y.push_back(*s.y);
    g.source2_rows.push_back(i);
  }
  if (v3.empty()) fail(ErrorKind::kMatch, "source2 has no labeled samples");

  const auto v2 = source1.covariates();
  g.to_buckets = nearest_neighbor(v2, bucket_vectors(g.candidate.buckets), options);
  g.to_source1 = nearest_neighbor(v3, v2, options);
  return g;
}

struct SynthesisWeights {
  double w1 = 1.0;  // |source1| / |candidate|
  double w2 = 1.0;  // |source2 labeled| / |source1|
};

inline SynthesisWeights default_weights(const TriPartiteGraph& g) {
  return {static_cast<double>(g.source1_size) / static_cast<double>(g.candidate_size),
          static_cast<double>(g.source2_y.size()) / static_cast<double>(g.source1_size)};
}

/// Denominator of the outer average for a bucket v1.
enum class Normalization {
  kReachedSources,  // V2 nodes matched to v1 that have at least one V3 node
  kMatchedSources,  // every V2 node matched to v1 (unreached ones add 0)
  kAllSources,      // |V2|, the whole source1
};

struct SynthEntry {
  std::size_t bucket = 0;
  double y = 0.0;
  std::size_t matched_sources = 0;  // |S|
  std::size_t reached_sources = 0;  // members of S with non-empty G_s
  std::size_t source2_nodes = 0;    // sum of |G_s| over S
};

struct SyntheticDataset {
  std::vector<SynthEntry> entries;  // ascending bucket index
};

/// Hierarchical weighted average: for each bucket reachable from V3,
///   y = sum_{s in S} w1 * mean_{g in G_s}(w2 * g.y) / norm
/// where S are the V2 nodes matched to the bucket and G_s the V3 nodes
/// matched to s.
inline SyntheticDataset synthesize(const TriPartiteGraph& g, SynthesisWeights w,
                                   Normalization norm = Normalization::kReachedSources) {
  if (!(w.w1 > 0.0) || !(w.w2 > 0.0)) {
    fail(ErrorKind::kArgument, "synthesis weights must be positive");
  }
  const std::size_t nb = g.buckets().size();
  const std::size_t n2 = g.source1_size;

  // Per V2 node: sum and count of its V3 children.
  std::vector<double> child_sum(n2, 0.0);
  std::vector<std::size_t> child_count(n2, 0);
  for (std::size_t v3 = 0; v3 < g.source2_y.size(); ++v3) {
    const std::size_t s = g.to_source1.mu[v3];
    child_sum[s] += w.w2 * g.source2_y[v3];
    ++child_count[s];
  }

  std::vector<double> total(nb, 0.0);
  std::vector<SynthEntry> per_bucket(nb);
  for (std::size_t s = 0; s < n2; ++s) {
    const std::size_t b = g.to_buckets.mu[s];
    auto& e = per_bucket[b];
    ++e.matched_sources;
    if (child_count[s] > 0) {
      ++e.reached_sources;
      e.source2_nodes += child_count[s];
      total[b] += w.w1 * (child_sum[s] / static_cast<double>(child_count[s]));
    }
  }

  SyntheticDataset out;
  for (std::size_t b = 0; b < nb; ++b) {
    auto& e = per_bucket[b];
    if (e.reached_sources == 0) continue;
    double denom = 0.0;
    switch (norm) {
      case Normalization::kReachedSources: denom = static_cast<double>(e.reached_sources); break;
      case Normalization::kMatchedSources: denom = static_cast<double>(e.matched_sources); break;
      case Normalization::kAllSources: denom = static_cast<double>(n2); break;
    }
    e.bucket = b;
    e.y = total[b] / denom;
    out.entries.push_back(e);
  }
  return out;
}

/// Candidate-shaped synthetic survey: every candidate sample whose bucket was
/// synthesized, carrying the synthesized y. Household ids are the
/// candidate's.
inline EncodedDataset to_dataset(const SyntheticDataset& synth, const TriPartiteGraph& g,
                                 const EncodedDataset& candidate, int year) {
  std::vector<const SynthEntry*> by_bucket(g.buckets().size(), nullptr);
  for (const auto& e : synth.entries) by_bucket[e.bucket] = &e;
  EncodedDataset out{candidate.dictionary, candidate.survey_id, year, {}};
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (const SynthEntry* e = by_bucket[g.candidate.sample_bucket[i]]) {
      out.samples.push_back({candidate.samples[i].household_id, candidate.samples[i].x, e->y});
    }
  }
  return out;
}

/// Provenance CSV: bucket_id,n_S,n_S_reached,n_G_total,y_synth
inline std::string serialize_provenance(const SyntheticDataset& synth) {
  std::string out = "bucket_id,n_S,n_S_reached,n_G_total,y_synth\n";
  for (const auto& e : synth.entries) {
    out += std::to_string(e.bucket) + ',' + std::to_string(e.matched_sources) + ',' +
           std::to_string(e.reached_sources) + ',' + std::to_string(e.source2_nodes) + ',' +
           format_double(e.y) + '\n';
  }
  return out;
}

}  // namespace nnfuse
