#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kcforge/embedding.hpp"
#include "kcforge/error.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

// The audited result of one merge pass: an exact partition of the original
// labels into clusters, a canonical representative per cluster, and the
// original -> canonical map.
struct MergePlan {
  double threshold = 1.0;
  std::vector<std::vector<std::string>> clusters;  // members sorted; clusters
                                                   // ordered by first member
  std::vector<std::string> canonical;              // one per cluster
  std::map<std::string, std::string> provenance;   // original -> canonical
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) {
      return;
    }
    if (rank_[a] < rank_[b]) {
      std::swap(a, b);
    }
    parent_[b] = a;
    if (rank_[a] == rank_[b]) {
      ++rank_[a];
    }
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

}  // namespace detail

// The similarity the merge graph is built from: cosine over l2-normalized
// copies, clamped against rounding, with bitwise-identical raw vectors
// counting as exactly 1 so a threshold of 1 still merges exact duplicates.
inline double merge_similarity(const EmbeddingVector& u,
                               const EmbeddingVector& v) {
  if (u == v) {
    return 1.0;
  }
  const EmbeddingVector un = l2_normalized(u);
  const EmbeddingVector vn = l2_normalized(v);
  if (un.dim() != vn.dim()) {
    throw ContractError("merge_similarity: dimension mismatch");
  }
  double dot = 0.0;
  for (std::size_t d = 0; d < un.values.size(); ++d) {
    dot += un.values[d] * vn.values[d];
  }
  return std::clamp(dot, -1.0, 1.0);
}

// Connects labels whose merge_similarity clears the threshold (inclusive)
// and takes connected components as clusters. The canonical label of a
// cluster is the member mapped to the most items in the pre-merge model
// (`usage`), ties broken by shortest label, then lexicographic order.
inline MergePlan build_merge_plan(
    const std::map<std::string, EmbeddingVector>& vectors, double threshold,
    const std::map<std::string, std::size_t>& usage = {}) {
  if (vectors.empty()) {
    throw ValidationError("build_merge_plan: no labels given");
  }
  if (threshold < -1.0 || threshold > 1.0) {
    throw ValidationError("build_merge_plan: threshold must be in [-1, 1]");
  }

  std::vector<std::string> labels;
  labels.reserve(vectors.size());
  std::size_t dim = 0;
  for (const auto& [label, vector] : vectors) {
    validate(vector);
    if (labels.empty()) {
      dim = vector.dim();
    } else if (vector.dim() != dim) {
      throw ContractError("build_merge_plan: dimension mismatch for label '" +
                          label + "'");
    }
    labels.push_back(label);
  }

  detail::UnionFind components(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (merge_similarity(vectors.at(labels[i]), vectors.at(labels[j])) >=
          threshold) {
        components.unite(i, j);
      }
    }
  }

  std::map<std::size_t, std::vector<std::string>> by_root;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_root[components.find(i)].push_back(labels[i]);
  }

  MergePlan plan;
  plan.threshold = threshold;
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    plan.clusters.push_back(members);
  }
  std::sort(plan.clusters.begin(), plan.clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  for (const auto& cluster : plan.clusters) {
    const std::string* best = &cluster.front();
    std::size_t best_usage = usage.count(*best) ? usage.at(*best) : 0;
    for (const auto& member : cluster) {
      const std::size_t member_usage =
          usage.count(member) ? usage.at(member) : 0;
      if (member_usage > best_usage ||
          (member_usage == best_usage &&
           (member.size() < best->size() ||
            (member.size() == best->size() && member < *best)))) {
        best = &member;
        best_usage = member_usage;
      }
    }
    plan.canonical.push_back(*best);
    for (const auto& member : cluster) {
      plan.provenance[member] = *best;
    }
  }
  return plan;
}

// Rewrites every item's labels through the plan's provenance. Labels of one
// item that merge into the same canonical collapse to one.
inline KcModel apply_merge(const KcModel& model, const MergePlan& plan,
                           const std::string& new_name = "") {
  KcModel::Mapping merged;
  for (const auto& [item, labels] : model.mapping()) {
    std::set<std::string> rewritten;
    for (const auto& label : labels) {
      const auto it = plan.provenance.find(label);
      if (it == plan.provenance.end()) {
        throw ContractError("merge plan has no provenance for label '" +
                            label + "'");
      }
      rewritten.insert(it->second);
    }
    merged[item] = std::move(rewritten);
  }
  return KcModel(new_name.empty() ? model.name() : new_name,
                 std::move(merged));
}

// One merged model per threshold, each produced independently from the same
// vectors.
inline std::vector<std::pair<double, KcModel>> threshold_sweep(
    const KcModel& model, const std::map<std::string, EmbeddingVector>& vectors,
    const std::vector<double>& thresholds) {
  std::vector<std::pair<double, KcModel>> out;
  out.reserve(thresholds.size());
  const auto usage = model.label_usage();
  for (const double threshold : thresholds) {
    const MergePlan plan = build_merge_plan(vectors, threshold, usage);
    out.emplace_back(threshold, apply_merge(model, plan));
  }
  return out;
}

// TSV audit form: `original_label\tcanonical_label`, sorted by original.
inline void write_merge_plan(const MergePlan& plan, std::ostream& sink) {
  sink << "original_label\tcanonical_label\n";
  for (const auto& [original, canonical] : plan.provenance) {
    sink << original << '\t' << canonical << '\n';
  }
  if (!sink) {
    throw IoError("write failure while serializing merge plan");
  }
}

}  // namespace kcforge
