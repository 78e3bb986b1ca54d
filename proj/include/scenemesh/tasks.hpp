#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "scenemesh/clustering.hpp"
#include "scenemesh/common.hpp"
#include "scenemesh/rng.hpp"

namespace scenemesh {

// A clip represented by its topic profile, as pooled for the downstream tasks.
struct PooledClip {
  std::string clip_id;
  std::string scene_id;
  std::vector<double> gamma;
};

struct RetrievalEntry {
  std::string clip_id;
  std::string scene_id;
  double distance = 0.0;
};

struct RankedRetrieval {
  std::string query_id;
  std::vector<RetrievalEntry> entries;  // ascending distance
};

// L2 ranking of the pool against the query profile; ties break by
// (scene_id, clip_id); the query itself is excluded; truncated to top_t.
inline RankedRetrieval query_by_example(const PooledClip& query,
                                        const std::vector<PooledClip>& pool, int top_t) {
  RankedRetrieval out;
  out.query_id = query.clip_id;
  out.entries.reserve(pool.size());
  for (const auto& clip : pool) {
    if (clip.clip_id == query.clip_id && clip.scene_id == query.scene_id) continue;
    out.entries.push_back(RetrievalEntry{clip.clip_id, clip.scene_id,
                                         l2_distance(query.gamma, clip.gamma)});
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
    return a.clip_id < b.clip_id;
  });
  if (top_t >= 0 && static_cast<std::size_t>(top_t) < out.entries.size()) {
    out.entries.resize(static_cast<std::size_t>(top_t));
  }
  return out;
}

struct LabeledClip {
  PooledClip clip;
  std::string category;
};

struct KnnPrediction {
  std::string clip_id;
  std::string category;
};

struct KnnResult {
  int chosen_k = 1;
  std::vector<KnnPrediction> predictions;
};

namespace detail {

// Majority vote over the k nearest labeled clips; a vote tie goes to the
// nearest neighbor whose category is among the tied leaders.
inline std::string knn_vote(const std::vector<double>& gamma,
                            const std::vector<LabeledClip>& labeled, int k) {
  struct Neighbor {
    double distance;
    const LabeledClip* clip;
  };
  std::vector<Neighbor> neighbors;
  neighbors.reserve(labeled.size());
  for (const auto& l : labeled) {
    neighbors.push_back(Neighbor{l2_distance(gamma, l.clip.gamma), &l});
  }
  std::sort(neighbors.begin(), neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.clip->clip.scene_id != b.clip->clip.scene_id) {
      return a.clip->clip.scene_id < b.clip->clip.scene_id;
    }
    return a.clip->clip.clip_id < b.clip->clip.clip_id;
  });
  const int kk = std::min<int>(k, static_cast<int>(neighbors.size()));
  std::map<std::string, int> votes;
  for (int i = 0; i < kk; ++i) ++votes[neighbors[static_cast<std::size_t>(i)].clip->category];
  int max_votes = 0;
  for (const auto& [cat, v] : votes) max_votes = std::max(max_votes, v);
  for (int i = 0; i < kk; ++i) {
    const auto& cat = neighbors[static_cast<std::size_t>(i)].clip->category;
    if (votes[cat] == max_votes) return cat;
  }
  return neighbors.front().clip->category;
}

}  // namespace detail

// Cross-scene KNN classification. K is selected from the grid by inner
// leave-one-scene-out cross-validation over the labeled scenes (mean
// per-category accuracy, smallest K on ties); predictions are the majority
// vote of the K nearest labeled clips by L2 on the shared-basis profiles.
inline KnnResult knn_classify_cross_scene(const std::vector<PooledClip>& test_clips,
                                          const std::vector<LabeledClip>& labeled,
                                          const std::vector<int>& k_grid) {
  if (labeled.empty()) throw DomainError("knn_classify_cross_scene: empty label set");
  if (k_grid.empty()) throw DomainError("knn_classify_cross_scene: empty K grid");

  std::vector<int> grid = k_grid;
  std::sort(grid.begin(), grid.end());

  std::vector<std::string> scenes;
  for (const auto& l : labeled) {
    if (std::find(scenes.begin(), scenes.end(), l.clip.scene_id) == scenes.end()) {
      scenes.push_back(l.clip.scene_id);
    }
  }

  KnnResult result;
  result.chosen_k = grid.front();
  if (scenes.size() >= 2) {
    double best_acc = -1.0;
    for (int k : grid) {
      std::map<std::string, std::pair<int, int>> per_category;  // hits, total
      for (const auto& held_out : scenes) {
        std::vector<LabeledClip> train;
        for (const auto& l : labeled) {
          if (l.clip.scene_id != held_out) train.push_back(l);
        }
        if (train.empty()) continue;
        for (const auto& l : labeled) {
          if (l.clip.scene_id != held_out) continue;
          const std::string predicted = detail::knn_vote(l.clip.gamma, train, k);
          auto& [hits, total] = per_category[l.category];
          ++total;
          if (predicted == l.category) ++hits;
        }
      }
      KahanSum acc;
      int n_categories = 0;
      for (const auto& [cat, counts] : per_category) {
        if (counts.second == 0) continue;
        acc.add(static_cast<double>(counts.first) / counts.second);
        ++n_categories;
      }
      const double mean_acc = n_categories > 0 ? acc.value() / n_categories : 0.0;
      if (mean_acc > best_acc + 1e-12) {
        best_acc = mean_acc;
        result.chosen_k = k;
      }
    }
  }

  result.predictions.reserve(test_clips.size());
  for (const auto& clip : test_clips) {
    result.predictions.push_back(
        KnnPrediction{clip.clip_id, detail::knn_vote(clip.gamma, labeled, result.chosen_k)});
  }
  return result;
}

// Summary of a clip pool: the selected clip ids and the realized objective
// J = max over the pool of the distance to the nearest selected clip.
struct SummarySet {
  std::vector<std::string> selected;  // clip ids, selection order
  std::vector<int> selected_indices;  // into the pool
  double objective = 0.0;
};

inline double maxmin_objective(const std::vector<PooledClip>& pool,
                               const std::vector<int>& selected) {
  if (selected.empty()) throw DomainError("maxmin_objective: empty summary");
  double worst = 0.0;
  for (const auto& clip : pool) {
    double nearest = std::numeric_limits<double>::infinity();
    for (int idx : selected) {
      nearest = std::min(nearest, l2_distance(clip.gamma, pool[static_cast<std::size_t>(idx)].gamma));
    }
    worst = std::max(worst, nearest);
  }
  return worst;
}

namespace detail {

inline SummarySet finish_summary(const std::vector<PooledClip>& pool, std::vector<int> selected) {
  SummarySet out;
  out.objective = maxmin_objective(pool, selected);
  for (int idx : selected) out.selected.push_back(pool[static_cast<std::size_t>(idx)].clip_id);
  out.selected_indices = std::move(selected);
  return out;
}

}  // namespace detail

// Gonzalez farthest-point traversal from an explicit first center; every
// further center is the pool clip farthest from its nearest selected one
// (ties toward the lower pool index). The realized cost is within twice the
// optimal max-min cost.
inline SummarySet kcenter_from(const std::vector<PooledClip>& pool, int n_sum, int first_index) {
  if (pool.empty()) throw DomainError("kcenter_from: empty pool");
  if (n_sum < 1 || n_sum > static_cast<int>(pool.size())) {
    throw DomainError("kcenter_from: summary length out of range");
  }
  if (first_index < 0 || first_index >= static_cast<int>(pool.size())) {
    throw DomainError("kcenter_from: first center out of range");
  }
  std::vector<int> selected{first_index};
  std::vector<double> nearest(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    nearest[i] = l2_distance(pool[i].gamma, pool[static_cast<std::size_t>(first_index)].gamma);
  }
  while (static_cast<int>(selected.size()) < n_sum) {
    int farthest = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      if (nearest[i] > nearest[static_cast<std::size_t>(farthest)]) farthest = static_cast<int>(i);
    }
    selected.push_back(farthest);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      nearest[i] = std::min(nearest[i],
                            l2_distance(pool[i].gamma, pool[static_cast<std::size_t>(farthest)].gamma));
    }
  }
  return detail::finish_summary(pool, std::move(selected));
}

inline SummarySet summarize_kcenter(const std::vector<PooledClip>& pool, int n_sum,
                                    std::uint64_t seed) {
  if (pool.empty()) throw DomainError("summarize_kcenter: empty pool");
  Rng rng = Rng::substream(seed, "kcenter");
  return kcenter_from(pool, n_sum, rng.uniform_int(static_cast<int>(pool.size())));
}

// Recursive normalized cut into n_sum clusters on similarity
// exp(-d^2 / sigma^2) with sigma the median pairwise distance; the summary is
// the medoid of each cluster.
inline SummarySet summarize_ncut(const std::vector<PooledClip>& pool, int n_sum) {
  if (pool.empty()) throw DomainError("summarize_ncut: empty pool");
  if (n_sum < 1 || n_sum > static_cast<int>(pool.size())) {
    throw DomainError("summarize_ncut: summary length out of range");
  }
  const int n = static_cast<int>(pool.size());
  Eigen::MatrixXd dist(n, n);
  std::vector<double> upper;
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double d = l2_distance(pool[static_cast<std::size_t>(i)].gamma,
                                   pool[static_cast<std::size_t>(j)].gamma);
      dist(i, j) = d;
      dist(j, i) = d;
      upper.push_back(d);
    }
  }
  double sigma = upper.empty() ? 1.0 : percentile(upper, 0.5);
  if (!(sigma > 0.0)) sigma = 1.0;
  Eigen::MatrixXd sim(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      sim(i, j) = i == j ? 0.0 : std::exp(-dist(i, j) * dist(i, j) / (sigma * sigma));
    }
  }
  const auto clusters = recursive_ncut(sim, n_sum);
  std::vector<int> selected;
  for (const auto& cluster : clusters) {
    int medoid = cluster.front();
    double best = std::numeric_limits<double>::infinity();
    for (int i : cluster) {
      double total = 0.0;
      for (int j : cluster) total += dist(i, j);
      if (total < best) {
        best = total;
        medoid = i;
      }
    }
    selected.push_back(medoid);
  }
  return detail::finish_summary(pool, std::move(selected));
}

inline SummarySet summarize_random(const std::vector<PooledClip>& pool, int n_sum,
                                   std::uint64_t seed) {
  if (pool.empty()) throw DomainError("summarize_random: empty pool");
  if (n_sum < 1 || n_sum > static_cast<int>(pool.size())) {
    throw DomainError("summarize_random: summary length out of range");
  }
  Rng rng = Rng::substream(seed, "random-summary");
  return detail::finish_summary(pool,
                                rng.sample_without_replacement(static_cast<int>(pool.size()), n_sum));
}

// Splits a total summary budget across pools proportionally to pool size
// (largest-remainder rounding; every non-empty pool keeps at least the
// remainder ordering deterministic).
inline std::vector<int> proportional_split(const std::vector<int>& pool_sizes, int total) {
  if (pool_sizes.empty()) throw DomainError("proportional_split: no pools");
  long long size_sum = 0;
  for (int s : pool_sizes) {
    if (s < 0) throw DomainError("proportional_split: negative pool size");
    size_sum += s;
  }
  if (size_sum == 0) throw DomainError("proportional_split: empty pools");
  std::vector<int> shares(pool_sizes.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < pool_sizes.size(); ++i) {
    const double exact = static_cast<double>(total) * pool_sizes[i] / static_cast<double>(size_sum);
    shares[i] = static_cast<int>(std::floor(exact));
    shares[i] = std::min(shares[i], pool_sizes[i]);
    assigned += shares[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t cursor = 0;
  while (assigned < total && cursor < 4 * remainders.size()) {
    const std::size_t i = remainders[cursor % remainders.size()].second;
    if (shares[i] < pool_sizes[i]) {
      ++shares[i];
      ++assigned;
    }
    ++cursor;
  }
  if (assigned < total) throw DomainError("proportional_split: total exceeds pooled clips");
  return shares;
}

}  // namespace scenemesh
