#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "scenemesh/common.hpp"
#include "scenemesh/relatedness.hpp"
#include "scenemesh/rng.hpp"

namespace scenemesh {

struct EigenDecomposition {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns, matching `values`
};

inline EigenDecomposition symmetric_eigendecomposition(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols()) {
    throw DomainError("symmetric_eigendecomposition: matrix not square");
  }
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw DomainError("symmetric_eigendecomposition: matrix not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
  if (solver.info() != Eigen::Success) {
    throw NumericError("symmetric_eigendecomposition: solver failed");
  }
  EigenDecomposition out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

enum class ClusterMode { Auto, FixedK };

struct SpectralConfig {
  int local_scale_neighbor = 7;
  int kmeans_restarts = 10;
  int kmeans_max_iters = 100;
  int max_clusters = 8;          // auto-mode candidate cap
  double auto_tolerance = 0.03;  // rotation-cost slack per point for auto C
  std::uint64_t seed = 0;
};

struct SceneClustering {
  std::vector<std::string> scene_ids;
  std::vector<int> labels;  // dense cluster ids 0..C-1
  int num_clusters = 0;
  ClusterMode mode = ClusterMode::FixedK;

  std::map<std::string, int> partition() const {
    std::map<std::string, int> p;
    for (std::size_t i = 0; i < scene_ids.size(); ++i) p[scene_ids[i]] = labels[i];
    return p;
  }

  std::vector<std::string> members_of(int cluster) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scene_ids.size(); ++i) {
      if (labels[i] == cluster) out.push_back(scene_ids[i]);
    }
    return out;
  }

  void validate() const {
    if (scene_ids.size() != labels.size()) throw DomainError("SceneClustering: size mismatch");
    std::set<int> seen;
    for (int l : labels) {
      if (l < 0 || l >= num_clusters) throw DomainError("SceneClustering: label out of range");
      seen.insert(l);
    }
    if (static_cast<int>(seen.size()) != num_clusters) {
      throw DomainError("SceneClustering: cluster ids not dense");
    }
  }
};

struct AutoKDiagnostics {
  std::vector<int> candidates;
  std::vector<double> rotation_costs;
};

namespace detail {

// Seeded Lloyd k-means with k-means++ initialization and restarts; the
// restart with the lowest within-cluster sum of squares wins (first best on
// ties).
inline std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, const SpectralConfig& cfg) {
  const int n = static_cast<int>(points.rows());
  const int dim = static_cast<int>(points.cols());
  std::vector<int> best_labels(static_cast<std::size_t>(n), 0);
  double best_sse = std::numeric_limits<double>::infinity();
  Rng rng = Rng::substream(cfg.seed, "kmeans");

  for (int restart = 0; restart < std::max(1, cfg.kmeans_restarts); ++restart) {
    Eigen::MatrixXd centers(k, dim);
    std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    centers.row(0) = points.row(rng.uniform_int(n));
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d2 = (points.row(i) - centers.row(c - 1)).squaredNorm();
        min_d2[static_cast<std::size_t>(i)] = std::min(min_d2[static_cast<std::size_t>(i)], d2);
        total += min_d2[static_cast<std::size_t>(i)];
      }
      int pick = 0;
      if (total > 0.0) {
        double u = rng.uniform01() * total;
        for (int i = 0; i < n; ++i) {
          u -= min_d2[static_cast<std::size_t>(i)];
          if (u < 0.0) {
            pick = i;
            break;
          }
          pick = i;
        }
      } else {
        pick = rng.uniform_int(n);
      }
      centers.row(c) = points.row(pick);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < cfg.kmeans_max_iters; ++iter) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d2 = (points.row(i) - centers.row(c)).squaredNorm();
          if (d2 < best) {
            best = d2;
            arg = c;
          }
        }
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      centers.setZero();
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int i = 0; i < n; ++i) {
        centers.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
          centers.row(c) /= counts[static_cast<std::size_t>(c)];
        } else {
          // Re-seed an empty cluster with the point farthest from its center.
          int farthest = 0;
          double far_d = -1.0;
          for (int i = 0; i < n; ++i) {
            const double d2 = (points.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
            if (d2 > far_d) {
              far_d = d2;
              farthest = i;
            }
          }
          centers.row(c) = points.row(farthest);
          changed = true;
        }
      }
      if (!changed) break;
    }

    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      sse += (points.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_labels = labels;
    }
  }
  return best_labels;
}

// Alignment cost of the self-tuning method: how close X*R can get to having a
// single dominant entry per row, minimized over Givens rotations by gradient
// descent (numeric gradient; the candidate spaces are tiny).
inline double rotation_alignment_cost(const Eigen::MatrixXd& eigenvectors) {
  const int n = static_cast<int>(eigenvectors.rows());
  const int c = static_cast<int>(eigenvectors.cols());
  if (c < 2) return static_cast<double>(n);

  std::vector<std::pair<int, int>> planes;
  for (int i = 0; i < c - 1; ++i) {
    for (int j = i + 1; j < c; ++j) planes.emplace_back(i, j);
  }
  const auto n_angles = planes.size();

  auto rotation = [&](const std::vector<double>& theta) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(c, c);
    for (std::size_t a = 0; a < n_angles; ++a) {
      const auto [i, j] = planes[a];
      const double cs = std::cos(theta[a]);
      const double sn = std::sin(theta[a]);
      // Right-multiply by the Givens rotation in plane (i, j).
      for (int row = 0; row < c; ++row) {
        const double ri = r(row, i);
        const double rj = r(row, j);
        r(row, i) = cs * ri - sn * rj;
        r(row, j) = sn * ri + cs * rj;
      }
    }
    return r;
  };

  auto cost = [&](const std::vector<double>& theta) {
    const Eigen::MatrixXd z = eigenvectors * rotation(theta);
    double total = 0.0;
    for (int row = 0; row < n; ++row) {
      double max2 = 0.0;
      for (int col = 0; col < c; ++col) max2 = std::max(max2, z(row, col) * z(row, col));
      if (max2 <= 0.0) continue;
      for (int col = 0; col < c; ++col) total += z(row, col) * z(row, col) / max2;
    }
    return total;
  };

  const double h = 1e-4;
  auto descend = [&](std::vector<double> theta) {
    double current = cost(theta);
    double step = 0.2;
    for (int iter = 0; iter < 400 && step > 1e-8; ++iter) {
      std::vector<double> grad(n_angles, 0.0);
      for (std::size_t a = 0; a < n_angles; ++a) {
        std::vector<double> up = theta;
        std::vector<double> dn = theta;
        up[a] += h;
        dn[a] -= h;
        grad[a] = (cost(up) - cost(dn)) / (2.0 * h);
      }
      std::vector<double> trial(n_angles);
      for (std::size_t a = 0; a < n_angles; ++a) trial[a] = theta[a] - step * grad[a];
      const double trial_cost = cost(trial);
      if (trial_cost < current - 1e-12) {
        theta = std::move(trial);
        current = trial_cost;
        step *= 1.2;
      } else {
        step *= 0.5;
      }
    }
    return current;
  };

  // The cost surface is multimodal in the Givens angles; descend from a
  // fixed fan of starts and keep the best.
  double best = std::numeric_limits<double>::infinity();
  for (double start : {0.0, M_PI / 8.0, -M_PI / 8.0, M_PI / 4.0}) {
    best = std::min(best, descend(std::vector<double>(n_angles, start)));
  }
  Rng rng(20240u + static_cast<std::uint64_t>(c));
  for (int s = 0; s < 4; ++s) {
    std::vector<double> theta(n_angles);
    for (auto& t : theta) t = rng.uniform(-M_PI / 4.0, M_PI / 4.0);
    best = std::min(best, descend(std::move(theta)));
  }
  return best;
}

inline std::vector<int> relabel_dense(std::vector<int> labels, int* num_clusters) {
  std::map<int, int> remap;
  for (int& l : labels) {
    auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    l = it->second;
  }
  *num_clusters = static_cast<int>(remap.size());
  return labels;
}

}  // namespace detail

// Self-tuning spectral clustering over a scene affinity matrix. Relatedness
// is inverted to a distance (1 - relatedness), locally scaled with each
// scene's distance to its local_scale_neighbor-th neighbor, and the
// normalized spectral embedding is clustered by seeded k-means. Auto mode
// picks the cluster count whose eigenvector rotation aligns best.
inline SceneClustering self_tuning_spectral_cluster(const AffinityMatrix& affinity, ClusterMode mode,
                                                    int fixed_k, const SpectralConfig& cfg,
                                                    AutoKDiagnostics* diagnostics = nullptr) {
  affinity.validate();
  const int n = affinity.size();
  if (n < 2) throw DomainError("self_tuning_spectral_cluster: need at least 2 scenes");
  if (mode == ClusterMode::FixedK && (fixed_k < 1 || fixed_k > n)) {
    throw DomainError("self_tuning_spectral_cluster: fixed cluster count out of range");
  }

  Eigen::MatrixXd dist(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dist(i, j) = i == j ? 0.0 : 1.0 - affinity.values(i, j);
  }

  // Local scales: distance to the K-th nearest neighbor.
  std::vector<double> sigma(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(n - 1));
    for (int j = 0; j < n; ++j) {
      if (j != i) row.push_back(dist(i, j));
    }
    std::sort(row.begin(), row.end());
    const auto k = static_cast<std::size_t>(std::min(cfg.local_scale_neighbor, n - 1)) - 1;
    sigma[static_cast<std::size_t>(i)] = std::max(row[k], 1e-12);
  }

  Eigen::MatrixXd scaled = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      scaled(i, j) = std::exp(-dist(i, j) * dist(i, j) /
                              (sigma[static_cast<std::size_t>(i)] * sigma[static_cast<std::size_t>(j)]));
    }
  }

  Eigen::VectorXd degree = scaled.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  for (int i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(std::max(degree(i), 1e-12));
  const Eigen::MatrixXd normalized = inv_sqrt.asDiagonal() * scaled * inv_sqrt.asDiagonal();
  const EigenDecomposition eig = symmetric_eigendecomposition(normalized);

  int n_clusters = fixed_k;
  if (mode == ClusterMode::Auto) {
    const int c_max = std::min(cfg.max_clusters, n);
    std::vector<double> costs;
    for (int c = 2; c <= c_max; ++c) {
      costs.push_back(detail::rotation_alignment_cost(eig.vectors.leftCols(c)));
      if (diagnostics != nullptr) {
        diagnostics->candidates.push_back(c);
        diagnostics->rotation_costs.push_back(costs.back());
      }
    }
    // Alignment cost plateaus near n for every C up to the true count and
    // rises beyond it, so take the largest C whose cost stays within the
    // tolerance band of the minimum.
    double min_cost = std::numeric_limits<double>::infinity();
    for (double c : costs) min_cost = std::min(min_cost, c);
    int best_c = 2;
    for (std::size_t i = 0; i < costs.size(); ++i) {
      if (costs[i] <= min_cost + cfg.auto_tolerance * n) best_c = 2 + static_cast<int>(i);
    }
    n_clusters = best_c;
    log_message(LogLevel::Info,
                "self_tuning_spectral_cluster: auto mode selected C = " + std::to_string(n_clusters));
  }

  Eigen::MatrixXd embedding = eig.vectors.leftCols(n_clusters);
  for (int i = 0; i < n; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }

  SceneClustering clustering;
  clustering.scene_ids = affinity.scene_ids;
  clustering.mode = mode;
  clustering.labels = detail::kmeans(embedding, n_clusters, cfg);
  clustering.labels = detail::relabel_dense(std::move(clustering.labels), &clustering.num_clusters);
  clustering.validate();
  return clustering;
}

// Reference scene: the member with the lowest total distance (1 - relatedness)
// to the rest of the cluster; ties break toward the smallest scene id.
inline std::string select_reference_scene(const std::vector<std::string>& members,
                                          const AffinityMatrix& affinity) {
  if (members.empty()) throw DomainError("select_reference_scene: empty cluster");
  std::vector<std::string> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  std::string best = sorted.front();
  double best_total = std::numeric_limits<double>::infinity();
  for (const auto& s : sorted) {
    const int i = affinity.index_of(s);
    double total = 0.0;
    for (const auto& other : sorted) {
      if (other == s) continue;
      total += 1.0 - affinity.values(i, affinity.index_of(other));
    }
    if (total < best_total) {
      best_total = total;
      best = s;
    }
  }
  return best;
}

// Agglomerative clustering with average linkage on pairwise symmetric KL;
// inputs are already in a common frame. Deterministic: merge ties break
// toward the lowest pair index.
inline std::vector<std::vector<int>> hierarchical_cluster_topics(
    const std::vector<std::vector<double>>& topics, int k_clusters) {
  const int n = static_cast<int>(topics.size());
  if (k_clusters < 1) throw DomainError("hierarchical_cluster_topics: K must be >= 1");
  if (k_clusters > n) throw DomainError("hierarchical_cluster_topics: K exceeds topic count");

  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) clusters[static_cast<std::size_t>(i)] = {i};

  Eigen::MatrixXd dist(n, n);
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double d = symkl_same_frame(topics[static_cast<std::size_t>(i)],
                                        topics[static_cast<std::size_t>(j)]);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  int n_alive = n;
  while (n_alive > k_clusters) {
    int bi = -1;
    int bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!alive[static_cast<std::size_t>(j)]) continue;
        if (dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    // Average linkage update (Lance-Williams).
    const double wi = static_cast<double>(clusters[static_cast<std::size_t>(bi)].size());
    const double wj = static_cast<double>(clusters[static_cast<std::size_t>(bj)].size());
    for (int k = 0; k < n; ++k) {
      if (!alive[static_cast<std::size_t>(k)] || k == bi || k == bj) continue;
      const double d = (wi * dist(bi, k) + wj * dist(bj, k)) / (wi + wj);
      dist(bi, k) = d;
      dist(k, bi) = d;
    }
    auto& target = clusters[static_cast<std::size_t>(bi)];
    auto& source = clusters[static_cast<std::size_t>(bj)];
    target.insert(target.end(), source.begin(), source.end());
    std::sort(target.begin(), target.end());
    source.clear();
    alive[static_cast<std::size_t>(bj)] = false;
    --n_alive;
  }

  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) {
    if (alive[static_cast<std::size_t>(i)]) out.push_back(clusters[static_cast<std::size_t>(i)]);
  }
  return out;
}

struct StbTopicSource {
  std::string scene_id;
  int topic_index = 0;

  bool operator<(const StbTopicSource& o) const {
    return scene_id != o.scene_id ? scene_id < o.scene_id : topic_index < o.topic_index;
  }
  bool operator==(const StbTopicSource& o) const = default;
};

// Shared activity topic basis of one scene cluster: every member's local
// topics projected into the reference scene's coordinates, grouped, and
// averaged per group. Provenance records which (scene, local topic) pairs
// built each shared topic.
struct SharedTopicBasis {
  int cluster_id = 0;
  std::string reference_scene;
  SceneTransform reference_normalization;
  std::map<std::string, SceneTransform> to_reference;  // per member scene
  GridSpec grid;
  std::vector<std::vector<double>> topics;
  std::vector<std::vector<StbTopicSource>> provenance;

  int num_topics() const { return static_cast<int>(topics.size()); }

  void validate() const {
    grid.validate();
    if (topics.size() != provenance.size()) throw DomainError("SharedTopicBasis: provenance size mismatch");
    std::set<StbTopicSource> seen;
    for (const auto& group : provenance) {
      if (group.empty()) throw DomainError("SharedTopicBasis: empty provenance group");
      for (const auto& src : group) {
        if (!seen.insert(src).second) {
          throw DomainError("SharedTopicBasis: local topic assigned to two shared topics");
        }
      }
    }
    for (const auto& topic : topics) {
      double sum = 0.0;
      for (double v : topic) {
        if (!(v >= 0.0)) throw DomainError("SharedTopicBasis: negative entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw DomainError("SharedTopicBasis: topic not normalized");
    }
  }
};

struct StbMember {
  std::string scene_id;
  const TopicMatrix* topics = nullptr;
  SceneTransform normalization;
};

inline SharedTopicBasis build_stb(int cluster_id, const std::vector<StbMember>& members,
                                  const AffinityMatrix& affinity, int k_stb) {
  if (members.empty()) throw DomainError("build_stb: empty cluster");
  std::vector<std::string> ids;
  for (const auto& m : members) ids.push_back(m.scene_id);

  SharedTopicBasis stb;
  stb.cluster_id = cluster_id;
  stb.reference_scene = select_reference_scene(ids, affinity);
  stb.grid = members.front().topics->grid;

  const StbMember* ref = nullptr;
  for (const auto& m : members) {
    if (m.scene_id == stb.reference_scene) ref = &m;
  }
  stb.reference_normalization = ref->normalization;

  std::vector<std::vector<double>> projected;
  std::vector<StbTopicSource> sources;
  for (const auto& m : members) {
    const SceneTransform to_ref = compose_a_to_b(m.normalization, ref->normalization);
    stb.to_reference[m.scene_id] = to_ref;
    for (int k = 0; k < m.topics->num_topics(); ++k) {
      try {
        projected.push_back(to_ref.is_identity()
                                ? m.topics->topics[static_cast<std::size_t>(k)]
                                : transform_topic(m.topics->topics[static_cast<std::size_t>(k)],
                                                  stb.grid, to_ref));
      } catch (const DomainError& e) {
        throw DomainError("build_stb: projecting scene " + m.scene_id + " topic " +
                          std::to_string(k) + ": " + e.what());
      }
      sources.push_back(StbTopicSource{m.scene_id, k});
    }
  }
  if (k_stb < 1 || k_stb > static_cast<int>(projected.size())) {
    throw DomainError("build_stb: K_stb out of range");
  }

  const auto groups = hierarchical_cluster_topics(projected, k_stb);
  const auto vocab = static_cast<std::size_t>(stb.grid.vocab_size());
  for (const auto& group : groups) {
    std::vector<double> mean(vocab, 0.0);
    std::vector<StbTopicSource> origin;
    for (int idx : group) {
      const auto& topic = projected[static_cast<std::size_t>(idx)];
      for (std::size_t v = 0; v < vocab; ++v) mean[v] += topic[v];
      origin.push_back(sources[static_cast<std::size_t>(idx)]);
    }
    double total = 0.0;
    for (double v : mean) total += v;
    for (double& v : mean) v /= total;
    stb.topics.push_back(std::move(mean));
    stb.provenance.push_back(std::move(origin));
  }
  stb.validate();
  return stb;
}

struct AssociationResult {
  int best_cluster = -1;
  std::vector<double> relatedness;  // per STB, in input order
  std::vector<double> distances;    // 1 - relatedness
};

// Associates an unseen scene to the cluster whose shared basis explains its
// local topics best (inlier-ratio relatedness against each basis).
inline AssociationResult associate_new_scene(const TopicMatrix& topics,
                                             const SceneTransform& normalization,
                                             const std::vector<SharedTopicBasis>& bases,
                                             double tau) {
  if (bases.empty()) throw DomainError("associate_new_scene: no existing clusters");
  if (topics.num_topics() == 0) throw DomainError("associate_new_scene: scene has no topics");
  AssociationResult result;
  for (const auto& stb : bases) {
    TopicMatrix stb_topics;
    stb_topics.grid = stb.grid;
    stb_topics.topics = stb.topics;
    const SceneTransform new_to_ref = compose_a_to_b(normalization, stb.reference_normalization);
    const SceneTransform ref_to_new = compose_a_to_b(stb.reference_normalization, normalization);
    const Eigen::MatrixXd dist =
        pairwise_topic_distances(topics, stb_topics, new_to_ref, ref_to_new);
    result.relatedness.push_back(relatedness_from_distances(dist, tau));
    result.distances.push_back(1.0 - result.relatedness.back());
  }
  result.best_cluster = 0;
  for (std::size_t c = 1; c < result.relatedness.size(); ++c) {
    if (result.relatedness[c] > result.relatedness[static_cast<std::size_t>(result.best_cluster)]) {
      result.best_cluster = static_cast<int>(c);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Normalized cut (used by the graph-based summarization baselines).
// ---------------------------------------------------------------------------
namespace detail {

inline std::vector<std::vector<int>> connected_components(const Eigen::MatrixXd& sim,
                                                          const std::vector<int>& nodes) {
  std::vector<std::vector<int>> components;
  std::set<int> remaining(nodes.begin(), nodes.end());
  while (!remaining.empty()) {
    std::vector<int> stack{*remaining.begin()};
    remaining.erase(remaining.begin());
    std::vector<int> comp;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (auto it = remaining.begin(); it != remaining.end();) {
        if (sim(v, *it) > 0.0) {
          stack.push_back(*it);
          it = remaining.erase(it);
        } else {
          ++it;
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    components.push_back(std::move(comp));
  }
  return components;
}

inline double ncut_objective(const Eigen::MatrixXd& sim, const std::vector<int>& nodes,
                             const std::vector<bool>& in_a) {
  double cut = 0.0;
  double assoc_a = 0.0;
  double assoc_b = 0.0;
  for (std::size_t x = 0; x < nodes.size(); ++x) {
    for (std::size_t y = 0; y < nodes.size(); ++y) {
      if (x == y) continue;
      const double w = sim(nodes[x], nodes[y]);
      if (in_a[x]) {
        assoc_a += w;
      } else {
        assoc_b += w;
      }
      if (in_a[x] && !in_a[y]) cut += w;
    }
  }
  if (assoc_a <= 0.0 || assoc_b <= 0.0) return std::numeric_limits<double>::infinity();
  return cut / assoc_a + cut / assoc_b;
}

}  // namespace detail

// Two-way split of a similarity graph by thresholding the normalized-Laplacian
// second eigenvector, taking the best-Ncut threshold among the n-1 sorted
// splits. Disconnected graphs split along components first.
inline std::pair<std::vector<int>, std::vector<int>> fiedler_bipartition_subset(
    const Eigen::MatrixXd& similarity, const std::vector<int>& nodes) {
  if (nodes.size() < 2) throw DomainError("fiedler_bipartition: need at least 2 vertices");

  const auto components = detail::connected_components(similarity, nodes);
  if (components.size() > 1) {
    // Components are natural pre-splits: largest component vs the rest.
    std::size_t largest = 0;
    for (std::size_t i = 1; i < components.size(); ++i) {
      if (components[i].size() > components[largest].size()) largest = i;
    }
    std::vector<int> rest;
    for (std::size_t i = 0; i < components.size(); ++i) {
      if (i == largest) continue;
      rest.insert(rest.end(), components[i].begin(), components[i].end());
    }
    std::sort(rest.begin(), rest.end());
    return {components[largest], rest};
  }

  const int m = static_cast<int>(nodes.size());
  Eigen::MatrixXd w(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) w(i, j) = i == j ? 0.0 : similarity(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXd degree = w.rowwise().sum();
  Eigen::VectorXd inv_sqrt(m);
  for (int i = 0; i < m; ++i) inv_sqrt(i) = 1.0 / std::sqrt(std::max(degree(i), 1e-12));
  const Eigen::MatrixXd lap_sym =
      Eigen::MatrixXd::Identity(m, m) - (inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal()).eval();
  const EigenDecomposition eig = symmetric_eigendecomposition(lap_sym);
  // Second-smallest eigenvalue; decomposition is descending.
  Eigen::VectorXd fiedler = eig.vectors.col(m - 2);
  for (int i = 0; i < m; ++i) fiedler(i) *= inv_sqrt(i);

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return fiedler(a) != fiedler(b) ? fiedler(a) < fiedler(b)
                                    : nodes[static_cast<std::size_t>(a)] < nodes[static_cast<std::size_t>(b)];
  });

  double best = std::numeric_limits<double>::infinity();
  int best_split = 1;
  for (int split = 1; split < m; ++split) {
    std::vector<bool> in_a(static_cast<std::size_t>(m), false);
    for (int i = 0; i < split; ++i) in_a[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    const double obj = detail::ncut_objective(w, [&] {
      std::vector<int> local(static_cast<std::size_t>(m));
      std::iota(local.begin(), local.end(), 0);
      return local;
    }(), in_a);
    if (obj < best) {
      best = obj;
      best_split = split;
    }
  }

  std::vector<int> a;
  std::vector<int> b;
  for (int i = 0; i < m; ++i) {
    const int node = nodes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    (i < best_split ? a : b).push_back(node);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {a, b};
}

inline std::pair<std::vector<int>, std::vector<int>> fiedler_bipartition(
    const Eigen::MatrixXd& similarity) {
  if (similarity.rows() != similarity.cols()) throw DomainError("fiedler_bipartition: matrix not square");
  std::vector<int> nodes(static_cast<std::size_t>(similarity.rows()));
  std::iota(nodes.begin(), nodes.end(), 0);
  return fiedler_bipartition_subset(similarity, nodes);
}

// Recursive normalized cut: repeatedly bipartitions the largest remaining
// cluster until `num_clusters` is reached.
inline std::vector<std::vector<int>> recursive_ncut(const Eigen::MatrixXd& similarity,
                                                    int num_clusters) {
  if (similarity.rows() != similarity.cols()) throw DomainError("recursive_ncut: matrix not square");
  const int n = static_cast<int>(similarity.rows());
  if (num_clusters < 1 || num_clusters > n) throw DomainError("recursive_ncut: cluster count out of range");

  std::vector<std::vector<int>> clusters;
  {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    clusters.push_back(std::move(all));
  }
  while (static_cast<int>(clusters.size()) < num_clusters) {
    std::size_t target = 0;
    for (std::size_t i = 1; i < clusters.size(); ++i) {
      if (clusters[i].size() > clusters[target].size()) target = i;
    }
    if (clusters[target].size() < 2) break;  // only singletons remain
    auto [a, b] = fiedler_bipartition_subset(similarity, clusters[target]);
    clusters[target] = std::move(a);
    clusters.push_back(std::move(b));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return clusters;
}

}  // namespace scenemesh
