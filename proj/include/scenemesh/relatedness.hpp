#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "scenemesh/alignment.hpp"
#include "scenemesh/common.hpp"
#include "scenemesh/topic_model.hpp"

namespace scenemesh {

inline constexpr double kKlFloor = 1e-10;

// KL divergence with the 1/N_v prefactor and an epsilon floor on both
// arguments; the per-word-average scaling keeps distances comparable across
// codebook sizes and the inlier threshold is defined on this same scale.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl_divergence: dimension mismatch");
  if (p.empty()) throw DomainError("kl_divergence: empty distributions");
  KahanSum sum;
  for (std::size_t v = 0; v < p.size(); ++v) {
    const double pv = std::max(p[v], kKlFloor);
    const double qv = std::max(q[v], kKlFloor);
    sum.add(pv * std::log(pv / qv));
  }
  const double result = sum.value() / static_cast<double>(p.size());
  if (!std::isfinite(result)) throw NumericError("kl_divergence: non-finite result");
  return result;
}

// Symmetrized topic distance: each topic is compared in the other scene's
// frame, so callers pass both the projected and the native distributions.
inline double topic_distance_symkl(std::span<const double> beta_a_in_b,
                                   std::span<const double> beta_b,
                                   std::span<const double> beta_b_in_a,
                                   std::span<const double> beta_a) {
  return 0.5 * (kl_divergence(beta_a_in_b, beta_b) + kl_divergence(beta_b_in_a, beta_a));
}

// Symmetric KL between two distributions already in a common frame.
inline double symkl_same_frame(std::span<const double> p, std::span<const double> q) {
  return 0.5 * (kl_divergence(p, q) + kl_divergence(q, p));
}

// All pairwise topic distances between two scenes given both alignment
// directions. Row k_a, column k_b.
inline Eigen::MatrixXd pairwise_topic_distances(const TopicMatrix& topics_a,
                                                const TopicMatrix& topics_b,
                                                const SceneTransform& a_to_b,
                                                const SceneTransform& b_to_a) {
  if (topics_a.num_topics() == 0 || topics_b.num_topics() == 0) {
    throw DomainError("pairwise_topic_distances: empty topic set");
  }
  std::vector<std::vector<double>> projected_a(topics_a.topics.size());
  for (std::size_t k = 0; k < topics_a.topics.size(); ++k) {
    projected_a[k] = a_to_b.is_identity() ? topics_a.topics[k]
                                          : transform_topic(topics_a.topics[k], topics_a.grid, a_to_b);
  }
  std::vector<std::vector<double>> projected_b(topics_b.topics.size());
  for (std::size_t k = 0; k < topics_b.topics.size(); ++k) {
    projected_b[k] = b_to_a.is_identity() ? topics_b.topics[k]
                                          : transform_topic(topics_b.topics[k], topics_b.grid, b_to_a);
  }
  Eigen::MatrixXd dist(topics_a.num_topics(), topics_b.num_topics());
  for (int ka = 0; ka < topics_a.num_topics(); ++ka) {
    for (int kb = 0; kb < topics_b.num_topics(); ++kb) {
      dist(ka, kb) = topic_distance_symkl(projected_a[static_cast<std::size_t>(ka)],
                                          topics_b.topics[static_cast<std::size_t>(kb)],
                                          projected_b[static_cast<std::size_t>(kb)],
                                          topics_a.topics[static_cast<std::size_t>(ka)]);
    }
  }
  return dist;
}

// Number of topics (from either side) whose best match in the other scene
// lies below tau.
inline int count_inliers(const Eigen::MatrixXd& distances, double tau) {
  if (distances.rows() == 0 || distances.cols() == 0) {
    throw DomainError("count_inliers: empty distance table");
  }
  if (!(tau > 0.0)) throw DomainError("count_inliers: tau must be positive");
  int inliers = 0;
  for (int ka = 0; ka < distances.rows(); ++ka) {
    if (distances.row(ka).minCoeff() < tau) ++inliers;
  }
  for (int kb = 0; kb < distances.cols(); ++kb) {
    if (distances.col(kb).minCoeff() < tau) ++inliers;
  }
  return inliers;
}

inline double relatedness_from_distances(const Eigen::MatrixXd& distances, double tau) {
  return static_cast<double>(count_inliers(distances, tau)) /
         static_cast<double>(distances.rows() + distances.cols());
}

// A trained scene as seen by the relatedness layer.
struct SceneView {
  std::string scene_id;
  const TopicMatrix* topics = nullptr;
  SceneTransform normalization;
};

inline double scene_relatedness(const SceneView& a, const SceneView& b, double tau) {
  const SceneTransform a2b = compose_a_to_b(a.normalization, b.normalization);
  const SceneTransform b2a = compose_a_to_b(b.normalization, a.normalization);
  return relatedness_from_distances(pairwise_topic_distances(*a.topics, *b.topics, a2b, b2a), tau);
}

// Inlier threshold policy. The adaptive default takes a percentile of all
// cross-scene minimum topic distances, recomputed per data set; 0.40 keeps
// the threshold above the interpolation-induced tail of genuinely
// corresponding topic pairs while staying below the bulk of non-matching
// distances (measured on the synthetic worlds).
struct TauPolicy {
  enum class Kind { Fixed, Percentile } kind = Kind::Percentile;
  double value = 0.40;

  static TauPolicy fixed(double tau) { return TauPolicy{Kind::Fixed, tau}; }
  static TauPolicy percentile(double p = 0.40) { return TauPolicy{Kind::Percentile, p}; }
};

struct AffinityMatrix {
  std::vector<std::string> scene_ids;
  Eigen::MatrixXd values;

  int size() const { return static_cast<int>(scene_ids.size()); }

  int index_of(const std::string& scene_id) const {
    for (std::size_t i = 0; i < scene_ids.size(); ++i) {
      if (scene_ids[i] == scene_id) return static_cast<int>(i);
    }
    throw DomainError("AffinityMatrix: unknown scene " + scene_id);
  }

  void validate() const {
    const int n = size();
    if (values.rows() != n || values.cols() != n) {
      throw DomainError("AffinityMatrix: shape does not match scene ids");
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double v = values(i, j);
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("AffinityMatrix: entry outside [0,1]");
        if (std::abs(v - values(j, i)) > 1e-12) throw DomainError("AffinityMatrix: not symmetric");
      }
      if (std::abs(values(i, i) - 1.0) > 1e-12) throw DomainError("AffinityMatrix: diagonal must be 1");
    }
  }
};

struct AffinityResult {
  AffinityMatrix affinity;
  double tau = 0.0;
};

// Pairwise scene relatedness over all scene pairs. With a percentile tau
// policy, tau is the given percentile of all cross-scene minimum topic
// distances, recomputed from this data set and logged.
inline AffinityResult build_affinity(const std::vector<SceneView>& scenes, const TauPolicy& policy) {
  const int n = static_cast<int>(scenes.size());
  if (n < 2) throw DomainError("build_affinity: need at least 2 scenes");

  std::vector<std::vector<Eigen::MatrixXd>> tables(static_cast<std::size_t>(n));
  std::vector<double> min_distances;
  for (int a = 0; a < n; ++a) {
    tables[static_cast<std::size_t>(a)].resize(static_cast<std::size_t>(n));
    for (int b = a + 1; b < n; ++b) {
      const auto& va = scenes[static_cast<std::size_t>(a)];
      const auto& vb = scenes[static_cast<std::size_t>(b)];
      if (va.topics == nullptr || vb.topics == nullptr || va.topics->num_topics() == 0 ||
          vb.topics->num_topics() == 0) {
        throw DomainError("build_affinity: scene without trained topics: " +
                          (va.topics == nullptr || va.topics->num_topics() == 0 ? va.scene_id
                                                                               : vb.scene_id));
      }
      const SceneTransform a2b = compose_a_to_b(va.normalization, vb.normalization);
      const SceneTransform b2a = compose_a_to_b(vb.normalization, va.normalization);
      Eigen::MatrixXd dist = pairwise_topic_distances(*va.topics, *vb.topics, a2b, b2a);
      for (int ka = 0; ka < dist.rows(); ++ka) min_distances.push_back(dist.row(ka).minCoeff());
      for (int kb = 0; kb < dist.cols(); ++kb) min_distances.push_back(dist.col(kb).minCoeff());
      tables[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = std::move(dist);
    }
  }

  double tau = policy.value;
  if (policy.kind == TauPolicy::Kind::Percentile) {
    tau = percentile(min_distances, policy.value);
    if (!(tau > 0.0)) tau = kKlFloor;
    log_message(LogLevel::Info, "build_affinity: adaptive tau = " + std::to_string(tau));
  }
  if (!(tau > 0.0)) throw DomainError("build_affinity: tau must be positive");

  AffinityResult result;
  result.tau = tau;
  result.affinity.scene_ids.reserve(scenes.size());
  for (const auto& s : scenes) result.affinity.scene_ids.push_back(s.scene_id);
  result.affinity.values = Eigen::MatrixXd::Identity(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double rel =
          relatedness_from_distances(tables[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], tau);
      result.affinity.values(a, b) = rel;
      result.affinity.values(b, a) = rel;
    }
  }
  result.affinity.validate();
  return result;
}

}  // namespace scenemesh
