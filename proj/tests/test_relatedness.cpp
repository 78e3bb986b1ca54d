#include <gtest/gtest.h>

#include <cmath>

#include "scenemesh/eval.hpp"
#include "scenemesh/relatedness.hpp"
#include "scenemesh/synthetic.hpp"

using namespace scenemesh;

namespace {

TopicMatrix single_topic(const GridSpec& grid, const std::vector<double>& weights) {
  TopicMatrix topics;
  topics.grid = grid;
  topics.topics = {weights};
  return topics;
}

}  // namespace

TEST(SymKl, IdenticalTopicsZero) {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  EXPECT_DOUBLE_EQ(topic_distance_symkl(p, p, p, p), 0.0);
}

TEST(SymKl, SymmetricUnderRoleSwap) {
  const std::vector<double> p{0.7, 0.1, 0.1, 0.1};
  const std::vector<double> q{0.05, 0.05, 0.7, 0.2};
  EXPECT_DOUBLE_EQ(topic_distance_symkl(p, q, q, p), topic_distance_symkl(q, p, p, q));
}

TEST(SymKl, HandComputedTwoWordExample) {
  // N_v = 2, p = [0.5, 0.5], q = [0.25, 0.75], identity transforms.
  // KL(p||q) = (1/2)[0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)]
  // KL(q||p) = (1/2)[0.25 ln(0.25/0.5) + 0.75 ln(0.75/0.5)]
  // D = (1/2)(KL(p||q) + KL(q||p))
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{0.25, 0.75};
  const double kl_pq = 0.5 * (0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75));
  const double kl_qp = 0.5 * (0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5));
  const double expected = 0.5 * (kl_pq + kl_qp);
  EXPECT_NEAR(topic_distance_symkl(p, q, q, p), expected, 1e-15);
  EXPECT_NEAR(kl_divergence(p, q), kl_pq, 1e-15);
}

TEST(SymKl, ZeroEntriesAreFloored) {
  const std::vector<double> p{1.0, 0.0, 0.0, 0.0};
  const std::vector<double> q{0.0, 0.0, 0.0, 1.0};
  const double d = topic_distance_symkl(p, q, q, p);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GT(d, 0.0);
}

TEST(CountInliers, HandBuiltTable) {
  Eigen::MatrixXd dist(2, 2);
  dist << 0.01, 0.5, 0.6, 0.02;
  // tau = 0.1: row mins 0.01, 0.02 both below; col mins 0.01, 0.02 both below.
  EXPECT_EQ(count_inliers(dist, 0.1), 4);
  // Oracle: brute force over the 4-entry table at tau = 0.015.
  int expected = 0;
  for (int r = 0; r < 2; ++r) {
    double m = std::min(dist(r, 0), dist(r, 1));
    if (m < 0.015) ++expected;
  }
  for (int c = 0; c < 2; ++c) {
    double m = std::min(dist(0, c), dist(1, c));
    if (m < 0.015) ++expected;
  }
  EXPECT_EQ(count_inliers(dist, 0.015), expected);
  EXPECT_EQ(expected, 2);
}

TEST(CountInliers, TinyTauGivesZero) {
  Eigen::MatrixXd dist(2, 3);
  dist.setConstant(0.4);
  EXPECT_EQ(count_inliers(dist, 1e-12), 0);
}

TEST(CountInliers, InvalidInputsThrow) {
  Eigen::MatrixXd dist(1, 1);
  dist << 0.1;
  EXPECT_THROW(count_inliers(dist, 0.0), DomainError);
  EXPECT_THROW(count_inliers(Eigen::MatrixXd(), 0.1), DomainError);
}

TEST(SceneRelatedness, IdenticalSingleTopicScenes) {
  const GridSpec grid{4, 4, 2, 5};
  std::vector<double> w(static_cast<std::size_t>(grid.vocab_size()), 0.0);
  w[3] = 0.5;
  w[17] = 0.5;
  TopicMatrix topics = single_topic(grid, w);
  SceneView a{"a", &topics, SceneTransform{}};
  SceneView b{"b", &topics, SceneTransform{}};
  EXPECT_DOUBLE_EQ(scene_relatedness(a, b, 0.05), 1.0);  // 2 inliers / (1+1)
}

TEST(SceneRelatedness, SelfRelatednessIsOne) {
  const GridSpec grid{4, 4, 2, 5};
  TopicMatrix topics;
  topics.grid = grid;
  Rng rng(5);
  for (int k = 0; k < 4; ++k) {
    std::vector<double> w(static_cast<std::size_t>(grid.vocab_size()));
    double total = 0.0;
    for (auto& v : w) {
      v = rng.uniform01() + 1e-6;
      total += v;
    }
    for (auto& v : w) v /= total;
    topics.topics.push_back(std::move(w));
  }
  SceneView view{"a", &topics, SceneTransform{}};
  EXPECT_DOUBLE_EQ(scene_relatedness(view, view, 1e-6), 1.0);
}

TEST(SceneRelatedness, DisjointSupportScenesScoreZero) {
  // Oracle: with disjoint single-word supports every pairwise distance
  // exceeds any tight threshold, so no inliers exist in either direction.
  const GridSpec grid{4, 4, 2, 5};
  TopicMatrix ta;
  ta.grid = grid;
  TopicMatrix tb;
  tb.grid = grid;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> wa(static_cast<std::size_t>(grid.vocab_size()), 0.0);
    std::vector<double> wb(static_cast<std::size_t>(grid.vocab_size()), 0.0);
    wa[static_cast<std::size_t>(k)] = 1.0;
    wb[static_cast<std::size_t>(grid.vocab_size() - 1 - k)] = 1.0;
    ta.topics.push_back(std::move(wa));
    tb.topics.push_back(std::move(wb));
  }
  const Eigen::MatrixXd dist =
      pairwise_topic_distances(ta, tb, SceneTransform{}, SceneTransform{});
  const double tight_tau = 1e-3;
  EXPECT_GT(dist.minCoeff(), tight_tau);
  SceneView a{"a", &ta, SceneTransform{}};
  SceneView b{"b", &tb, SceneTransform{}};
  EXPECT_DOUBLE_EQ(scene_relatedness(a, b, tight_tau), 0.0);
}

TEST(SceneRelatedness, MonotoneInTau) {
  const auto spec = presets::two_cluster_tasks(51);
  const SyntheticWorld world = generate_synthetic_world(spec);
  LdaConfig cfg;
  cfg.seed = 8;
  const LdaFit fa = fit_lda(world.scenes[0].training_clips, world.scenes[0].grid, 6, cfg);
  const LdaFit fb = fit_lda(world.scenes[3].training_clips, world.scenes[3].grid, 6, cfg);
  SceneView a{"a", &fa.topics, estimate_normalization(world.scenes[0])};
  SceneView b{"b", &fb.topics, estimate_normalization(world.scenes[3])};
  double prev = 0.0;
  for (double tau : {1e-6, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
    const double rel = scene_relatedness(a, b, tau);
    EXPECT_GE(rel, prev);
    EXPECT_GE(rel, 0.0);
    EXPECT_LE(rel, 1.0);
    prev = rel;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);  // huge tau admits everything
}

TEST(SceneRelatedness, HalfSharedTopicsGiveAboutHalf) {
  // Two scenes, four topics each, two planted in common (identity frames).
  const GridSpec grid{6, 6, 2, 5};
  Rng rng(77);
  auto random_topic = [&]() {
    std::vector<double> w(static_cast<std::size_t>(grid.vocab_size()), 1e-4);
    for (int i = 0; i < 4; ++i) {
      w[static_cast<std::size_t>(rng.uniform_int(grid.vocab_size()))] += rng.uniform(0.5, 1.0);
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (auto& v : w) v /= total;
    return w;
  };
  const auto shared1 = random_topic();
  const auto shared2 = random_topic();
  TopicMatrix ta;
  ta.grid = grid;
  ta.topics = {shared1, shared2, random_topic(), random_topic()};
  TopicMatrix tb;
  tb.grid = grid;
  tb.topics = {random_topic(), shared1, random_topic(), shared2};
  SceneView a{"a", &ta, SceneTransform{}};
  SceneView b{"b", &tb, SceneTransform{}};
  // 2 exact matches each way -> 4 inliers / 8 topics = 0.5.
  EXPECT_NEAR(scene_relatedness(a, b, 1e-4), 0.5, 1e-12);
}

TEST(BuildAffinity, TwoIdenticalScenes) {
  const GridSpec grid{4, 4, 2, 5};
  std::vector<double> w(static_cast<std::size_t>(grid.vocab_size()), 0.0);
  w[5] = 1.0;
  TopicMatrix topics = single_topic(grid, w);
  std::vector<SceneView> views{{"a", &topics, SceneTransform{}}, {"b", &topics, SceneTransform{}}};
  const AffinityResult result = build_affinity(views, TauPolicy::fixed(0.01));
  EXPECT_DOUBLE_EQ(result.affinity.values(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(result.affinity.values(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(result.affinity.values(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(result.affinity.values(1, 1), 1.0);
}

TEST(BuildAffinity, SymmetricWithinTolerance) {
  const auto spec = presets::three_cluster(61);
  const SyntheticWorld world = generate_synthetic_world(spec);
  LdaConfig cfg;
  cfg.seed = 14;
  const auto trained = train_world(world.scenes, 6, cfg, 2);
  const AffinityResult result = build_affinity(scene_views(trained), TauPolicy::percentile());
  result.affinity.validate();  // symmetry within 1e-12, range, unit diagonal
  EXPECT_GT(result.tau, 0.0);
}

TEST(BuildAffinity, WithinClusterExceedsCrossCluster) {
  auto spec = presets::two_cluster_tasks(71);
  const SyntheticWorld world = generate_synthetic_world(spec);
  LdaConfig cfg;
  cfg.seed = 15;
  const auto trained = train_world(world.scenes, 6, cfg, 2);
  const AffinityResult result = build_affinity(scene_views(trained), TauPolicy::percentile());
  const auto& truth = world.truth.scene_clusters;
  double min_within = 1.0;
  double max_cross = 0.0;
  for (int i = 0; i < result.affinity.size(); ++i) {
    for (int j = i + 1; j < result.affinity.size(); ++j) {
      const bool same = truth.at(result.affinity.scene_ids[static_cast<std::size_t>(i)]) ==
                        truth.at(result.affinity.scene_ids[static_cast<std::size_t>(j)]);
      const double v = result.affinity.values(i, j);
      if (same) {
        min_within = std::min(min_within, v);
      } else {
        max_cross = std::max(max_cross, v);
      }
    }
  }
  EXPECT_GT(min_within, max_cross);
}

TEST(BuildAffinity, DegenerateSceneNamedInError) {
  const GridSpec grid{4, 4, 2, 5};
  std::vector<double> w(static_cast<std::size_t>(grid.vocab_size()), 0.0);
  w[5] = 1.0;
  TopicMatrix good = single_topic(grid, w);
  TopicMatrix empty;
  empty.grid = grid;
  std::vector<SceneView> views{{"good", &good, SceneTransform{}}, {"bad", &empty, SceneTransform{}}};
  try {
    build_affinity(views, TauPolicy::fixed(0.1));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_THROW(build_affinity({views[0]}, TauPolicy::fixed(0.1)), DomainError);
}
