#include <gtest/gtest.h>

#include <cmath>

#include "scenemesh/eval.hpp"
#include "scenemesh/synthetic.hpp"

using namespace scenemesh;

namespace {

RankedRetrieval ranking(const std::string& query, const std::vector<std::string>& order) {
  RankedRetrieval r;
  r.query_id = query;
  double d = 0.0;
  for (const auto& id : order) {
    r.entries.push_back(RetrievalEntry{id, "s", d});
    d += 1.0;
  }
  return r;
}

}  // namespace

TEST(MapAtT, PerfectRankingGivesApOne) {
  std::map<std::string, std::string> cat{{"q", "A"}, {"r1", "A"}, {"r2", "A"}, {"x", "B"}};
  const auto curve = map_at_T({ranking("q", {"r1", "r2", "x"})}, cat, {1, 2});
  ASSERT_EQ(curve.map_values.size(), 2u);
  EXPECT_DOUBLE_EQ(curve.map_values[0], 1.0);  // precision@1 = 1
  EXPECT_DOUBLE_EQ(curve.map_values[1], 1.0);  // precision@2 = 2/2
}

TEST(MapAtT, HandCountedPrecisionAtThree) {
  // 4-clip pool, relevant at ranks 1 and 3, T = 3 -> precision 2/3.
  std::map<std::string, std::string> cat{{"q", "A"}, {"a", "A"}, {"b", "B"},
                                         {"c", "A"}, {"d", "B"}};
  const auto curve = map_at_T({ranking("q", {"a", "b", "c", "d"})}, cat, {3});
  EXPECT_NEAR(curve.map_values[0], 2.0 / 3.0, 1e-12);
}

TEST(MapAtT, VacuousCategoryExcluded) {
  // Query category B has no relevant clips in the pool; it is skipped and the
  // mean covers only category A.
  std::map<std::string, std::string> cat{{"qa", "A"}, {"qb", "B"}, {"a", "A"}, {"x", "C"}};
  const auto curve = map_at_T({ranking("qa", {"a", "x"}), ranking("qb", {"a", "x"})}, cat, {1});
  EXPECT_DOUBLE_EQ(curve.map_values[0], 1.0);
  ASSERT_EQ(curve.skipped_categories.size(), 1u);
  EXPECT_EQ(curve.skipped_categories[0], "B");
}

TEST(MapAtT, UnlabeledClipThrows) {
  std::map<std::string, std::string> cat{{"q", "A"}};
  EXPECT_THROW(map_at_T({ranking("q", {"mystery"})}, cat, {1}), DomainError);
}

TEST(MapAtT, MeanOverCategories) {
  // Category A: one query with precision@1 = 1. Category B: one query with
  // precision@1 = 0 (relevant exists but ranks second). MAP = 0.5.
  std::map<std::string, std::string> cat{{"qa", "A"}, {"qb", "B"}, {"a", "A"},
                                         {"b", "B"},  {"z", "C"}};
  const auto curve = map_at_T({ranking("qa", {"a", "b"}), ranking("qb", {"z", "b"})}, cat, {1});
  EXPECT_DOUBLE_EQ(curve.map_values[0], 0.5);
}

TEST(ClassificationAccuracy, PerfectAndHalf) {
  const AccuracyReport perfect = classification_accuracy({{"A", "A"}, {"B", "B"}});
  EXPECT_DOUBLE_EQ(perfect.macro, 1.0);
  const AccuracyReport half =
      classification_accuracy({{"A", "A"}, {"B", "A"}, {"A", "A"}, {"C", "A"}});
  EXPECT_DOUBLE_EQ(half.macro, 0.5);
  EXPECT_DOUBLE_EQ(half.per_category.at("A"), 0.5);
}

TEST(ClassificationAccuracy, HandCountedThreeCategoryTable) {
  // 6 items, 3 categories: A 2/2, B 1/2, C 0/2 -> macro (1 + 0.5 + 0)/3.
  const AccuracyReport report = classification_accuracy({{"A", "A"},
                                                         {"A", "A"},
                                                         {"B", "B"},
                                                         {"C", "B"},
                                                         {"A", "C"},
                                                         {"B", "C"}});
  EXPECT_DOUBLE_EQ(report.per_category.at("A"), 1.0);
  EXPECT_DOUBLE_EQ(report.per_category.at("B"), 0.5);
  EXPECT_DOUBLE_EQ(report.per_category.at("C"), 0.0);
  EXPECT_NEAR(report.macro, 0.5, 1e-12);
}

TEST(ClassificationAccuracy, UnknownCategoryAgainstUniverseThrows) {
  const std::set<std::string> universe{"A", "B"};
  EXPECT_THROW(classification_accuracy({{"Z", "A"}}, &universe), DomainError);
  EXPECT_THROW(classification_accuracy({{"A", "Z"}}, &universe), DomainError);
  EXPECT_NO_THROW(classification_accuracy({{"A", "B"}}, &universe));
}

TEST(BehaviorCoverage, FullPoolAndSingleton) {
  std::map<std::string, std::string> cat{{"a", "A"}, {"b", "B"}, {"c", "A"}};
  SummarySet full;
  full.selected = {"a", "b", "c"};
  EXPECT_DOUBLE_EQ(behavior_coverage(full, cat, {"a", "b", "c"}), 1.0);
  SummarySet single;
  single.selected = {"a"};
  EXPECT_DOUBLE_EQ(behavior_coverage(single, cat, {"a", "b", "c"}), 0.5);
}

TEST(RandIndex, KnownValues) {
  const std::map<std::string, int> p1{{"a", 0}, {"b", 0}, {"c", 1}};
  const std::map<std::string, int> same{{"a", 5}, {"b", 5}, {"c", 9}};
  EXPECT_DOUBLE_EQ(rand_index(p1, same), 1.0);  // relabeling invariance
  const std::map<std::string, int> singletons{{"a", 0}, {"b", 1}, {"c", 2}};
  // Pairs: (a,b) disagree, (a,c) agree, (b,c) agree -> 2/3.
  EXPECT_NEAR(rand_index(p1, singletons), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(rand_index(singletons, p1), rand_index(p1, singletons));
}

TEST(RandIndex, ElementMismatchThrows) {
  const std::map<std::string, int> p1{{"a", 0}, {"b", 0}};
  const std::map<std::string, int> p2{{"a", 0}, {"z", 0}};
  EXPECT_THROW(rand_index(p1, p2), DomainError);
}

TEST(AlignmentStability, ZeroVarianceDataGivesZeroRmse) {
  // Every clip identical: all subsamples produce the same statistics.
  const GridSpec grid{5, 5, 2, 5};
  ClipDocument doc;
  doc.scene_id = "a";
  doc.add(word_index(0, 0, 0, grid), 1);
  doc.add(word_index(4, 3, 1, grid), 1);
  doc.add(word_index(2, 2, 0, grid), 2);
  doc.sort_counts();
  SceneCorpus sa;
  sa.scene_id = "a";
  sa.grid = grid;
  for (int i = 0; i < 10; ++i) {
    auto clip = doc;
    clip.clip_id = "a" + std::to_string(i);
    sa.training_clips.push_back(clip);
  }
  SceneCorpus sb = sa;
  sb.scene_id = "b";
  for (auto& clip : sb.training_clips) {
    clip.scene_id = "b";
    clip.clip_id = "b" + clip.clip_id;
  }
  const StabilityReport report = alignment_stability({sa, sb}, 0.5, 5, 3);
  ASSERT_EQ(report.pairs.size(), 1u);
  EXPECT_DOUBLE_EQ(report.pairs[0].rmse_s, 0.0);
  EXPECT_DOUBLE_EQ(report.pairs[0].rmse_dx, 0.0);
  EXPECT_DOUBLE_EQ(report.pairs[0].rmse_dy, 0.0);
}

TEST(AlignmentStability, CoversUpperTriangleOnce) {
  auto spec = presets::dense_alignment(3);
  spec.training_clips_per_scene = 40;
  spec.words_per_clip = 60;
  const SyntheticWorld world = generate_synthetic_world(spec);
  const StabilityReport report = alignment_stability(world.scenes, 0.5, 4, 1);
  EXPECT_EQ(report.pairs.size(), 3u);  // 3 scenes -> 3 unordered pairs
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& entry : report.pairs) {
    EXPECT_LT(entry.scene_a, entry.scene_b);
    EXPECT_TRUE(seen.insert({entry.scene_a, entry.scene_b}).second);
    EXPECT_TRUE(std::isfinite(entry.rmse_s));
    EXPECT_GE(entry.rmse_s, 0.0);
  }
}

TEST(AlignmentStability, DenseWorldMeetsThresholds) {
  const auto spec = presets::dense_alignment(17);
  const SyntheticWorld world = generate_synthetic_world(spec);
  const StabilityReport report = alignment_stability(world.scenes, 0.5, 20, 5);
  for (const auto& entry : report.pairs) {
    EXPECT_LT(entry.rmse_s, 0.01) << entry.scene_a << " -> " << entry.scene_b;
    EXPECT_LT(entry.rmse_dx, 0.1) << entry.scene_a << " -> " << entry.scene_b;
    EXPECT_LT(entry.rmse_dy, 0.1) << entry.scene_a << " -> " << entry.scene_b;
  }
}

TEST(AcrossClusters, BudgetSplitProportionallyAndSeeded) {
  ClusterModel a;
  a.cluster_id = 0;
  for (int i = 0; i < 20; ++i) {
    a.semantic_profiles.push_back(PooledClip{"a" + std::to_string(i), "s0", {double(i)}});
  }
  ClusterModel b;
  b.cluster_id = 1;
  for (int i = 0; i < 10; ++i) {
    b.semantic_profiles.push_back(PooledClip{"b" + std::to_string(i), "s1", {double(i)}});
  }
  const SummarySet s1 = summarize_across_clusters({a, b}, 6, 9);
  const SummarySet s2 = summarize_across_clusters({a, b}, 6, 9);
  EXPECT_EQ(s1.selected, s2.selected);
  ASSERT_EQ(s1.selected.size(), 6u);
  int from_a = 0;
  for (const auto& id : s1.selected) {
    if (id[0] == 'a') ++from_a;
  }
  EXPECT_EQ(from_a, 4);  // 20:10 pool split of 6
  EXPECT_GE(s1.objective, 0.0);
  EXPECT_THROW(summarize_across_clusters({}, 2, 1), DomainError);
}

TEST(StbSweep, RowsPerCoeffAndSceneClusterAdvantage) {
  const auto spec = presets::two_cluster_tasks(211);
  const SyntheticWorld world = generate_synthetic_world(spec);
  LdaConfig cfg;
  cfg.seed = 31;
  const auto trained = train_world(world.scenes, 6, cfg, 2);
  const AffinityResult affinity = build_affinity(scene_views(trained), TauPolicy::percentile());
  // Ground-truth partition: the sweep isolates the effect of the basis size.
  SceneClustering clustering;
  clustering.scene_ids = affinity.affinity.scene_ids;
  clustering.num_clusters = world.truth.num_clusters;
  for (const auto& id : clustering.scene_ids) {
    clustering.labels.push_back(world.truth.scene_clusters.at(id));
  }
  // Around the ideal merge ratio (~2.7 basis topics per scene for 5 shared
  // + 1 unique activities).
  const std::vector<int> coeffs{3, 4, 5};
  const auto rows = stb_sweep(world.scenes, trained, clustering, affinity.affinity, coeffs,
                              {1, 3, 5, 7}, cfg);
  ASSERT_EQ(rows.size(), coeffs.size());
  int scm_wins = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].coeff, coeffs[i]);
    EXPECT_GE(rows[i].scm_macro, 0.0);
    EXPECT_LE(rows[i].scm_macro, 1.0);
    if (rows[i].scm_macro >= rows[i].fm_macro) ++scm_wins;
  }
  // The scene-cluster model should win for the majority of coefficients.
  EXPECT_GE(scm_wins * 2, static_cast<int>(rows.size()) + 1);
}
