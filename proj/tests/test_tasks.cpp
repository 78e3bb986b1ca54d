#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "scenemesh/rng.hpp"
#include "scenemesh/tasks.hpp"

using namespace scenemesh;

namespace {

PooledClip clip(const std::string& id, const std::string& scene, std::vector<double> gamma) {
  return PooledClip{id, scene, std::move(gamma)};
}

std::vector<PooledClip> scalar_pool(const std::vector<double>& values) {
  std::vector<PooledClip> pool;
  for (std::size_t i = 0; i < values.size(); ++i) {
    pool.push_back(clip("c" + std::to_string(i), "s", {values[i]}));
  }
  return pool;
}

// Exhaustive k-center optimum for small pools.
double brute_force_kcenter(const std::vector<PooledClip>& pool, int n_sum) {
  const int n = static_cast<int>(pool.size());
  std::vector<int> subset(static_cast<std::size_t>(n_sum));
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int)> recurse = [&](int start, int depth) {
    if (depth == n_sum) {
      best = std::min(best, maxmin_objective(pool, subset));
      return;
    }
    for (int i = start; i < n; ++i) {
      subset[static_cast<std::size_t>(depth)] = i;
      recurse(i + 1, depth + 1);
    }
  };
  recurse(0, 0);
  return best;
}

}  // namespace

TEST(QueryByExample, IdenticalClipRanksFirstAtZero) {
  const PooledClip query = clip("q", "s0", {1.0, 2.0});
  std::vector<PooledClip> pool{clip("a", "s1", {3.0, 0.0}), clip("b", "s1", {1.0, 2.0}),
                               clip("c", "s2", {0.0, 0.0})};
  const RankedRetrieval result = query_by_example(query, pool, 10);
  ASSERT_EQ(result.entries.size(), 3u);
  EXPECT_EQ(result.entries[0].clip_id, "b");
  EXPECT_DOUBLE_EQ(result.entries[0].distance, 0.0);
}

TEST(QueryByExample, QueryExcludedAndTruncated) {
  const PooledClip query = clip("q", "s0", {0.0});
  std::vector<PooledClip> pool{query, clip("a", "s1", {1.0}), clip("b", "s1", {2.0}),
                               clip("c", "s2", {3.0})};
  const RankedRetrieval top2 = query_by_example(query, pool, 2);
  ASSERT_EQ(top2.entries.size(), 2u);
  EXPECT_EQ(top2.entries[0].clip_id, "a");
  const RankedRetrieval all = query_by_example(query, pool, 100);
  EXPECT_EQ(all.entries.size(), 3u);  // top beyond pool size gives full ranking
}

TEST(QueryByExample, MatchesBruteForceDistanceTable) {
  Rng rng(3);
  std::vector<PooledClip> pool;
  for (int i = 0; i < 5; ++i) {
    pool.push_back(clip("p" + std::to_string(i), "s" + std::to_string(i % 2),
                        {rng.uniform01(), rng.uniform01(), rng.uniform01()}));
  }
  const PooledClip query = clip("q", "sq", {0.4, 0.2, 0.9});
  const RankedRetrieval result = query_by_example(query, pool, 5);

  std::vector<std::pair<double, std::string>> table;
  for (const auto& p : pool) table.emplace_back(l2_distance(query.gamma, p.gamma), p.clip_id);
  std::sort(table.begin(), table.end());
  ASSERT_EQ(result.entries.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(result.entries[i].clip_id, table[i].second);
    EXPECT_DOUBLE_EQ(result.entries[i].distance, table[i].first);
  }
}

TEST(QueryByExample, DimensionMismatchThrows) {
  const PooledClip query = clip("q", "s", {1.0});
  std::vector<PooledClip> pool{clip("a", "s", {1.0, 2.0})};
  EXPECT_THROW(query_by_example(query, pool, 1), DomainError);
}

TEST(QueryByExample, PoolPermutationKeepsOrder) {
  Rng rng(9);
  std::vector<PooledClip> pool;
  for (int i = 0; i < 8; ++i) {
    pool.push_back(clip("p" + std::to_string(i), "s", {rng.uniform01()}));
  }
  const PooledClip query = clip("q", "sq", {0.5});
  const RankedRetrieval base = query_by_example(query, pool, 8);
  auto shuffled = pool;
  rng.shuffle(shuffled);
  const RankedRetrieval permuted = query_by_example(query, shuffled, 8);
  for (std::size_t i = 0; i < base.entries.size(); ++i) {
    EXPECT_EQ(base.entries[i].clip_id, permuted.entries[i].clip_id);
  }
}

TEST(KnnClassify, IdenticalClipWinsAtKOne) {
  std::vector<LabeledClip> labeled{{clip("a", "s1", {0.0, 0.0}), "left"},
                                   {clip("b", "s1", {5.0, 5.0}), "right"},
                                   {clip("c", "s2", {0.1, 0.0}), "left"}};
  const KnnResult result = knn_classify_cross_scene({clip("t", "s3", {5.0, 5.0})}, labeled, {1});
  ASSERT_EQ(result.predictions.size(), 1u);
  EXPECT_EQ(result.predictions[0].category, "right");
  EXPECT_EQ(result.chosen_k, 1);
}

TEST(KnnClassify, SingleCategoryAlwaysPredicted) {
  std::vector<LabeledClip> labeled{{clip("a", "s1", {0.0}), "only"},
                                   {clip("b", "s2", {1.0}), "only"},
                                   {clip("c", "s2", {2.0}), "only"}};
  const KnnResult result =
      knn_classify_cross_scene({clip("t1", "s3", {0.7}), clip("t2", "s3", {9.0})}, labeled, {1, 3});
  for (const auto& p : result.predictions) EXPECT_EQ(p.category, "only");
}

TEST(KnnClassify, MatchesExhaustiveNeighborEnumeration) {
  // 8 labeled clips, 2 categories, hand-set 1-D profiles; check every K.
  const std::vector<double> values{0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0};
  std::vector<LabeledClip> labeled;
  for (std::size_t i = 0; i < values.size(); ++i) {
    labeled.push_back(
        {clip("l" + std::to_string(i), i % 2 == 0 ? "sa" : "sb", {values[i]}), i < 4 ? "low" : "high"});
  }
  const std::vector<double> tests{1.4, 9.2, 6.4, 12.5};
  for (int k : {1, 3, 5, 7}) {
    std::vector<PooledClip> test_clips;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      test_clips.push_back(clip("t" + std::to_string(i), "st", {tests[i]}));
    }
    const KnnResult result = knn_classify_cross_scene(test_clips, labeled, {k});
    for (std::size_t i = 0; i < tests.size(); ++i) {
      // Oracle: sort by |value - test|, take k nearest, majority vote.
      std::vector<std::pair<double, std::string>> order;
      for (std::size_t j = 0; j < values.size(); ++j) {
        order.emplace_back(std::abs(values[j] - tests[i]), j < 4 ? "low" : "high");
      }
      std::sort(order.begin(), order.end());
      int low = 0;
      int high = 0;
      for (int j = 0; j < k; ++j) (order[static_cast<std::size_t>(j)].second == "low" ? low : high)++;
      std::string expected;
      if (low != high) {
        expected = low > high ? "low" : "high";
      } else {
        expected = order[0].second;
      }
      EXPECT_EQ(result.predictions[i].category, expected) << "k=" << k << " test " << tests[i];
    }
  }
}

TEST(KnnClassify, EmptyLabelsThrow) {
  EXPECT_THROW(knn_classify_cross_scene({clip("t", "s", {0.0})}, {}, {1}), DomainError);
}

TEST(Kcenter, FullPoolGivesZeroObjective) {
  const auto pool = scalar_pool({0.0, 1.0, 2.0, 10.0});
  const SummarySet summary = kcenter_from(pool, 4, 0);
  EXPECT_DOUBLE_EQ(summary.objective, 0.0);
  EXPECT_EQ(summary.selected.size(), 4u);
}

TEST(Kcenter, WorkedScalarInstance) {
  // Profiles {0,1,2,10}, N_sum = 2, seeded at clip 0: greedy picks {0,10}
  // with cost 2; the exhaustive optimum is {1,10} with cost 1; the
  // 2-approximation bound holds with equality.
  const auto pool = scalar_pool({0.0, 1.0, 2.0, 10.0});
  const SummarySet greedy = kcenter_from(pool, 2, 0);
  EXPECT_EQ(greedy.selected[0], "c0");
  EXPECT_EQ(greedy.selected[1], "c3");
  EXPECT_DOUBLE_EQ(greedy.objective, 2.0);
  const double optimum = brute_force_kcenter(pool, 2);
  EXPECT_DOUBLE_EQ(optimum, 1.0);
  EXPECT_LE(greedy.objective, 2.0 * optimum);
}

TEST(Kcenter, DuplicatedPoolKeepsObjective) {
  const auto pool = scalar_pool({0.0, 1.0, 2.0, 10.0});
  auto doubled = pool;
  for (const auto& p : pool) doubled.push_back(clip(p.clip_id + "#2", p.scene_id, p.gamma));
  const SummarySet a = kcenter_from(pool, 2, 0);
  const SummarySet b = kcenter_from(doubled, 2, 0);
  EXPECT_DOUBLE_EQ(a.objective, b.objective);
}

TEST(Kcenter, TwoApproximationExhaustive) {
  // Property check over random pools <= 12 clips, N_sum <= 3, any first
  // center: the greedy cost never exceeds twice the exhaustive optimum.
  Rng rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 4 + rng.uniform_int(9);  // 4..12
    std::vector<PooledClip> pool;
    for (int i = 0; i < n; ++i) {
      pool.push_back(clip("p" + std::to_string(i), "s", {rng.uniform(0, 10), rng.uniform(0, 10)}));
    }
    for (int n_sum = 1; n_sum <= 3; ++n_sum) {
      const double optimum = brute_force_kcenter(pool, n_sum);
      for (int first = 0; first < n; ++first) {
        const SummarySet greedy = kcenter_from(pool, n_sum, first);
        EXPECT_LE(greedy.objective, 2.0 * optimum + 1e-12)
            << "n=" << n << " n_sum=" << n_sum << " first=" << first;
      }
    }
  }
}

TEST(Kcenter, SeededSelectionReproducible) {
  const auto pool = scalar_pool({0.0, 3.0, 5.0, 9.0, 12.0});
  const SummarySet a = summarize_kcenter(pool, 3, 42);
  const SummarySet b = summarize_kcenter(pool, 3, 42);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_THROW(summarize_kcenter({}, 1, 0), DomainError);
  EXPECT_THROW(summarize_kcenter(pool, 0, 0), DomainError);
  EXPECT_THROW(summarize_kcenter(pool, 6, 0), DomainError);
}

TEST(Kcenter, SelectionNestedSoCoverageMonotoneInBudget) {
  // With a fixed first center the greedy selection is prefix-nested, so any
  // coverage-style statistic over the selected set is non-decreasing in the
  // summary length.
  Rng rng(5);
  std::vector<PooledClip> pool;
  for (int i = 0; i < 15; ++i) {
    pool.push_back(clip("p" + std::to_string(i), "s", {rng.uniform(0, 10), rng.uniform(0, 10)}));
  }
  std::vector<std::string> previous;
  for (int n_sum = 1; n_sum <= 10; ++n_sum) {
    const SummarySet summary = kcenter_from(pool, n_sum, 3);
    ASSERT_EQ(summary.selected.size(), static_cast<std::size_t>(n_sum));
    for (std::size_t i = 0; i < previous.size(); ++i) {
      EXPECT_EQ(summary.selected[i], previous[i]) << "prefix changed at budget " << n_sum;
    }
    previous = summary.selected;
  }
}

TEST(SummarizeNcut, SingleSummaryIsGlobalMedoid) {
  const auto pool = scalar_pool({0.0, 1.0, 2.0, 3.0, 4.0});
  const SummarySet summary = summarize_ncut(pool, 1);
  ASSERT_EQ(summary.selected.size(), 1u);
  EXPECT_EQ(summary.selected[0], "c2");  // middle value minimizes total distance
}

TEST(SummarizeNcut, TwoBlobsPickOneMedoidEach) {
  // Oracle: enumerate all bipartitions of the 8 clips and minimize the Ncut
  // objective; the two blobs are the optimal split, and the summary must
  // contain one medoid per blob.
  std::vector<PooledClip> pool;
  const std::vector<double> low{0.0, 0.4, 0.8, 1.2};
  const std::vector<double> high{20.0, 20.3, 20.9, 21.4};
  for (std::size_t i = 0; i < low.size(); ++i) pool.push_back(clip("lo" + std::to_string(i), "s", {low[i]}));
  for (std::size_t i = 0; i < high.size(); ++i) pool.push_back(clip("hi" + std::to_string(i), "s", {high[i]}));

  // Brute-force best bipartition under the same similarity construction.
  const int n = static_cast<int>(pool.size());
  Eigen::MatrixXd dist(n, n);
  std::vector<double> upper;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      dist(i, j) = l2_distance(pool[static_cast<std::size_t>(i)].gamma, pool[static_cast<std::size_t>(j)].gamma);
      if (j > i) upper.push_back(dist(i, j));
    }
  }
  const double sigma = percentile(upper, 0.5);
  Eigen::MatrixXd sim(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      sim(i, j) = i == j ? 0.0 : std::exp(-dist(i, j) * dist(i, j) / (sigma * sigma));
    }
  }
  double best_obj = std::numeric_limits<double>::infinity();
  int best_mask = 0;
  for (int mask = 1; mask < (1 << n) - 1; ++mask) {
    double cut = 0.0;
    double assoc_a = 0.0;
    double assoc_b = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const bool ia = (mask >> i) & 1;
        const bool ja = (mask >> j) & 1;
        if (ia) {
          assoc_a += sim(i, j);
        } else {
          assoc_b += sim(i, j);
        }
        if (ia && !ja) cut += sim(i, j);
      }
    }
    if (assoc_a <= 0 || assoc_b <= 0) continue;
    const double obj = cut / assoc_a + cut / assoc_b;
    if (obj < best_obj) {
      best_obj = obj;
      best_mask = mask;
    }
  }
  EXPECT_TRUE(best_mask == 0b00001111 || best_mask == 0b11110000);

  const SummarySet summary = summarize_ncut(pool, 2);
  ASSERT_EQ(summary.selected.size(), 2u);
  const bool one_low = summary.selected[0].rfind("lo", 0) == 0 || summary.selected[1].rfind("lo", 0) == 0;
  const bool one_high = summary.selected[0].rfind("hi", 0) == 0 || summary.selected[1].rfind("hi", 0) == 0;
  EXPECT_TRUE(one_low && one_high);
}

TEST(SummarizeRandom, SeededAndValid) {
  const auto pool = scalar_pool({0.0, 1.0, 2.0, 3.0, 4.0, 5.0});
  const SummarySet a = summarize_random(pool, 3, 7);
  const SummarySet b = summarize_random(pool, 3, 7);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.selected.size(), 3u);
  std::set<std::string> unique(a.selected.begin(), a.selected.end());
  EXPECT_EQ(unique.size(), 3u);
  const SummarySet c = summarize_random(pool, 3, 8);
  EXPECT_GE(c.objective, 0.0);
}

TEST(ProportionalSplit, SharesSumAndScaleWithPools) {
  const auto shares = proportional_split({100, 50, 50}, 8);
  EXPECT_EQ(shares.size(), 3u);
  EXPECT_EQ(shares[0] + shares[1] + shares[2], 8);
  EXPECT_EQ(shares[0], 4);
  EXPECT_EQ(shares[1], 2);
  EXPECT_EQ(shares[2], 2);
  const auto uneven = proportional_split({3, 3, 3}, 4);
  EXPECT_EQ(uneven[0] + uneven[1] + uneven[2], 4);
  EXPECT_THROW(proportional_split({2, 2}, 5), DomainError);
  EXPECT_THROW(proportional_split({}, 1), DomainError);
}
