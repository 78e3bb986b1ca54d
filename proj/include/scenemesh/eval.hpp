#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scenemesh/clustering.hpp"
#include "scenemesh/common.hpp"
#include "scenemesh/corpus.hpp"
#include "scenemesh/relatedness.hpp"
#include "scenemesh/synthetic.hpp"
#include "scenemesh/tasks.hpp"
#include "scenemesh/topic_model.hpp"

namespace scenemesh {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MapCurve {
  std::vector<int> t_values;
  std::vector<double> map_values;
  std::map<std::string, std::vector<double>> per_category_ap;
  std::vector<std::string> skipped_categories;  // no relevant clips in any query pool
};

// Mean average precision at each T. Relevance means sharing the query's
// category; precision@T is averaged per category over that category's
// queries, then averaged (unweighted) over the categories present. Queries
// whose pool contains no relevant clip are vacuous and excluded (logged);
// categories with only vacuous queries are reported in skipped_categories.
inline MapCurve map_at_T(const std::vector<RankedRetrieval>& retrievals,
                         const std::map<std::string, std::string>& clip_category,
                         const std::vector<int>& t_values) {
  MapCurve curve;
  curve.t_values = t_values;
  for (int t : t_values) {
    if (t < 1) throw DomainError("map_at_T: T values must be >= 1");
  }

  auto category_of = [&](const std::string& clip_id) -> const std::string& {
    const auto it = clip_category.find(clip_id);
    if (it == clip_category.end()) throw DomainError("map_at_T: unlabeled clip " + clip_id);
    return it->second;
  };

  // category -> per T sums and query counts
  std::map<std::string, std::pair<std::vector<double>, int>> per_category;
  std::map<std::string, int> vacuous;
  for (const auto& retrieval : retrievals) {
    const std::string& query_cat = category_of(retrieval.query_id);
    int relevant_in_pool = 0;
    for (const auto& entry : retrieval.entries) {
      if (category_of(entry.clip_id) == query_cat) ++relevant_in_pool;
    }
    if (relevant_in_pool == 0) {
      ++vacuous[query_cat];
      continue;
    }
    auto& [sums, count] = per_category[query_cat];
    if (sums.empty()) sums.assign(t_values.size(), 0.0);
    ++count;
    for (std::size_t ti = 0; ti < t_values.size(); ++ti) {
      const int t = t_values[ti];
      int hits = 0;
      const int depth = std::min<int>(t, static_cast<int>(retrieval.entries.size()));
      for (int r = 0; r < depth; ++r) {
        if (category_of(retrieval.entries[static_cast<std::size_t>(r)].clip_id) == query_cat) ++hits;
      }
      sums[ti] += static_cast<double>(hits) / static_cast<double>(t);
    }
  }

  for (const auto& [cat, n] : vacuous) {
    if (per_category.find(cat) == per_category.end()) {
      curve.skipped_categories.push_back(cat);
      log_message(LogLevel::Info, "map_at_T: category " + cat + " has no relevant pool clips; excluded");
    }
  }

  curve.map_values.assign(t_values.size(), 0.0);
  for (std::size_t ti = 0; ti < t_values.size(); ++ti) {
    KahanSum mean;
    int n_categories = 0;
    for (const auto& [cat, data] : per_category) {
      const double ap = data.first[ti] / data.second;
      mean.add(ap);
      ++n_categories;
    }
    curve.map_values[ti] = n_categories > 0 ? mean.value() / n_categories : 0.0;
  }
  for (const auto& [cat, data] : per_category) {
    auto& row = curve.per_category_ap[cat];
    row.resize(t_values.size());
    for (std::size_t ti = 0; ti < t_values.size(); ++ti) row[ti] = data.first[ti] / data.second;
  }
  return curve;
}

struct AccuracyReport {
  std::map<std::string, double> per_category;  // recall per true category
  double macro = 0.0;
  int total = 0;
};

// Per-category recall plus the macro (unweighted) mean. When a known-category
// set is supplied, any prediction or truth outside it is a domain error.
inline AccuracyReport classification_accuracy(
    const std::vector<std::pair<std::string, std::string>>& predicted_truth,
    const std::set<std::string>* known_categories = nullptr) {
  AccuracyReport report;
  std::map<std::string, std::pair<int, int>> counts;  // truth category -> (hits, total)
  for (const auto& [predicted, truth] : predicted_truth) {
    if (known_categories != nullptr) {
      if (known_categories->count(predicted) == 0) {
        throw DomainError("classification_accuracy: unknown predicted category " + predicted);
      }
      if (known_categories->count(truth) == 0) {
        throw DomainError("classification_accuracy: unknown true category " + truth);
      }
    }
    auto& [hits, total] = counts[truth];
    ++total;
    if (predicted == truth) ++hits;
    ++report.total;
  }
  KahanSum macro;
  for (const auto& [cat, ht] : counts) {
    const double recall = static_cast<double>(ht.first) / ht.second;
    report.per_category[cat] = recall;
    macro.add(recall);
  }
  report.macro = counts.empty() ? 0.0 : macro.value() / static_cast<double>(counts.size());
  return report;
}

// Fraction of the pool's behavior categories present in the summary.
inline double behavior_coverage(const SummarySet& summary,
                                const std::map<std::string, std::string>& clip_category,
                                const std::vector<std::string>& pool_clip_ids) {
  std::set<std::string> pool_categories;
  for (const auto& id : pool_clip_ids) {
    const auto it = clip_category.find(id);
    if (it == clip_category.end()) throw DomainError("behavior_coverage: unlabeled pool clip " + id);
    pool_categories.insert(it->second);
  }
  if (pool_categories.empty()) return 0.0;
  std::set<std::string> summary_categories;
  for (const auto& id : summary.selected) {
    const auto it = clip_category.find(id);
    if (it == clip_category.end()) throw DomainError("behavior_coverage: unlabeled summary clip " + id);
    summary_categories.insert(it->second);
  }
  return static_cast<double>(summary_categories.size()) /
         static_cast<double>(pool_categories.size());
}

// Pairwise agreement between two partitions of the same element set.
inline double rand_index(const std::map<std::string, int>& p1, const std::map<std::string, int>& p2) {
  if (p1.size() != p2.size()) throw DomainError("rand_index: partitions over different element sets");
  std::vector<std::pair<int, int>> labels;
  labels.reserve(p1.size());
  for (const auto& [element, c1] : p1) {
    const auto it = p2.find(element);
    if (it == p2.end()) throw DomainError("rand_index: element " + element + " missing from p2");
    labels.emplace_back(c1, it->second);
  }
  const std::size_t n = labels.size();
  if (n < 2) return 1.0;
  long long agree = 0;
  long long pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same1 = labels[i].first == labels[j].first;
      const bool same2 = labels[i].second == labels[j].second;
      if (same1 == same2) ++agree;
      ++pairs;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Alignment stability (half-subsample RMSE of pairwise transform parameters)
// ---------------------------------------------------------------------------

struct StabilityEntry {
  std::string scene_a;
  std::string scene_b;
  double s_ref = 0.0;
  double dx_ref = 0.0;
  double dy_ref = 0.0;
  double rmse_s = 0.0;
  double rmse_dx = 0.0;
  double rmse_dy = 0.0;
};

struct StabilityReport {
  std::vector<StabilityEntry> pairs;  // upper triangle, scene order
  int runs = 0;
  double fraction = 0.0;
};

inline StabilityReport alignment_stability(const std::vector<SceneCorpus>& scenes,
                                           double fraction = 0.5, int runs = 20,
                                           std::uint64_t seed = 0) {
  if (scenes.size() < 2) throw DomainError("alignment_stability: need at least 2 scenes");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("alignment_stability: bad fraction");
  if (runs < 1) throw DomainError("alignment_stability: runs must be >= 1");

  const std::size_t n = scenes.size();
  std::vector<SceneTransform> reference(n);
  for (std::size_t i = 0; i < n; ++i) reference[i] = estimate_normalization(scenes[i]);

  auto subsample_transform = [&](const SceneCorpus& scene, int run) {
    const int total = static_cast<int>(scene.training_clips.size());
    const int take = std::max(1, static_cast<int>(std::floor(fraction * total)));
    for (int attempt = 0; attempt < 10; ++attempt) {
      Rng rng = Rng::substream(seed, "stability:" + scene.scene_id + ":run" + std::to_string(run) +
                                         ":try" + std::to_string(attempt));
      const auto picks = rng.sample_without_replacement(total, take);
      std::vector<ClipDocument> subset;
      subset.reserve(picks.size());
      for (int idx : picks) subset.push_back(scene.training_clips[static_cast<std::size_t>(idx)]);
      try {
        return estimate_normalization(std::span<const ClipDocument>(subset), scene.grid);
      } catch (const DomainError&) {
        log_message(LogLevel::Warn, "alignment_stability: degenerate subsample of " +
                                        scene.scene_id + ", resampling");
      }
    }
    throw DomainError("alignment_stability: scene " + scene.scene_id +
                      " keeps producing degenerate subsamples");
  };

  StabilityReport report;
  report.runs = runs;
  report.fraction = fraction;

  std::vector<std::vector<SceneTransform>> sampled(n, std::vector<SceneTransform>(static_cast<std::size_t>(runs)));
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < runs; ++r) sampled[i][static_cast<std::size_t>(r)] = subsample_transform(scenes[i], r);
  }

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const SceneTransform ref = compose_a_to_b(reference[a], reference[b]);
      StabilityEntry entry;
      entry.scene_a = scenes[a].scene_id;
      entry.scene_b = scenes[b].scene_id;
      entry.s_ref = ref.scale;
      entry.dx_ref = ref.tx;
      entry.dy_ref = ref.ty;
      KahanSum se_s;
      KahanSum se_dx;
      KahanSum se_dy;
      for (int r = 0; r < runs; ++r) {
        const SceneTransform t =
            compose_a_to_b(sampled[a][static_cast<std::size_t>(r)], sampled[b][static_cast<std::size_t>(r)]);
        se_s.add((t.scale - ref.scale) * (t.scale - ref.scale));
        se_dx.add((t.tx - ref.tx) * (t.tx - ref.tx));
        se_dy.add((t.ty - ref.ty) * (t.ty - ref.ty));
      }
      entry.rmse_s = std::sqrt(se_s.value() / runs);
      entry.rmse_dx = std::sqrt(se_dx.value() / runs);
      entry.rmse_dy = std::sqrt(se_dy.value() / runs);
      report.pairs.push_back(std::move(entry));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Experiment drivers (scene-cluster model vs flat model, association, sweep)
// ---------------------------------------------------------------------------

struct TrainedScene {
  std::string scene_id;
  GridSpec grid;
  LdaFit fit;
  SceneTransform normalization;
};

inline std::vector<TrainedScene> train_world(const std::vector<SceneCorpus>& scenes, int k_local,
                                             const LdaConfig& cfg, int jobs = 1) {
  std::vector<TrainedScene> trained(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    const auto& scene = scenes[i];
    LdaConfig scene_cfg = cfg;
    scene_cfg.seed = derive_seed(cfg.seed, "lda:" + scene.scene_id);
    TrainedScene t;
    t.scene_id = scene.scene_id;
    t.grid = scene.grid;
    t.fit = fit_lda(scene.training_clips, scene.grid, k_local, scene_cfg);
    t.normalization = estimate_normalization(scene);
    trained[i] = std::move(t);
  });
  return trained;
}

inline std::vector<SceneView> scene_views(const std::vector<TrainedScene>& trained) {
  std::vector<SceneView> views;
  views.reserve(trained.size());
  for (const auto& t : trained) {
    views.push_back(SceneView{t.scene_id, &t.fit.topics, t.normalization});
  }
  return views;
}

// One scene cluster's shared model: the basis plus the member scenes'
// semantic clips profiled on it.
struct ClusterModel {
  int cluster_id = 0;
  std::vector<std::string> members;
  SharedTopicBasis stb;
  DirichletPrior prior;
  std::vector<PooledClip> semantic_profiles;
};

namespace detail {

inline const TrainedScene& trained_by_id(const std::vector<TrainedScene>& trained,
                                         const std::string& scene_id) {
  for (const auto& t : trained) {
    if (t.scene_id == scene_id) return t;
  }
  throw DomainError("no trained model for scene " + scene_id);
}

inline const SceneCorpus& scene_by_id(const std::vector<SceneCorpus>& scenes,
                                      const std::string& scene_id) {
  for (const auto& s : scenes) {
    if (s.scene_id == scene_id) return s;
  }
  throw DomainError("no corpus for scene " + scene_id);
}

}  // namespace detail

// Profiles a scene's clips on a shared basis: the basis topics are projected
// back into the scene's frame, then the E-step runs with topics fixed.
inline std::vector<ClipTopicProfile> profile_clips_on_stb(const SharedTopicBasis& stb,
                                                          const std::vector<ClipDocument>& clips,
                                                          const SceneTransform& scene_normalization,
                                                          const LdaConfig& cfg) {
  const SceneTransform ref_to_scene =
      compose_a_to_b(stb.reference_normalization, scene_normalization);
  TopicMatrix in_scene;
  in_scene.grid = stb.grid;
  in_scene.topics.reserve(stb.topics.size());
  for (std::size_t k = 0; k < stb.topics.size(); ++k) {
    try {
      in_scene.topics.push_back(ref_to_scene.is_identity()
                                    ? stb.topics[k]
                                    : transform_topic(stb.topics[k], stb.grid, ref_to_scene));
    } catch (const DomainError& e) {
      throw DomainError("profile_clips_on_stb: shared topic " + std::to_string(k) +
                        " empty in scene frame: " + e.what());
    }
  }
  DirichletPrior prior;
  prior.alpha.assign(stb.topics.size(), 1.0);
  return infer_profiles_fixed_topics(clips, in_scene, prior, cfg);
}

inline ClusterModel make_cluster_model(int cluster_id, const std::vector<std::string>& members,
                                       const std::vector<SceneCorpus>& scenes,
                                       const std::vector<TrainedScene>& trained,
                                       const AffinityMatrix& affinity, int k_stb,
                                       const LdaConfig& cfg) {
  ClusterModel model;
  model.cluster_id = cluster_id;
  model.members = members;
  std::sort(model.members.begin(), model.members.end());

  std::vector<StbMember> stb_members;
  for (const auto& id : model.members) {
    const auto& t = detail::trained_by_id(trained, id);
    stb_members.push_back(StbMember{id, &t.fit.topics, t.normalization});
  }
  model.stb = build_stb(cluster_id, stb_members, affinity, k_stb);
  model.prior.alpha.assign(model.stb.topics.size(), 1.0);

  for (const auto& id : model.members) {
    const auto& scene = detail::scene_by_id(scenes, id);
    const auto& t = detail::trained_by_id(trained, id);
    const auto profiles = profile_clips_on_stb(model.stb, scene.semantic_clips, t.normalization, cfg);
    for (const auto& p : profiles) {
      model.semantic_profiles.push_back(PooledClip{p.clip_id, p.scene_id, p.gamma});
    }
  }
  return model;
}

// Scene-cluster models: one shared basis per cluster, K_stb = coeff * N_s.
inline std::vector<ClusterModel> build_cluster_models(const std::vector<SceneCorpus>& scenes,
                                                      const std::vector<TrainedScene>& trained,
                                                      const SceneClustering& clustering,
                                                      const AffinityMatrix& affinity, int coeff,
                                                      const LdaConfig& cfg) {
  std::vector<ClusterModel> models;
  for (int c = 0; c < clustering.num_clusters; ++c) {
    const auto members = clustering.members_of(c);
    models.push_back(make_cluster_model(c, members, scenes, trained, affinity,
                                        coeff * static_cast<int>(members.size()), cfg));
  }
  return models;
}

// Flat model: a single basis over every scene. Its topic budget matches the
// sum of the per-cluster budgets of the clustering it is compared against.
inline ClusterModel build_flat_model(const std::vector<SceneCorpus>& scenes,
                                     const std::vector<TrainedScene>& trained,
                                     const AffinityMatrix& affinity, int k_stb_total,
                                     const LdaConfig& cfg) {
  std::vector<std::string> members;
  for (const auto& t : trained) members.push_back(t.scene_id);
  return make_cluster_model(0, members, scenes, trained, affinity, k_stb_total, cfg);
}

inline std::map<std::string, std::string> semantic_categories(
    const std::vector<SceneCorpus>& scenes) {
  std::map<std::string, std::string> out;
  for (const auto& scene : scenes) {
    for (const auto& [clip_id, label] : scene.annotations) out[clip_id] = label.category_id;
  }
  return out;
}

struct QueryEvaluation {
  MapCurve curve;
  std::vector<RankedRetrieval> retrievals;
};

// Query-by-example protocol: every semantic clip queries its cluster's pool
// (all other scenes of the cluster when exclude_query_scene, otherwise all
// other clips).
inline QueryEvaluation evaluate_query_map(const std::vector<ClusterModel>& models,
                                          const std::map<std::string, std::string>& clip_category,
                                          const std::vector<int>& t_values,
                                          bool exclude_query_scene = true) {
  int max_t = 1;
  for (int t : t_values) max_t = std::max(max_t, t);
  QueryEvaluation eval;
  for (const auto& model : models) {
    for (const auto& query : model.semantic_profiles) {
      std::vector<PooledClip> pool;
      for (const auto& clip : model.semantic_profiles) {
        if (exclude_query_scene && clip.scene_id == query.scene_id) continue;
        pool.push_back(clip);
      }
      if (pool.empty()) continue;
      eval.retrievals.push_back(query_by_example(query, pool, max_t));
    }
  }
  eval.curve = map_at_T(eval.retrievals, clip_category, t_values);
  return eval;
}

struct PredictionRow {
  std::string scene_id;
  std::string clip_id;
  std::string predicted;
  std::string truth;
  int chosen_k = 0;
};

struct ClassificationEvaluation {
  std::map<std::string, AccuracyReport> per_scene;
  double mean_macro = 0.0;  // mean over held-out scenes of per-scene macro accuracy
  std::vector<PredictionRow> rows;
};

// Leave-one-scene-out label transfer: each member scene is held out in turn
// and classified with the labeled clips of its cluster's remaining scenes.
inline ClassificationEvaluation evaluate_loso_classification(
    const std::vector<ClusterModel>& models, const std::map<std::string, std::string>& clip_category,
    const std::vector<int>& k_grid) {
  ClassificationEvaluation eval;
  KahanSum macro_sum;
  int n_scenes = 0;
  for (const auto& model : models) {
    for (const auto& held_out : model.members) {
      std::vector<PooledClip> test;
      std::vector<LabeledClip> labeled;
      for (const auto& clip : model.semantic_profiles) {
        const auto it = clip_category.find(clip.clip_id);
        if (it == clip_category.end()) continue;
        if (clip.scene_id == held_out) {
          test.push_back(clip);
        } else {
          labeled.push_back(LabeledClip{clip, it->second});
        }
      }
      if (test.empty() || labeled.empty()) continue;
      const KnnResult knn = knn_classify_cross_scene(test, labeled, k_grid);
      std::vector<std::pair<std::string, std::string>> pairs;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& truth = clip_category.at(test[i].clip_id);
        pairs.emplace_back(knn.predictions[i].category, truth);
        eval.rows.push_back(PredictionRow{held_out, test[i].clip_id, knn.predictions[i].category,
                                          truth, knn.chosen_k});
      }
      AccuracyReport report = classification_accuracy(pairs);
      macro_sum.add(report.macro);
      ++n_scenes;
      eval.per_scene[held_out] = std::move(report);
    }
  }
  eval.mean_macro = n_scenes > 0 ? macro_sum.value() / n_scenes : 0.0;
  return eval;
}

struct CoverageCell {
  double mean = 0.0;
  double sd = 0.0;
};

struct CoverageTable {
  std::vector<int> lengths;
  // method -> cluster id -> one cell per length
  std::map<std::string, std::map<int, std::vector<CoverageCell>>> per_cluster;
  // method -> per length, coverage averaged over clusters
  std::map<std::string, std::vector<double>> overall;
};

// Within-cluster summarization comparison. Methods:
//   ms_kcenter  - one farthest-point summary over the cluster's pooled clips
//   ss_kcenter  - per-scene summaries on scene-local profiles, budget split
//                 proportionally, concatenated
//   random      - uniform draw from the pooled clips
//   ncut        - recursive normalized-cut medoids (optional; deterministic)
// Randomized methods are averaged over `runs` seeded repetitions.
inline CoverageTable evaluate_summarization_coverage(
    const std::vector<ClusterModel>& models, const std::vector<TrainedScene>& trained,
    const std::vector<SceneCorpus>& scenes, const std::map<std::string, std::string>& clip_category,
    const std::vector<int>& lengths, int runs, std::uint64_t seed, bool include_ncut,
    const LdaConfig& cfg) {
  if (runs < 1) throw DomainError("evaluate_summarization_coverage: runs must be >= 1");
  CoverageTable table;
  table.lengths = lengths;

  for (const auto& model : models) {
    // Scene-local profiles for the single-scene baseline.
    std::map<std::string, std::vector<PooledClip>> local_pools;
    for (const auto& member : model.members) {
      const auto& scene = detail::scene_by_id(scenes, member);
      const auto& t = detail::trained_by_id(trained, member);
      const auto profiles =
          infer_profiles_fixed_topics(scene.semantic_clips, t.fit.topics, t.fit.prior, cfg);
      auto& pool = local_pools[member];
      for (const auto& p : profiles) pool.push_back(PooledClip{p.clip_id, p.scene_id, p.gamma});
    }
    std::vector<std::string> ordered_members = model.members;
    std::vector<int> pool_sizes;
    for (const auto& m : ordered_members) {
      pool_sizes.push_back(static_cast<int>(local_pools[m].size()));
    }

    std::vector<std::string> pool_ids;
    for (const auto& clip : model.semantic_profiles) pool_ids.push_back(clip.clip_id);

    for (std::size_t li = 0; li < lengths.size(); ++li) {
      const int n_sum = lengths[li];
      if (n_sum > static_cast<int>(model.semantic_profiles.size())) {
        throw DomainError("evaluate_summarization_coverage: summary length exceeds pool");
      }
      auto record = [&](const std::string& method, const std::vector<double>& values) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        auto& rows = table.per_cluster[method][model.cluster_id];
        rows.resize(lengths.size());
        rows[li] = CoverageCell{mean, std::sqrt(var)};
      };

      std::vector<double> ms_cov;
      std::vector<double> ss_cov;
      std::vector<double> rand_cov;
      const auto shares = proportional_split(pool_sizes, n_sum);
      for (int r = 0; r < runs; ++r) {
        const std::uint64_t run_seed =
            derive_seed(seed, "cov:" + std::to_string(model.cluster_id) + ":" + std::to_string(r));
        ms_cov.push_back(behavior_coverage(summarize_kcenter(model.semantic_profiles, n_sum, run_seed),
                                           clip_category, pool_ids));
        SummarySet concatenated;
        for (std::size_t m = 0; m < ordered_members.size(); ++m) {
          if (shares[m] == 0) continue;
          const auto part = summarize_kcenter(
              local_pools[ordered_members[m]], shares[m],
              derive_seed(run_seed, "ss:" + ordered_members[m]));
          concatenated.selected.insert(concatenated.selected.end(), part.selected.begin(),
                                       part.selected.end());
        }
        ss_cov.push_back(behavior_coverage(concatenated, clip_category, pool_ids));
        rand_cov.push_back(behavior_coverage(summarize_random(model.semantic_profiles, n_sum, run_seed),
                                             clip_category, pool_ids));
      }
      record("ms_kcenter", ms_cov);
      record("ss_kcenter", ss_cov);
      record("random", rand_cov);
      if (include_ncut) {
        record("ms_ncut", {behavior_coverage(summarize_ncut(model.semantic_profiles, n_sum),
                                             clip_category, pool_ids)});
      }
    }
  }

  for (const auto& [method, clusters] : table.per_cluster) {
    auto& overall = table.overall[method];
    overall.assign(lengths.size(), 0.0);
    for (const auto& [cluster, cells] : clusters) {
      for (std::size_t li = 0; li < lengths.size(); ++li) overall[li] += cells[li].mean;
    }
    for (double& v : overall) v /= static_cast<double>(clusters.size());
  }
  return table;
}

// Across-cluster summarization: one summary spanning several scene clusters,
// composed of per-cluster farthest-point summaries with the total budget
// split proportionally to cluster pool sizes. Profiles of different clusters
// live on different bases, so the reported objective is the worst per-cluster
// covering radius.
inline SummarySet summarize_across_clusters(const std::vector<ClusterModel>& models, int n_sum,
                                            std::uint64_t seed) {
  if (models.empty()) throw DomainError("summarize_across_clusters: no cluster models");
  std::vector<int> pool_sizes;
  for (const auto& model : models) {
    pool_sizes.push_back(static_cast<int>(model.semantic_profiles.size()));
  }
  const auto shares = proportional_split(pool_sizes, n_sum);
  SummarySet combined;
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (shares[m] == 0) continue;
    const auto part =
        summarize_kcenter(models[m].semantic_profiles, shares[m],
                          derive_seed(seed, "ac:" + std::to_string(models[m].cluster_id)));
    combined.selected.insert(combined.selected.end(), part.selected.begin(), part.selected.end());
    combined.objective = std::max(combined.objective, part.objective);
  }
  return combined;
}

struct AssociationRow {
  std::string scene_id;
  int true_cluster = -1;
  int predicted_cluster = -1;
  std::vector<double> distances;  // per cluster, cluster-id order
};

struct AssociationOutcome {
  std::vector<AssociationRow> rows;
  bool all_correct = true;
};

// Hold out each scene in turn, rebuild every cluster's shared basis from the
// remaining members, and associate the held-out scene to the basis with the
// highest relatedness.
inline AssociationOutcome evaluate_new_scene_association(
    const std::vector<SceneCorpus>& scenes, const std::vector<TrainedScene>& trained,
    const SceneClustering& clustering, const AffinityMatrix& affinity, double tau, int coeff) {
  AssociationOutcome outcome;
  const auto partition = clustering.partition();
  for (const auto& held_out : clustering.scene_ids) {
    std::vector<SharedTopicBasis> bases;
    bool feasible = true;
    for (int c = 0; c < clustering.num_clusters; ++c) {
      std::vector<StbMember> members;
      for (const auto& id : clustering.members_of(c)) {
        if (id == held_out) continue;
        const auto& t = detail::trained_by_id(trained, id);
        members.push_back(StbMember{id, &t.fit.topics, t.normalization});
      }
      if (members.empty()) {
        feasible = false;
        break;
      }
      bases.push_back(build_stb(c, members, affinity, coeff * static_cast<int>(members.size())));
    }
    if (!feasible) {
      log_message(LogLevel::Warn, "association: cluster of " + held_out +
                                      " has no other members; skipped");
      continue;
    }
    const auto& t = detail::trained_by_id(trained, held_out);
    const AssociationResult assoc = associate_new_scene(t.fit.topics, t.normalization, bases, tau);
    AssociationRow row;
    row.scene_id = held_out;
    row.true_cluster = partition.at(held_out);
    row.predicted_cluster = assoc.best_cluster;
    row.distances = assoc.distances;
    if (row.predicted_cluster != row.true_cluster) outcome.all_correct = false;
    outcome.rows.push_back(std::move(row));
  }
  (void)scenes;
  return outcome;
}

struct SweepRow {
  int coeff = 0;
  double scm_macro = 0.0;
  double fm_macro = 0.0;
};

// Classification accuracy of the scene-cluster model vs the flat model as the
// shared-basis size coefficient varies; the flat model's budget is the sum of
// the per-cluster budgets.
inline std::vector<SweepRow> stb_sweep(const std::vector<SceneCorpus>& scenes,
                                       const std::vector<TrainedScene>& trained,
                                       const SceneClustering& clustering,
                                       const AffinityMatrix& affinity,
                                       const std::vector<int>& coeff_values,
                                       const std::vector<int>& k_grid, const LdaConfig& cfg) {
  const auto categories = semantic_categories(scenes);
  std::vector<SweepRow> rows;
  for (int coeff : coeff_values) {
    SweepRow row;
    row.coeff = coeff;
    const auto scm = build_cluster_models(scenes, trained, clustering, affinity, coeff, cfg);
    row.scm_macro = evaluate_loso_classification(scm, categories, k_grid).mean_macro;
    const auto fm = build_flat_model(scenes, trained, affinity,
                                     coeff * static_cast<int>(trained.size()), cfg);
    row.fm_macro = evaluate_loso_classification({fm}, categories, k_grid).mean_macro;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace scenemesh
