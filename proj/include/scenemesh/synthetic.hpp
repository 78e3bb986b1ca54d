#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scenemesh/alignment.hpp"
#include "scenemesh/common.hpp"
#include "scenemesh/corpus.hpp"
#include "scenemesh/rng.hpp"

namespace scenemesh {

// A planted activity: a normalized word distribution in canonical (reference)
// coordinates plus its semantic tag.
struct ActivityTemplate {
  std::string tag;
  std::vector<double> weights;
};

// A behavior is a subset of activity slots. Slots 0..S-1 address the cluster's
// shared activities, S..S+U-1 a scene's own unique activities.
struct BehaviorDef {
  std::vector<int> slots;
};

struct ClusterSpec {
  int num_scenes = 0;
  std::vector<ActivityTemplate> shared_activities;
  int unique_activities_per_scene = 0;
  std::vector<BehaviorDef> behaviors;           // sampled for semantic clips
  std::vector<BehaviorDef> training_behaviors;  // optional; defaults to `behaviors`
  std::vector<double> behavior_weights;           // optional; uniform when empty
  std::vector<double> training_behavior_weights;  // optional; uniform when empty
};

struct TransformRange {
  double scale_min = 0.9;
  double scale_max = 1.1;
  double max_translation = 0.8;  // cells
};

struct SyntheticWorldSpec {
  std::uint64_t seed = 0;
  GridSpec grid;
  std::vector<ClusterSpec> clusters;
  std::map<std::string, SceneTransform> explicit_transforms;  // by scene id; others sampled
  TransformRange transform_range;
  int training_clips_per_scene = 60;
  int semantic_clips_per_scene = 40;
  int words_per_clip = 60;
  double noise_rate = 0.02;     // fraction of uniformly random words per clip
  double mixture_alpha = 1.0;   // Dirichlet concentration over a behavior's slots

  void validate() const {
    grid.validate();
    if (clusters.empty()) throw DomainError("SyntheticWorldSpec: no clusters");
    for (const auto& c : clusters) {
      if (c.num_scenes < 1) throw DomainError("SyntheticWorldSpec: cluster with no scenes");
      if (c.shared_activities.empty() && c.unique_activities_per_scene == 0) {
        throw DomainError("SyntheticWorldSpec: cluster with no activities");
      }
      const int slots = static_cast<int>(c.shared_activities.size()) + c.unique_activities_per_scene;
      if (c.behaviors.empty()) throw DomainError("SyntheticWorldSpec: cluster with no behaviors");
      for (const auto* defs : {&c.behaviors, &c.training_behaviors}) {
        for (const auto& b : *defs) {
          if (b.slots.empty()) throw DomainError("SyntheticWorldSpec: empty behavior");
          for (int s : b.slots) {
            if (s < 0 || s >= slots) throw DomainError("SyntheticWorldSpec: behavior slot out of range");
          }
        }
      }
      if (!c.behavior_weights.empty() && c.behavior_weights.size() != c.behaviors.size()) {
        throw DomainError("SyntheticWorldSpec: behavior_weights length mismatch");
      }
      if (!c.training_behavior_weights.empty() &&
          c.training_behavior_weights.size() !=
              (c.training_behaviors.empty() ? c.behaviors : c.training_behaviors).size()) {
        throw DomainError("SyntheticWorldSpec: training_behavior_weights length mismatch");
      }
      for (const auto& a : c.shared_activities) {
        if (a.weights.size() != static_cast<std::size_t>(grid.vocab_size())) {
          throw DomainError("SyntheticWorldSpec: activity template length mismatch");
        }
      }
    }
    if (training_clips_per_scene < 0 || semantic_clips_per_scene < 0 ||
        training_clips_per_scene + semantic_clips_per_scene == 0) {
      throw DomainError("SyntheticWorldSpec: no clips requested");
    }
    if (words_per_clip < 1) throw DomainError("SyntheticWorldSpec: words_per_clip must be >= 1");
    if (noise_rate < 0.0 || noise_rate > 1.0) {
      throw DomainError("SyntheticWorldSpec: noise_rate outside [0,1]");
    }
    if (!(mixture_alpha > 0.0)) throw DomainError("SyntheticWorldSpec: mixture_alpha must be positive");
  }
};

struct PlantedActivity {
  std::string tag;
  std::vector<double> weights;  // realized in scene coordinates
};

struct SceneGroundTruth {
  int cluster_index = 0;
  SceneTransform true_transform;
  std::vector<PlantedActivity> activities;  // shared slots first, then unique
};

struct WorldGroundTruth {
  int num_clusters = 0;
  std::map<std::string, int> scene_clusters;
  std::map<std::string, SceneGroundTruth> scenes;
  std::map<std::string, BehaviorLabel> clip_labels;  // training and semantic clips
};

struct SyntheticWorld {
  std::vector<SceneCorpus> scenes;
  WorldGroundTruth truth;
};

// Corridor-shaped activity: a run of contiguous cells along a row or column,
// all moving in one dominant direction (a synthetic traffic lane).
inline std::vector<double> corridor_weights(const GridSpec& grid, bool horizontal, int line,
                                            int span_begin, int span_end, int direction) {
  grid.validate();
  std::vector<double> w(static_cast<std::size_t>(grid.vocab_size()), 0.0);
  int cells = 0;
  for (int p = span_begin; p <= span_end; ++p) {
    const int cx = horizontal ? p : line;
    const int cy = horizontal ? line : p;
    w[static_cast<std::size_t>(word_index(cx, cy, direction, grid))] = 1.0;
    ++cells;
  }
  if (cells == 0) throw DomainError("corridor_weights: empty corridor");
  for (double& v : w) v /= cells;
  return w;
}

namespace detail {

inline std::set<int> support_of(const std::vector<double>& weights) {
  std::set<int> s;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) s.insert(static_cast<int>(i));
  }
  return s;
}

inline double jaccard(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (int v : a) inter += b.count(v);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Samples a corridor whose word support overlaps every registered activity by
// at most 0.3 Jaccard, so planted activities stay mutually distinguishable.
inline std::vector<double> sample_distinct_corridor(Rng& rng, const GridSpec& grid,
                                                    std::vector<std::set<int>>& registry) {
  const int interior_x = grid.cells_x > 2 ? 1 : 0;
  const int interior_y = grid.cells_y > 2 ? 1 : 0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const bool horizontal = rng.uniform_int(2) == 0;
    const int line = horizontal ? interior_y + rng.uniform_int(std::max(1, grid.cells_y - 2 * interior_y))
                                : interior_x + rng.uniform_int(std::max(1, grid.cells_x - 2 * interior_x));
    const int extent = horizontal ? grid.cells_x : grid.cells_y;
    const int margin = extent > 2 ? 1 : 0;
    // Direction along the corridor, either sense.
    const double angle = horizontal ? (rng.uniform_int(2) == 0 ? 0.0 : M_PI)
                                    : (rng.uniform_int(2) == 0 ? M_PI / 2.0 : 3.0 * M_PI / 2.0);
    const int direction =
        static_cast<int>(std::llround(angle * grid.directions / (2.0 * M_PI))) % grid.directions;
    auto w = corridor_weights(grid, horizontal, line, margin, extent - 1 - margin, direction);
    const auto support = support_of(w);
    bool distinct = true;
    for (const auto& other : registry) {
      if (jaccard(support, other) > 0.3) {
        distinct = false;
        break;
      }
    }
    if (distinct) {
      registry.push_back(support);
      return w;
    }
  }
  throw DomainError("sample_distinct_corridor: grid too small for the requested activity count");
}

}  // namespace detail

// Seeded multi-scene generator. Scenes of one cluster realize the same shared
// activities under scene-specific similarity transforms plus per-scene unique
// activities. Each clip samples a behavior (an activity subset), Dirichlet
// topic weights over its slots, then words from the mixture with
// `noise_rate` uniform contamination. Ground truth (partition, planted
// activities with tags, labels) is emitted alongside. Deterministic:
// identical spec and seed give identical output.
inline SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec) {
  spec.validate();
  SyntheticWorld world;
  world.truth.num_clusters = static_cast<int>(spec.clusters.size());

  // Supports of every explicitly provided template seed the distinctness
  // registry so sampled unique corridors stay away from them.
  std::vector<std::set<int>> registry;
  for (const auto& cluster : spec.clusters) {
    for (const auto& activity : cluster.shared_activities) {
      registry.push_back(detail::support_of(activity.weights));
    }
  }

  const int n_vocab = spec.grid.vocab_size();
  int scene_counter = 0;
  for (std::size_t ci = 0; ci < spec.clusters.size(); ++ci) {
    const auto& cluster = spec.clusters[ci];
    const auto& training_defs =
        cluster.training_behaviors.empty() ? cluster.behaviors : cluster.training_behaviors;
    for (int si = 0; si < cluster.num_scenes; ++si) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "s%02d", scene_counter);
      const std::string scene_id(buf);
      ++scene_counter;

      Rng rng = Rng::substream(spec.seed, "scene:" + scene_id);

      SceneTransform transform;
      if (auto it = spec.explicit_transforms.find(scene_id); it != spec.explicit_transforms.end()) {
        transform = it->second;
      } else {
        transform.scale = rng.uniform(spec.transform_range.scale_min, spec.transform_range.scale_max);
        transform.tx = rng.uniform(-spec.transform_range.max_translation, spec.transform_range.max_translation);
        transform.ty = rng.uniform(-spec.transform_range.max_translation, spec.transform_range.max_translation);
      }
      transform.validate();

      SceneGroundTruth truth;
      truth.cluster_index = static_cast<int>(ci);
      truth.true_transform = transform;
      for (std::size_t k = 0; k < cluster.shared_activities.size(); ++k) {
        PlantedActivity planted;
        planted.tag = cluster.shared_activities[k].tag.empty()
                          ? "c" + std::to_string(ci) + "a" + std::to_string(k)
                          : cluster.shared_activities[k].tag;
        planted.weights = transform.is_identity()
                              ? cluster.shared_activities[k].weights
                              : transform_topic(cluster.shared_activities[k].weights, spec.grid, transform);
        truth.activities.push_back(std::move(planted));
      }
      for (int u = 0; u < cluster.unique_activities_per_scene; ++u) {
        PlantedActivity planted;
        planted.tag = scene_id + "u" + std::to_string(u);
        auto canonical = detail::sample_distinct_corridor(rng, spec.grid, registry);
        planted.weights = transform.is_identity()
                              ? std::move(canonical)
                              : transform_topic(canonical, spec.grid, transform);
        truth.activities.push_back(std::move(planted));
      }

      // Per-activity CDF for fast word draws.
      std::vector<std::vector<double>> cdfs(truth.activities.size());
      for (std::size_t a = 0; a < truth.activities.size(); ++a) {
        cdfs[a].resize(static_cast<std::size_t>(n_vocab));
        double run = 0.0;
        for (int v = 0; v < n_vocab; ++v) {
          run += truth.activities[a].weights[static_cast<std::size_t>(v)];
          cdfs[a][static_cast<std::size_t>(v)] = run;
        }
      }
      auto draw_word = [&](std::size_t activity) {
        const double u = rng.uniform01() * cdfs[activity].back();
        const auto it = std::upper_bound(cdfs[activity].begin(), cdfs[activity].end(), u);
        return static_cast<int>(it - cdfs[activity].begin());
      };

      SceneCorpus corpus;
      corpus.scene_id = scene_id;
      corpus.grid = spec.grid;

      auto sample_clip = [&](const std::vector<BehaviorDef>& defs,
                             const std::vector<double>& def_weights, const std::string& clip_id) {
        const auto pick = def_weights.empty() ? rng.uniform_int(static_cast<int>(defs.size()))
                                              : rng.categorical(def_weights);
        const auto& behavior = defs[static_cast<std::size_t>(pick)];
        const auto weights = rng.symmetric_dirichlet(behavior.slots.size(), spec.mixture_alpha);
        ClipDocument doc;
        doc.clip_id = clip_id;
        doc.scene_id = scene_id;
        for (int w = 0; w < spec.words_per_clip; ++w) {
          int word;
          if (rng.uniform01() < spec.noise_rate) {
            word = rng.uniform_int(n_vocab);
          } else {
            const int slot = behavior.slots[static_cast<std::size_t>(rng.categorical(weights))];
            word = draw_word(static_cast<std::size_t>(slot));
          }
          doc.add(word, 1);
        }
        doc.sort_counts();
        std::vector<std::string> tags;
        for (int slot : behavior.slots) {
          tags.push_back(truth.activities[static_cast<std::size_t>(slot)].tag);
        }
        world.truth.clip_labels[clip_id] = BehaviorLabel::from_tags(std::move(tags));
        return doc;
      };

      const auto& training_weights = cluster.training_behaviors.empty()
                                         ? cluster.behavior_weights
                                         : cluster.training_behavior_weights;
      for (int n = 0; n < spec.training_clips_per_scene; ++n) {
        char cb[32];
        std::snprintf(cb, sizeof(cb), "%s-t%03d", scene_id.c_str(), n);
        corpus.training_clips.push_back(sample_clip(training_defs, training_weights, cb));
      }
      for (int n = 0; n < spec.semantic_clips_per_scene; ++n) {
        char cb[32];
        std::snprintf(cb, sizeof(cb), "%s-q%03d", scene_id.c_str(), n);
        auto doc = sample_clip(cluster.behaviors, cluster.behavior_weights, cb);
        corpus.annotations[doc.clip_id] = world.truth.clip_labels[doc.clip_id];
        corpus.semantic_clips.push_back(std::move(doc));
      }

      corpus.validate();
      world.truth.scene_clusters[scene_id] = static_cast<int>(ci);
      world.truth.scenes[scene_id] = std::move(truth);
      world.scenes.push_back(std::move(corpus));
    }
  }
  return world;
}

// ---------------------------------------------------------------------------
// Bundled world presets shared by the tests and the CLI demo configs.
// ---------------------------------------------------------------------------
namespace presets {

// Two activities with disjoint vocabulary halves in a single scene.
inline SyntheticWorldSpec two_topic(std::uint64_t seed) {
  SyntheticWorldSpec spec;
  spec.seed = seed;
  spec.grid = GridSpec{4, 4, 4, 5};
  ClusterSpec cluster;
  cluster.num_scenes = 1;
  const int half = spec.grid.vocab_size() / 2;
  for (int t = 0; t < 2; ++t) {
    ActivityTemplate activity;
    activity.tag = "half" + std::to_string(t);
    activity.weights.assign(static_cast<std::size_t>(spec.grid.vocab_size()), 0.0);
    for (int v = t * half; v < (t + 1) * half; ++v) {
      activity.weights[static_cast<std::size_t>(v)] = 1.0 / half;
    }
    cluster.shared_activities.push_back(std::move(activity));
  }
  cluster.behaviors = {BehaviorDef{{0}}, BehaviorDef{{1}}};
  spec.clusters.push_back(std::move(cluster));
  spec.explicit_transforms["s00"] = SceneTransform{};
  spec.training_clips_per_scene = 200;
  spec.semantic_clips_per_scene = 0;
  spec.words_per_clip = 60;
  spec.noise_rate = 0.0;
  return spec;
}

namespace detail_presets {

inline ClusterSpec standard_cluster(const GridSpec& grid, Rng& rng,
                                    std::vector<std::set<int>>& registry, int num_scenes,
                                    int num_shared, int unique_per_scene, bool semantic_shared_only) {
  ClusterSpec cluster;
  cluster.num_scenes = num_scenes;
  for (int k = 0; k < num_shared; ++k) {
    ActivityTemplate activity;  // tag assigned by the generator
    activity.weights = scenemesh::detail::sample_distinct_corridor(rng, grid, registry);
    cluster.shared_activities.push_back(std::move(activity));
  }
  cluster.unique_activities_per_scene = unique_per_scene;
  for (int k = 0; k < num_shared; ++k) cluster.behaviors.push_back(BehaviorDef{{k}});
  for (int k = 0; k < num_shared; ++k) {
    cluster.behaviors.push_back(BehaviorDef{{k, (k + 1) % num_shared}});
  }
  if (unique_per_scene > 0) {
    cluster.training_behaviors = cluster.behaviors;
    cluster.training_behaviors.push_back(BehaviorDef{{num_shared}});
    cluster.training_behaviors.push_back(BehaviorDef{{0, num_shared}});
    if (!semantic_shared_only) {
      cluster.behaviors.push_back(BehaviorDef{{num_shared}});
      cluster.behaviors.push_back(BehaviorDef{{1 % num_shared, num_shared}});
    }
  }
  // Long-tailed behavior frequencies, as in real surveillance footage; the
  // floor keeps even the rarest category populated at desk-scale clip counts.
  double w = 1.0;
  for (std::size_t i = 0; i < cluster.behaviors.size(); ++i) {
    cluster.behavior_weights.push_back(std::max(w, 0.15));
    w *= 0.78;
  }
  return cluster;
}

}  // namespace detail_presets

// Three clusters of three scenes, five shared plus one unique activity per
// member; used for scene-clustering, shared-basis and association checks.
inline SyntheticWorldSpec three_cluster(std::uint64_t seed) {
  SyntheticWorldSpec spec;
  spec.seed = seed;
  spec.grid = GridSpec{12, 12, 4, 5};
  Rng rng = Rng::substream(seed, "preset:three_cluster");
  std::vector<std::set<int>> registry;
  for (int c = 0; c < 3; ++c) {
    spec.clusters.push_back(
        detail_presets::standard_cluster(spec.grid, rng, registry, 3, 5, 1, false));
  }
  spec.training_clips_per_scene = 120;
  spec.semantic_clips_per_scene = 24;
  spec.words_per_clip = 100;
  spec.noise_rate = 0.02;
  return spec;
}

// Two clusters of three scenes; semantic behaviors mix cluster-shared
// activities with each scene's own unique activity, so scenes overlap in
// most categories but keep a few of their own. The query / classification /
// summarization test bed.
inline SyntheticWorldSpec two_cluster_tasks(std::uint64_t seed) {
  SyntheticWorldSpec spec;
  spec.seed = seed;
  spec.grid = GridSpec{8, 8, 4, 5};
  Rng rng = Rng::substream(seed, "preset:two_cluster_tasks");
  std::vector<std::set<int>> registry;
  for (int c = 0; c < 2; ++c) {
    spec.clusters.push_back(
        detail_presets::standard_cluster(spec.grid, rng, registry, 3, 5, 1, false));
  }
  spec.training_clips_per_scene = 60;
  spec.semantic_clips_per_scene = 64;
  spec.words_per_clip = 60;
  spec.noise_rate = 0.02;
  return spec;
}

// One cluster of three densely sampled scenes; used for alignment stability.
// Every clip expresses all four activities so clip composition varies little
// and the normalization statistics concentrate.
inline SyntheticWorldSpec dense_alignment(std::uint64_t seed) {
  SyntheticWorldSpec spec;
  spec.seed = seed;
  spec.grid = GridSpec{10, 10, 4, 5};
  Rng rng = Rng::substream(seed, "preset:dense_alignment");
  std::vector<std::set<int>> registry;
  auto cluster = detail_presets::standard_cluster(spec.grid, rng, registry, 3, 4, 0, false);
  cluster.behaviors = {BehaviorDef{{0, 1, 2, 3}}};
  cluster.behavior_weights.clear();
  spec.clusters.push_back(std::move(cluster));
  spec.training_clips_per_scene = 600;
  spec.semantic_clips_per_scene = 0;
  spec.words_per_clip = 150;
  spec.noise_rate = 0.05;
  spec.mixture_alpha = 4.0;
  return spec;
}

inline SyntheticWorldSpec by_name(const std::string& name, std::uint64_t seed) {
  if (name == "two_topic") return two_topic(seed);
  if (name == "three_cluster") return three_cluster(seed);
  if (name == "two_cluster_tasks") return two_cluster_tasks(seed);
  if (name == "dense_alignment") return dense_alignment(seed);
  throw DomainError("unknown world preset: " + name);
}

}  // namespace presets

}  // namespace scenemesh
