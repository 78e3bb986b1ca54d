#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scenemesh/io.hpp"

namespace scenemesh {

// Batch pipeline configuration. Defaults mirror the reference experimental
// setup (15 local topics per scene, basis coefficient 5, 50 summarization
// runs, 20 stability subsamples); the bundled demo config scales the synthetic
// world down to desk size.
struct PipelineConfig {
  std::string run_dir = "run";
  std::string world_preset = "two_cluster_tasks";
  std::uint64_t seed = 1;

  std::optional<GridSpec> grid_override;
  std::optional<int> training_clips;
  std::optional<int> semantic_clips;
  std::optional<int> words_per_clip;
  std::optional<double> noise_rate;

  int k_local = 15;
  int coeff = 5;
  TauPolicy tau;
  std::string cluster_mode = "fixed";  // "fixed" | "auto"
  int num_clusters = 2;
  SpectralConfig spectral;
  LdaConfig lda;

  std::vector<int> knn_grid{1, 3, 5, 7, 9, 11, 13, 15};
  std::vector<int> query_ts{1, 5, 10, 20, 50, 100, 200};
  std::vector<int> summary_lengths{18, 20, 22, 24};
  std::vector<std::string> summary_methods{"kcenter", "ncut", "random", "ss_kcenter"};
  int summary_runs = 50;
  int stability_runs = 20;
  double stability_fraction = 0.5;
  std::vector<int> sweep_coeffs{3, 4, 5};
  int jobs = 1;

  void validate() const {
    if (run_dir.empty()) throw DomainError("config: run_dir empty");
    if (k_local < 1) throw DomainError("config: k_local must be >= 1");
    if (coeff < 1 || coeff > k_local) {
      throw DomainError("config: coeff must be in [1, k_local]");
    }
    if (cluster_mode != "fixed" && cluster_mode != "auto") {
      throw DomainError("config: cluster_mode must be 'fixed' or 'auto'");
    }
    if (cluster_mode == "fixed" && num_clusters < 1) {
      throw DomainError("config: num_clusters must be >= 1");
    }
    if (summary_runs < 1 || stability_runs < 1) throw DomainError("config: runs must be >= 1");
    if (!(stability_fraction > 0.0 && stability_fraction <= 1.0)) {
      throw DomainError("config: stability_fraction outside (0, 1]");
    }
    if (query_ts.empty() || summary_lengths.empty() || knn_grid.empty()) {
      throw DomainError("config: empty task parameter list");
    }
    for (int c : sweep_coeffs) {
      if (c < 1 || c > k_local) throw DomainError("config: sweep coeff outside [1, k_local]");
    }
    if (tau.kind == TauPolicy::Kind::Fixed && !(tau.value > 0.0)) {
      throw DomainError("config: fixed tau must be positive");
    }
    if (tau.kind == TauPolicy::Kind::Percentile && !(tau.value > 0.0 && tau.value < 1.0)) {
      throw DomainError("config: tau percentile outside (0, 1)");
    }
    presets::by_name(world_preset, seed);  // throws on unknown preset
  }

  Json to_json() const {
    Json j;
    j["run_dir"] = run_dir;
    j["world"] = Json{{"preset", world_preset}, {"seed", seed}};
    if (grid_override) j["world"]["grid"] = grid_to_json(*grid_override);
    if (training_clips) j["world"]["training_clips"] = *training_clips;
    if (semantic_clips) j["world"]["semantic_clips"] = *semantic_clips;
    if (words_per_clip) j["world"]["words_per_clip"] = *words_per_clip;
    if (noise_rate) j["world"]["noise_rate"] = *noise_rate;
    j["k_local"] = k_local;
    j["coeff"] = coeff;
    j["tau"] = Json{{"policy", tau.kind == TauPolicy::Kind::Fixed ? "fixed" : "percentile"},
                    {"value", tau.value}};
    j["clustering"] = Json{{"mode", cluster_mode},
                           {"num_clusters", num_clusters},
                           {"local_scale_neighbor", spectral.local_scale_neighbor},
                           {"kmeans_restarts", spectral.kmeans_restarts},
                           {"max_clusters", spectral.max_clusters},
                           {"auto_tolerance", spectral.auto_tolerance}};
    j["lda"] = Json{{"max_em_iters", lda.max_em_iters}, {"e_step_iters", lda.e_step_iters},
                    {"tol", lda.tol},                   {"e_step_tol", lda.e_step_tol},
                    {"eta", lda.eta},                   {"restarts", lda.restarts}};
    j["tasks"] = Json{{"knn_grid", knn_grid},
                      {"query_ts", query_ts},
                      {"summary_lengths", summary_lengths},
                      {"summary_methods", summary_methods},
                      {"summary_runs", summary_runs}};
    j["stability"] = Json{{"runs", stability_runs}, {"fraction", stability_fraction}};
    j["sweep"] = Json{{"coeffs", sweep_coeffs}};
    return j;
  }

  static PipelineConfig from_json(const Json& j, const std::string& origin) {
    PipelineConfig cfg;
    try {
      if (j.contains("run_dir")) cfg.run_dir = j["run_dir"].get<std::string>();
      if (j.contains("world")) {
        const auto& w = j["world"];
        if (w.contains("preset")) cfg.world_preset = w["preset"].get<std::string>();
        if (w.contains("seed")) cfg.seed = w["seed"].get<std::uint64_t>();
        if (w.contains("grid")) cfg.grid_override = grid_from_json(w["grid"], origin);
        if (w.contains("training_clips")) cfg.training_clips = w["training_clips"].get<int>();
        if (w.contains("semantic_clips")) cfg.semantic_clips = w["semantic_clips"].get<int>();
        if (w.contains("words_per_clip")) cfg.words_per_clip = w["words_per_clip"].get<int>();
        if (w.contains("noise_rate")) cfg.noise_rate = w["noise_rate"].get<double>();
      }
      if (j.contains("k_local")) cfg.k_local = j["k_local"].get<int>();
      if (j.contains("coeff")) cfg.coeff = j["coeff"].get<int>();
      if (j.contains("tau")) {
        const std::string policy = j["tau"].value("policy", "percentile");
        cfg.tau = policy == "fixed" ? TauPolicy::fixed(j["tau"].value("value", 0.01))
                                    : TauPolicy::percentile(j["tau"].value("value", 0.40));
      }
      if (j.contains("clustering")) {
        const auto& c = j["clustering"];
        cfg.cluster_mode = c.value("mode", cfg.cluster_mode);
        cfg.num_clusters = c.value("num_clusters", cfg.num_clusters);
        cfg.spectral.local_scale_neighbor =
            c.value("local_scale_neighbor", cfg.spectral.local_scale_neighbor);
        cfg.spectral.kmeans_restarts = c.value("kmeans_restarts", cfg.spectral.kmeans_restarts);
        cfg.spectral.max_clusters = c.value("max_clusters", cfg.spectral.max_clusters);
        cfg.spectral.auto_tolerance = c.value("auto_tolerance", cfg.spectral.auto_tolerance);
      }
      if (j.contains("lda")) {
        const auto& l = j["lda"];
        cfg.lda.max_em_iters = l.value("max_em_iters", cfg.lda.max_em_iters);
        cfg.lda.e_step_iters = l.value("e_step_iters", cfg.lda.e_step_iters);
        cfg.lda.tol = l.value("tol", cfg.lda.tol);
        cfg.lda.e_step_tol = l.value("e_step_tol", cfg.lda.e_step_tol);
        cfg.lda.eta = l.value("eta", cfg.lda.eta);
        cfg.lda.restarts = l.value("restarts", cfg.lda.restarts);
      }
      if (j.contains("tasks")) {
        const auto& t = j["tasks"];
        if (t.contains("knn_grid")) cfg.knn_grid = t["knn_grid"].get<std::vector<int>>();
        if (t.contains("query_ts")) cfg.query_ts = t["query_ts"].get<std::vector<int>>();
        if (t.contains("summary_lengths")) {
          cfg.summary_lengths = t["summary_lengths"].get<std::vector<int>>();
        }
        if (t.contains("summary_methods")) {
          cfg.summary_methods = t["summary_methods"].get<std::vector<std::string>>();
        }
        cfg.summary_runs = t.value("summary_runs", cfg.summary_runs);
      }
      if (j.contains("stability")) {
        cfg.stability_runs = j["stability"].value("runs", cfg.stability_runs);
        cfg.stability_fraction = j["stability"].value("fraction", cfg.stability_fraction);
      }
      if (j.contains("sweep") && j["sweep"].contains("coeffs")) {
        cfg.sweep_coeffs = j["sweep"]["coeffs"].get<std::vector<int>>();
      }
    } catch (const Json::exception& e) {
      throw ParseError(origin + ": bad config value: " + e.what());
    }
    return cfg;
  }

  // Hash of the canonical serialized form (run_dir and jobs excluded: they do
  // not affect artifact content).
  std::string config_hash() const {
    Json j = to_json();
    j.erase("run_dir");
    return hash_content(j.dump());
  }

  SyntheticWorldSpec world_spec() const {
    SyntheticWorldSpec spec = presets::by_name(world_preset, seed);
    if (grid_override) spec.grid = *grid_override;
    if (training_clips) spec.training_clips_per_scene = *training_clips;
    if (semantic_clips) spec.semantic_clips_per_scene = *semantic_clips;
    if (words_per_clip) spec.words_per_clip = *words_per_clip;
    if (noise_rate) spec.noise_rate = *noise_rate;
    return spec;
  }

  std::filesystem::path dir() const { return run_dir; }
  std::filesystem::path world_manifest_path() const { return dir() / "world" / "world.json"; }
  std::filesystem::path scene_path(const std::string& id) const {
    return dir() / "world" / ("scene_" + id + ".json");
  }
  std::filesystem::path model_path(const std::string& id) const {
    return dir() / "models" / ("model_" + id + ".json");
  }
  std::filesystem::path affinity_path() const { return dir() / "affinity.csv"; }
  std::filesystem::path clustering_path() const { return dir() / "clustering.json"; }
  std::filesystem::path stb_path(int cluster) const {
    return dir() / ("stb_" + std::to_string(cluster) + ".json");
  }
  std::filesystem::path profiles_path(int cluster) const {
    return dir() / ("profiles_" + std::to_string(cluster) + ".json");
  }
  std::filesystem::path retrieval_path() const { return dir() / "retrieval.csv"; }
  std::filesystem::path predictions_path() const { return dir() / "predictions.csv"; }
  std::filesystem::path summaries_path() const { return dir() / "summaries.csv"; }
  std::filesystem::path manifest_path(const std::string& stage) const {
    return dir() / "manifests" / (stage + ".json");
  }
  std::filesystem::path run_manifest_path() const { return dir() / "run_manifest.json"; }
};

namespace pipeline {

struct StageResult {
  std::string stage;
  std::vector<std::string> outputs;
  Json extras;
};

namespace detail {

struct LoadedWorld {
  std::vector<SceneCorpus> scenes;
  std::optional<WorldGroundTruth> truth;
  std::string config_hash;
};

inline LoadedWorld load_world(const PipelineConfig& cfg) {
  const auto path = cfg.world_manifest_path();
  const Json manifest = load_json(path);
  check_schema(manifest, "world_manifest", path.string());
  LoadedWorld world;
  world.config_hash = config_hash_of_json_artifact(manifest, path.string());
  for (const auto& file : require_key(manifest, "scenes", path.string())) {
    const auto scene_path = cfg.dir() / "world" / file.get<std::string>();
    world.scenes.push_back(scene_from_json(load_json(scene_path), scene_path.string()));
  }
  if (manifest.contains("ground_truth")) {
    world.truth = ground_truth_from_json(manifest["ground_truth"], path.string());
  }
  return world;
}

inline std::vector<SceneModel> load_models(const PipelineConfig& cfg,
                                           const std::vector<SceneCorpus>& scenes) {
  std::vector<SceneModel> models;
  for (const auto& scene : scenes) {
    const auto path = cfg.model_path(scene.scene_id);
    models.push_back(model_from_json(load_json(path), path.string()));
  }
  return models;
}

inline std::vector<TrainedScene> models_as_trained(const std::vector<SceneModel>& models) {
  std::vector<TrainedScene> trained;
  for (const auto& m : models) {
    TrainedScene t;
    t.scene_id = m.scene_id;
    t.grid = m.topics.grid;
    t.fit.topics = m.topics;
    t.fit.prior = m.prior;
    t.fit.elbo_trace = m.elbo_trace;
    t.normalization = m.normalization;
    trained.push_back(std::move(t));
  }
  return trained;
}

inline void write_manifest(const PipelineConfig& cfg, const std::string& stage,
                           const std::map<std::string, std::string>& input_hashes,
                           const std::vector<std::string>& outputs, const Json& extras) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "stage_manifest";
  j["stage"] = stage;
  j["config_hash"] = cfg.config_hash();
  j["seed"] = cfg.seed;
  j["inputs"] = input_hashes;
  j["outputs"] = outputs;
  j["extras"] = extras;
  write_file_atomic(cfg.manifest_path(stage), j.dump(2) + "\n");

  // Top-level run manifest: stage -> outputs, rebuilt deterministically.
  Json run;
  const auto run_path = cfg.run_manifest_path();
  if (std::filesystem::exists(run_path)) {
    try {
      run = load_json(run_path);
    } catch (const ParseError&) {
      run = Json::object();
    }
  }
  run["schema_version"] = kSchemaVersion;
  run["kind"] = "run_manifest";
  run["config_hash"] = cfg.config_hash();
  if (!run.contains("stages") || !run["stages"].is_object()) run["stages"] = Json::object();
  run["stages"][stage] = Json{{"outputs", outputs}};
  write_file_atomic(run_path, run.dump(2) + "\n");
}

inline std::map<std::string, std::string> hash_inputs(const std::vector<std::filesystem::path>& paths) {
  std::map<std::string, std::string> hashes;
  for (const auto& p : paths) hashes[p.string()] = hash_file(p);
  return hashes;
}

inline void check_hash(const std::string& artifact_hash, const PipelineConfig& cfg,
                       const std::string& origin) {
  if (artifact_hash != cfg.config_hash()) {
    throw ParseError(origin + ": config hash mismatch (artifact " + artifact_hash +
                     ", current config " + cfg.config_hash() + ")");
  }
}

}  // namespace detail

// gen: materialize the synthetic world (scene corpora + manifest with ground
// truth).
inline StageResult run_gen(const PipelineConfig& cfg) {
  const SyntheticWorld world = generate_synthetic_world(cfg.world_spec());
  const std::string hash = cfg.config_hash();
  StageResult result{"gen", {}, {}};
  std::vector<std::string> scene_files;
  for (const auto& scene : world.scenes) {
    const auto path = cfg.scene_path(scene.scene_id);
    write_file_atomic(path, scene_to_json(scene).dump(2) + "\n");
    scene_files.push_back(path.filename().string());
    result.outputs.push_back(path.string());
  }
  const Json manifest = world_manifest_to_json(scene_files, world.truth, hash, cfg.seed);
  write_file_atomic(cfg.world_manifest_path(), manifest.dump(2) + "\n");
  result.outputs.push_back(cfg.world_manifest_path().string());
  result.extras = Json{{"num_scenes", world.scenes.size()}};
  detail::write_manifest(cfg, "gen", {}, result.outputs, result.extras);
  return result;
}

// train: per-scene LDA plus the closed-form normalization transform.
inline StageResult run_train(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  StageResult result{"train", {}, {}};
  std::vector<SceneModel> models(world.scenes.size());
  parallel_for(world.scenes.size(), cfg.jobs, [&](std::size_t i) {
    const auto& scene = world.scenes[i];
    LdaConfig lda = cfg.lda;
    lda.seed = derive_seed(cfg.seed, "lda:" + scene.scene_id);
    LdaFit fit = fit_lda(scene.training_clips, scene.grid, cfg.k_local, lda);
    SceneModel model;
    model.scene_id = scene.scene_id;
    model.topics = std::move(fit.topics);
    model.prior = std::move(fit.prior);
    model.elbo_trace = std::move(fit.elbo_trace);
    model.normalization = estimate_normalization(scene);
    model.config = lda;
    models[i] = std::move(model);
  });
  const std::string hash = cfg.config_hash();
  std::vector<std::filesystem::path> inputs{cfg.world_manifest_path()};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto path = cfg.model_path(models[i].scene_id);
    write_file_atomic(path, model_to_json(models[i], hash).dump(2) + "\n");
    result.outputs.push_back(path.string());
    inputs.push_back(cfg.scene_path(models[i].scene_id));
  }
  detail::write_manifest(cfg, "train", detail::hash_inputs(inputs), result.outputs, {});
  return result;
}

// affinity: pairwise scene relatedness with the configured inlier threshold
// policy.
inline StageResult run_affinity(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  const auto models = detail::load_models(cfg, world.scenes);
  const auto trained = detail::models_as_trained(models);
  const AffinityResult affinity = build_affinity(scene_views(trained), cfg.tau);
  const std::string csv = affinity_to_csv(affinity.affinity, affinity.tau, cfg.config_hash());
  write_file_atomic(cfg.affinity_path(), csv);
  std::vector<std::filesystem::path> inputs;
  for (const auto& m : models) inputs.push_back(cfg.model_path(m.scene_id));
  StageResult result{"affinity", {cfg.affinity_path().string()}, Json{{"tau", affinity.tau}}};
  detail::write_manifest(cfg, "affinity", detail::hash_inputs(inputs), result.outputs, result.extras);
  return result;
}

// cluster: self-tuning spectral clustering over the affinity matrix.
inline StageResult run_cluster(const PipelineConfig& cfg) {
  const auto artifact = affinity_from_csv(read_file(cfg.affinity_path()), cfg.affinity_path().string());
  detail::check_hash(artifact.config_hash, cfg, cfg.affinity_path().string());
  SpectralConfig spectral = cfg.spectral;
  spectral.seed = derive_seed(cfg.seed, "spectral");
  AutoKDiagnostics diagnostics;
  const SceneClustering clustering = self_tuning_spectral_cluster(
      artifact.affinity, cfg.cluster_mode == "auto" ? ClusterMode::Auto : ClusterMode::FixedK,
      cfg.num_clusters, spectral, &diagnostics);
  write_file_atomic(cfg.clustering_path(),
                    clustering_to_json(clustering, artifact.tau, diagnostics, cfg.config_hash()).dump(2) + "\n");
  StageResult result{"cluster",
                     {cfg.clustering_path().string()},
                     Json{{"num_clusters", clustering.num_clusters}}};
  detail::write_manifest(cfg, "cluster", detail::hash_inputs({cfg.affinity_path()}), result.outputs,
                         result.extras);
  return result;
}

// stb: one shared activity topic basis per scene cluster.
inline StageResult run_stb(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  const auto models = detail::load_models(cfg, world.scenes);
  const auto trained = detail::models_as_trained(models);
  const auto artifact = affinity_from_csv(read_file(cfg.affinity_path()), cfg.affinity_path().string());
  const auto [clustering, tau] =
      clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
  StageResult result{"stb", {}, {}};
  const std::string hash = cfg.config_hash();
  for (int c = 0; c < clustering.num_clusters; ++c) {
    const auto members = clustering.members_of(c);
    std::vector<StbMember> stb_members;
    for (const auto& id : members) {
      const auto& t = *std::find_if(trained.begin(), trained.end(),
                                    [&](const TrainedScene& s) { return s.scene_id == id; });
      stb_members.push_back(StbMember{id, &t.fit.topics, t.normalization});
    }
    const SharedTopicBasis stb =
        build_stb(c, stb_members, artifact.affinity, cfg.coeff * static_cast<int>(members.size()));
    const auto path = cfg.stb_path(c);
    write_file_atomic(path, stb_to_json(stb, hash).dump(2) + "\n");
    result.outputs.push_back(path.string());
  }
  std::vector<std::filesystem::path> inputs{cfg.affinity_path(), cfg.clustering_path()};
  for (const auto& m : models) inputs.push_back(cfg.model_path(m.scene_id));
  detail::write_manifest(cfg, "stb", detail::hash_inputs(inputs), result.outputs, {});
  return result;
}

// profile: fixed-topic re-inference of every member scene's semantic clips on
// its cluster's basis.
inline StageResult run_profile(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  const auto models = detail::load_models(cfg, world.scenes);
  const auto [clustering, tau] =
      clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
  StageResult result{"profile", {}, {}};
  const std::string hash = cfg.config_hash();
  for (int c = 0; c < clustering.num_clusters; ++c) {
    const auto stb = stb_from_json(load_json(cfg.stb_path(c)), cfg.stb_path(c).string());
    std::vector<PooledClip> pooled;
    for (const auto& member : clustering.members_of(c)) {
      const auto& scene = *std::find_if(world.scenes.begin(), world.scenes.end(),
                                        [&](const SceneCorpus& s) { return s.scene_id == member; });
      const auto& model = *std::find_if(models.begin(), models.end(),
                                        [&](const SceneModel& m) { return m.scene_id == member; });
      const auto profiles =
          profile_clips_on_stb(stb, scene.semantic_clips, model.normalization, cfg.lda);
      for (const auto& p : profiles) pooled.push_back(PooledClip{p.clip_id, p.scene_id, p.gamma});
    }
    const auto path = cfg.profiles_path(c);
    write_file_atomic(path, profiles_to_json(c, pooled, hash).dump(2) + "\n");
    result.outputs.push_back(path.string());
  }
  detail::write_manifest(cfg, "profile", detail::hash_inputs({cfg.clustering_path()}),
                         result.outputs, {});
  return result;
}

namespace detail {

struct ClusterProfiles {
  int cluster_id = 0;
  std::vector<PooledClip> clips;
};

inline std::vector<ClusterProfiles> load_all_profiles(const PipelineConfig& cfg,
                                                      const SceneClustering& clustering) {
  std::vector<ClusterProfiles> out;
  for (int c = 0; c < clustering.num_clusters; ++c) {
    const auto path = cfg.profiles_path(c);
    const Json j = load_json(path);
    check_hash(config_hash_of_json_artifact(j, path.string()), cfg, path.string());
    out.push_back(ClusterProfiles{c, profiles_from_json(j, path.string())});
  }
  return out;
}

}  // namespace detail

// query: every semantic clip queries its cluster pool (other scenes only);
// ranked results truncated to the largest configured T.
inline StageResult run_query(const PipelineConfig& cfg) {
  const auto [clustering, tau] =
      clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
  const auto profiles = detail::load_all_profiles(cfg, clustering);
  int max_t = 1;
  for (int t : cfg.query_ts) max_t = std::max(max_t, t);
  std::vector<std::string> rows;
  for (const auto& cluster : profiles) {
    for (const auto& query : cluster.clips) {
      std::vector<PooledClip> pool;
      for (const auto& clip : cluster.clips) {
        if (clip.scene_id == query.scene_id) continue;
        pool.push_back(clip);
      }
      if (pool.empty()) continue;
      const RankedRetrieval ranked = query_by_example(query, pool, max_t);
      for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
        rows.push_back(query.clip_id + "," + std::to_string(r + 1) + "," +
                       ranked.entries[r].clip_id + "," + format_double(ranked.entries[r].distance));
      }
    }
  }
  write_file_atomic(cfg.retrieval_path(),
                    table_to_csv(cfg.config_hash(), "query_id,rank,clip_id,distance", rows));
  StageResult result{"query", {cfg.retrieval_path().string()}, {}};
  detail::write_manifest(cfg, "query", detail::hash_inputs({cfg.clustering_path()}), result.outputs, {});
  return result;
}

// classify: leave-one-scene-out label transfer within each cluster.
inline StageResult run_classify(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  const auto [clustering, tau] =
      clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
  const auto profiles = detail::load_all_profiles(cfg, clustering);
  const auto categories = semantic_categories(world.scenes);

  std::vector<ClusterModel> models;
  for (const auto& cluster : profiles) {
    ClusterModel model;
    model.cluster_id = cluster.cluster_id;
    model.members = clustering.members_of(cluster.cluster_id);
    model.semantic_profiles = cluster.clips;
    models.push_back(std::move(model));
  }
  const ClassificationEvaluation eval = evaluate_loso_classification(models, categories, cfg.knn_grid);
  std::vector<std::string> rows;
  for (const auto& row : eval.rows) {
    rows.push_back(row.scene_id + "," + row.clip_id + "," + row.predicted + "," + row.truth + "," +
                   std::to_string(row.chosen_k));
  }
  write_file_atomic(cfg.predictions_path(),
                    table_to_csv(cfg.config_hash(), "scene_id,clip_id,predicted,truth,chosen_k", rows));
  StageResult result{"classify", {cfg.predictions_path().string()},
                     Json{{"mean_macro_accuracy", eval.mean_macro}}};
  detail::write_manifest(cfg, "classify", detail::hash_inputs({cfg.clustering_path()}),
                         result.outputs, result.extras);
  return result;
}

// summarize: per-cluster summaries for the configured methods, lengths and
// seeded runs.
inline StageResult run_summarize(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  const auto models = detail::load_models(cfg, world.scenes);
  const auto [clustering, tau] =
      clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
  const auto profiles = detail::load_all_profiles(cfg, clustering);

  std::vector<std::string> rows;
  auto emit = [&](const std::string& method, int cluster, int n_sum, int run,
                  const SummarySet& summary, const std::vector<PooledClip>& pool) {
    std::map<std::string, std::string> scene_of;
    for (const auto& clip : pool) scene_of[clip.clip_id] = clip.scene_id;
    for (const auto& id : summary.selected) {
      rows.push_back(method + "," + std::to_string(cluster) + "," + std::to_string(n_sum) + "," +
                     std::to_string(run) + "," + id + "," + scene_of[id] + "," +
                     format_double(summary.objective));
    }
  };

  for (const auto& cluster : profiles) {
    // Scene-local profiles for the single-scene baseline.
    std::map<std::string, std::vector<PooledClip>> local_pools;
    const auto members = clustering.members_of(cluster.cluster_id);
    const bool want_ss = std::find(cfg.summary_methods.begin(), cfg.summary_methods.end(),
                                   "ss_kcenter") != cfg.summary_methods.end();
    if (want_ss) {
      for (const auto& member : members) {
        const auto& scene = *std::find_if(world.scenes.begin(), world.scenes.end(),
                                          [&](const SceneCorpus& s) { return s.scene_id == member; });
        const auto& model = *std::find_if(models.begin(), models.end(),
                                          [&](const SceneModel& m) { return m.scene_id == member; });
        DirichletPrior prior = model.prior;
        const auto local =
            infer_profiles_fixed_topics(scene.semantic_clips, model.topics, prior, cfg.lda);
        auto& pool = local_pools[member];
        for (const auto& p : local) pool.push_back(PooledClip{p.clip_id, p.scene_id, p.gamma});
      }
    }
    for (int n_sum : cfg.summary_lengths) {
      if (n_sum > static_cast<int>(cluster.clips.size())) {
        throw DomainError("summarize: summary length " + std::to_string(n_sum) +
                          " exceeds cluster pool " + std::to_string(cluster.clips.size()));
      }
      for (const auto& method : cfg.summary_methods) {
        if (method == "ncut") {
          emit(method, cluster.cluster_id, n_sum, 0, summarize_ncut(cluster.clips, n_sum),
               cluster.clips);
          continue;
        }
        for (int run = 0; run < cfg.summary_runs; ++run) {
          const std::uint64_t run_seed =
              derive_seed(cfg.seed, "summary:" + std::to_string(cluster.cluster_id) + ":" +
                                        method + ":" + std::to_string(run));
          if (method == "kcenter") {
            emit(method, cluster.cluster_id, n_sum, run,
                 summarize_kcenter(cluster.clips, n_sum, run_seed), cluster.clips);
          } else if (method == "random") {
            emit(method, cluster.cluster_id, n_sum, run,
                 summarize_random(cluster.clips, n_sum, run_seed), cluster.clips);
          } else if (method == "ss_kcenter") {
            std::vector<int> sizes;
            for (const auto& member : members) {
              sizes.push_back(static_cast<int>(local_pools[member].size()));
            }
            const auto shares = proportional_split(sizes, n_sum);
            SummarySet combined;
            for (std::size_t m = 0; m < members.size(); ++m) {
              if (shares[m] == 0) continue;
              const auto part = summarize_kcenter(local_pools[members[m]], shares[m],
                                                  derive_seed(run_seed, "ss:" + members[m]));
              combined.selected.insert(combined.selected.end(), part.selected.begin(),
                                       part.selected.end());
            }
            std::map<std::string, int> pool_index;
            for (std::size_t i = 0; i < cluster.clips.size(); ++i) {
              pool_index[cluster.clips[i].clip_id] = static_cast<int>(i);
            }
            std::vector<int> indices;
            for (const auto& id : combined.selected) indices.push_back(pool_index.at(id));
            combined.objective = maxmin_objective(cluster.clips, indices);
            emit(method, cluster.cluster_id, n_sum, run, combined, cluster.clips);
          } else {
            throw DomainError("summarize: unknown method " + method);
          }
        }
      }
    }
  }
  write_file_atomic(cfg.summaries_path(),
                    table_to_csv(cfg.config_hash(),
                                 "method,cluster_id,n_sum,run,clip_id,scene_id,objective", rows));
  StageResult result{"summarize", {cfg.summaries_path().string()}, {}};
  detail::write_manifest(cfg, "summarize", detail::hash_inputs({cfg.clustering_path()}),
                         result.outputs, {});
  return result;
}

// evaluate: metric tables from the task artifacts plus alignment stability,
// new-scene association and clustering quality against ground truth. Refuses
// inputs whose config hash differs from the current configuration.
inline StageResult run_evaluate(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  detail::check_hash(world.config_hash, cfg, cfg.world_manifest_path().string());
  const auto categories = semantic_categories(world.scenes);
  const std::string hash = cfg.config_hash();
  StageResult result{"evaluate", {}, Json::object()};

  // Retrieval -> MAP curve.
  {
    const auto table = csv_from_string(read_file(cfg.retrieval_path()), cfg.retrieval_path().string());
    detail::check_hash(table.config_hash, cfg, cfg.retrieval_path().string());
    std::map<std::string, RankedRetrieval> by_query;
    for (const auto& row : table.rows) {
      auto& r = by_query[row[0]];
      r.query_id = row[0];
      r.entries.push_back(RetrievalEntry{row[2], "", std::stod(row[3])});
    }
    std::vector<RankedRetrieval> retrievals;
    for (auto& [id, r] : by_query) retrievals.push_back(std::move(r));
    const MapCurve curve = map_at_T(retrievals, categories, cfg.query_ts);
    std::vector<std::string> rows;
    for (std::size_t i = 0; i < curve.t_values.size(); ++i) {
      rows.push_back("scm," + std::to_string(curve.t_values[i]) + "," +
                     format_double(curve.map_values[i]));
    }
    const auto path = cfg.dir() / "map_curve.csv";
    write_file_atomic(path, table_to_csv(hash, "model,T,map", rows));
    result.outputs.push_back(path.string());
  }

  // Predictions -> per-scene and per-category accuracy.
  {
    const auto table =
        csv_from_string(read_file(cfg.predictions_path()), cfg.predictions_path().string());
    detail::check_hash(table.config_hash, cfg, cfg.predictions_path().string());
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> per_scene;
    for (const auto& row : table.rows) per_scene[row[0]].emplace_back(row[2], row[3]);
    std::vector<std::string> rows;
    KahanSum macro_sum;
    for (const auto& [scene, pairs] : per_scene) {
      const AccuracyReport report = classification_accuracy(pairs);
      macro_sum.add(report.macro);
      rows.push_back("scm," + scene + ",__macro__," + format_double(report.macro));
      for (const auto& [cat, acc] : report.per_category) {
        rows.push_back("scm," + scene + "," + cat + "," + format_double(acc));
      }
    }
    const double mean_macro =
        per_scene.empty() ? 0.0 : macro_sum.value() / static_cast<double>(per_scene.size());
    rows.push_back("scm,__all__,__macro__," + format_double(mean_macro));
    const auto path = cfg.dir() / "accuracy.csv";
    write_file_atomic(path, table_to_csv(hash, "model,scene,category,accuracy", rows));
    result.outputs.push_back(path.string());
    result.extras["mean_macro_accuracy"] = mean_macro;
  }

  // Summaries -> coverage mean/sd per method, cluster and length.
  {
    const auto table = csv_from_string(read_file(cfg.summaries_path()), cfg.summaries_path().string());
    detail::check_hash(table.config_hash, cfg, cfg.summaries_path().string());
    const auto [clustering, tau] =
        clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
    const auto profiles = detail::load_all_profiles(cfg, clustering);
    std::map<int, std::vector<std::string>> pool_ids;
    for (const auto& cluster : profiles) {
      for (const auto& clip : cluster.clips) pool_ids[cluster.cluster_id].push_back(clip.clip_id);
    }
    // (method, cluster, n_sum, run) -> clip ids
    std::map<std::tuple<std::string, int, int, int>, SummarySet> summaries;
    for (const auto& row : table.rows) {
      summaries[{row[0], std::stoi(row[1]), std::stoi(row[2]), std::stoi(row[3])}].selected.push_back(
          row[4]);
    }
    std::map<std::tuple<std::string, int, int>, std::vector<double>> coverages;
    for (const auto& [key, summary] : summaries) {
      const auto& [method, cluster, n_sum, run] = key;
      coverages[{method, cluster, n_sum}].push_back(
          behavior_coverage(summary, categories, pool_ids.at(cluster)));
    }
    std::vector<std::string> rows;
    for (const auto& [key, values] : coverages) {
      const auto& [method, cluster, n_sum] = key;
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(values.size());
      rows.push_back(method + "," + std::to_string(cluster) + "," + std::to_string(n_sum) + "," +
                     format_double(mean) + "," + format_double(std::sqrt(var)));
    }
    const auto path = cfg.dir() / "coverage.csv";
    write_file_atomic(path, table_to_csv(hash, "method,cluster_id,n_sum,mean,sd", rows));
    result.outputs.push_back(path.string());
  }

  // Alignment stability report.
  {
    const StabilityReport report = alignment_stability(
        world.scenes, cfg.stability_fraction, cfg.stability_runs, derive_seed(cfg.seed, "stability"));
    std::vector<std::string> rows;
    for (const auto& e : report.pairs) {
      rows.push_back(e.scene_a + "," + e.scene_b + "," + format_double(e.s_ref) + "," +
                     format_double(e.dx_ref) + "," + format_double(e.dy_ref) + "," +
                     format_double(e.rmse_s) + "," + format_double(e.rmse_dx) + "," +
                     format_double(e.rmse_dy));
    }
    const auto path = cfg.dir() / "stability.csv";
    write_file_atomic(
        path, table_to_csv(hash, "scene_a,scene_b,s_ref,dx_ref,dy_ref,rmse_s,rmse_dx,rmse_dy", rows));
    result.outputs.push_back(path.string());
  }

  // New-scene association (hold each scene out of its cluster).
  {
    const auto models = detail::load_models(cfg, world.scenes);
    const auto trained = detail::models_as_trained(models);
    const auto artifact =
        affinity_from_csv(read_file(cfg.affinity_path()), cfg.affinity_path().string());
    const auto [clustering, tau] =
        clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
    const AssociationOutcome outcome = evaluate_new_scene_association(
        world.scenes, trained, clustering, artifact.affinity, tau, cfg.coeff);
    std::vector<std::string> rows;
    for (const auto& row : outcome.rows) {
      std::string distances;
      for (double d : row.distances) distances += ";" + format_double(d);
      rows.push_back(row.scene_id + "," + std::to_string(row.true_cluster) + "," +
                     std::to_string(row.predicted_cluster) + "," +
                     (distances.empty() ? "" : distances.substr(1)));
    }
    const auto path = cfg.dir() / "association.csv";
    write_file_atomic(path,
                      table_to_csv(hash, "scene_id,true_cluster,predicted_cluster,distances", rows));
    result.outputs.push_back(path.string());
    result.extras["association_all_correct"] = outcome.all_correct;

    if (world.truth.has_value()) {
      std::map<std::string, int> truth_partition(world.truth->scene_clusters.begin(),
                                                 world.truth->scene_clusters.end());
      result.extras["clustering_rand_index"] =
          rand_index(clustering.partition(), truth_partition);
    }
  }

  detail::write_manifest(cfg, "evaluate",
                         detail::hash_inputs({cfg.retrieval_path(), cfg.predictions_path(),
                                              cfg.summaries_path(), cfg.clustering_path()}),
                         result.outputs, result.extras);
  return result;
}

// sweep: classification accuracy of the scene-cluster vs flat model as the
// basis size coefficient varies.
inline StageResult run_sweep(const PipelineConfig& cfg) {
  const auto world = detail::load_world(cfg);
  const auto models = detail::load_models(cfg, world.scenes);
  const auto trained = detail::models_as_trained(models);
  const auto artifact = affinity_from_csv(read_file(cfg.affinity_path()), cfg.affinity_path().string());
  const auto [clustering, tau] =
      clustering_from_json(load_json(cfg.clustering_path()), cfg.clustering_path().string());
  const auto rows_data = stb_sweep(world.scenes, trained, clustering, artifact.affinity,
                                   cfg.sweep_coeffs, cfg.knn_grid, cfg.lda);
  std::vector<std::string> rows;
  for (const auto& r : rows_data) {
    rows.push_back(std::to_string(r.coeff) + "," + format_double(r.scm_macro) + "," +
                   format_double(r.fm_macro));
  }
  const auto path = cfg.dir() / "sweep.csv";
  write_file_atomic(path, table_to_csv(cfg.config_hash(), "coeff,scm_accuracy,fm_accuracy", rows));
  StageResult result{"sweep", {path.string()}, {}};
  detail::write_manifest(cfg, "sweep", detail::hash_inputs({cfg.clustering_path()}), result.outputs, {});
  return result;
}

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen",     "train",    "affinity",  "cluster",
                                              "stb",     "profile",  "query",     "classify",
                                              "summarize", "evaluate", "sweep"};
  return names;
}

inline StageResult run_stage(const std::string& stage, const PipelineConfig& cfg) {
  cfg.validate();
  if (stage == "gen") return run_gen(cfg);
  if (stage == "train") return run_train(cfg);
  if (stage == "affinity") return run_affinity(cfg);
  if (stage == "cluster") return run_cluster(cfg);
  if (stage == "stb") return run_stb(cfg);
  if (stage == "profile") return run_profile(cfg);
  if (stage == "query") return run_query(cfg);
  if (stage == "classify") return run_classify(cfg);
  if (stage == "summarize") return run_summarize(cfg);
  if (stage == "evaluate") return run_evaluate(cfg);
  if (stage == "sweep") return run_sweep(cfg);
  throw DomainError("unknown stage: " + stage);
}

}  // namespace pipeline

}  // namespace scenemesh
