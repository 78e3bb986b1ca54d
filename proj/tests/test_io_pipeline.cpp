#include <gtest/gtest.h>

#include <filesystem>

#include "scenemesh/io.hpp"
#include "scenemesh/pipeline.hpp"
#include "scenemesh/synthetic.hpp"

using namespace scenemesh;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("scenemesh_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

PipelineConfig small_config(const fs::path& run_dir, std::uint64_t seed = 3) {
  PipelineConfig cfg;
  cfg.run_dir = run_dir.string();
  cfg.world_preset = "two_cluster_tasks";
  cfg.seed = seed;
  cfg.k_local = 6;
  cfg.coeff = 3;
  cfg.cluster_mode = "fixed";
  cfg.num_clusters = 2;
  cfg.training_clips = 40;
  cfg.semantic_clips = 30;
  cfg.query_ts = {1, 5, 10};
  cfg.summary_lengths = {6, 8};
  cfg.summary_runs = 3;
  cfg.stability_runs = 3;
  cfg.sweep_coeffs = {3};
  cfg.jobs = 2;
  return cfg;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
    }
  }
  return files;
}

}  // namespace

TEST(IoRoundTrip, SceneCorpus) {
  const auto spec = presets::two_topic(5);
  const SyntheticWorld world = generate_synthetic_world(spec);
  const Json j = scene_to_json(world.scenes[0]);
  const SceneCorpus loaded = scene_from_json(j, "test");
  EXPECT_EQ(loaded.scene_id, world.scenes[0].scene_id);
  ASSERT_EQ(loaded.training_clips.size(), world.scenes[0].training_clips.size());
  for (std::size_t i = 0; i < loaded.training_clips.size(); ++i) {
    EXPECT_EQ(loaded.training_clips[i].clip_id, world.scenes[0].training_clips[i].clip_id);
    EXPECT_EQ(loaded.training_clips[i].counts, world.scenes[0].training_clips[i].counts);
  }
  EXPECT_EQ(loaded.annotations.size(), world.scenes[0].annotations.size());
  // Serialization itself is deterministic.
  EXPECT_EQ(j.dump(2), scene_to_json(loaded).dump(2));
}

TEST(IoRoundTrip, SceneModelBitExact) {
  const auto spec = presets::two_topic(9);
  const SyntheticWorld world = generate_synthetic_world(spec);
  LdaConfig lda;
  lda.seed = 11;
  LdaFit fit = fit_lda(world.scenes[0].training_clips, world.scenes[0].grid, 2, lda);
  SceneModel model;
  model.scene_id = "s00";
  model.topics = fit.topics;
  model.prior = fit.prior;
  model.normalization = estimate_normalization(world.scenes[0]);
  model.elbo_trace = fit.elbo_trace;
  model.config = lda;
  const Json j = model_to_json(model, "deadbeef");
  const SceneModel loaded = model_from_json(j, "test");
  ASSERT_EQ(loaded.topics.topics.size(), model.topics.topics.size());
  for (std::size_t k = 0; k < model.topics.topics.size(); ++k) {
    for (std::size_t v = 0; v < model.topics.topics[k].size(); ++v) {
      EXPECT_EQ(loaded.topics.topics[k][v], model.topics.topics[k][v]);  // bit-exact
    }
  }
  EXPECT_EQ(loaded.normalization.scale, model.normalization.scale);
  EXPECT_EQ(loaded.elbo_trace, model.elbo_trace);
}

TEST(IoRoundTrip, StbPreservesProvenance) {
  const GridSpec grid{4, 4, 2, 5};
  SharedTopicBasis stb;
  stb.cluster_id = 2;
  stb.reference_scene = "s01";
  stb.reference_normalization = SceneTransform{1.25, 0.0, -0.5, 0.75};
  stb.to_reference["s01"] = SceneTransform{};
  stb.to_reference["s02"] = SceneTransform{0.8, 0.0, 0.1, -0.2};
  stb.grid = grid;
  std::vector<double> t(static_cast<std::size_t>(grid.vocab_size()), 0.0);
  t[3] = 1.0;
  stb.topics = {t};
  stb.provenance = {{StbTopicSource{"s01", 0}, StbTopicSource{"s02", 3}}};
  const SharedTopicBasis loaded = stb_from_json(stb_to_json(stb, "h"), "test");
  EXPECT_EQ(loaded.reference_scene, "s01");
  ASSERT_EQ(loaded.provenance.size(), 1u);
  EXPECT_EQ(loaded.provenance[0], stb.provenance[0]);
  EXPECT_EQ(loaded.to_reference.at("s02").scale, 0.8);
}

TEST(IoRoundTrip, AffinityCsv) {
  AffinityMatrix affinity;
  affinity.scene_ids = {"a", "b", "c"};
  affinity.values = Eigen::MatrixXd(3, 3);
  affinity.values << 1.0, 0.5, 0.25, 0.5, 1.0, 1.0 / 3.0, 0.25, 1.0 / 3.0, 1.0;
  const std::string csv = affinity_to_csv(affinity, 0.0123, "cafe");
  const AffinityArtifact loaded = affinity_from_csv(csv, "test");
  EXPECT_EQ(loaded.config_hash, "cafe");
  EXPECT_DOUBLE_EQ(loaded.tau, 0.0123);
  EXPECT_EQ(loaded.affinity.scene_ids, affinity.scene_ids);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(loaded.affinity.values(i, j), affinity.values(i, j));
  }
}

TEST(IoErrors, MalformedCsvRejected) {
  EXPECT_THROW(affinity_from_csv("scene,a\na,1.0\n", "t"), ParseError);  // no hash comment
  EXPECT_THROW(affinity_from_csv("# config_hash=x tau=0.1\nscene,a,b\na,1.0,0.5\n", "t"),
               ParseError);  // truncated matrix
  EXPECT_THROW(affinity_from_csv("# config_hash=x tau=0.1\nscene,a\nb,1.0\n", "t"),
               ParseError);  // row label mismatch
  EXPECT_THROW(csv_from_string("# config_hash=x\nh1,h2\nv1\n", "t"), ParseError);  // ragged row
  const CsvTable ok = csv_from_string("# config_hash=abc\nh1,h2\nv1,v2\n", "t");
  EXPECT_EQ(ok.config_hash, "abc");
  ASSERT_EQ(ok.rows.size(), 1u);
  EXPECT_EQ(ok.rows[0][1], "v2");
}

TEST(IoErrors, TruncatedAndWrongKind) {
  TempDir dir("io_errors");
  const auto path = dir.path() / "broken.json";
  write_file_atomic(path, "{\"schema_version\": 1, \"kind\": \"scene_model\"");
  EXPECT_THROW(load_json(path), ParseError);
  write_file_atomic(path, "{\"schema_version\": 99, \"kind\": \"scene_model\"}");
  EXPECT_THROW(model_from_json(load_json(path), path.string()), ParseError);
  write_file_atomic(path, "{\"schema_version\": 1, \"kind\": \"other\"}");
  EXPECT_THROW(model_from_json(load_json(path), path.string()), ParseError);
  EXPECT_THROW(read_file(dir.path() / "does_not_exist.json"), IoError);
}

TEST(Pipeline, FullRunProducesArtifactsAndIsByteIdentical) {
  TempDir dir("pipeline_full");
  const PipelineConfig cfg = small_config(dir.path() / "run");
  for (const char* stage : {"gen", "train", "affinity", "cluster", "stb", "profile", "query",
                            "classify", "summarize", "evaluate", "sweep"}) {
    const auto result = pipeline::run_stage(stage, cfg);
    EXPECT_FALSE(result.outputs.empty()) << stage;
  }
  for (const char* artifact :
       {"world/world.json", "affinity.csv", "clustering.json", "stb_0.json", "profiles_0.json",
        "retrieval.csv", "predictions.csv", "summaries.csv", "map_curve.csv", "accuracy.csv",
        "coverage.csv", "stability.csv", "association.csv", "sweep.csv", "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "run" / artifact)) << artifact;
  }
  const auto before = snapshot(dir.path() / "run");
  for (const char* stage : {"gen", "train", "affinity", "cluster", "stb", "profile", "query",
                            "classify", "summarize", "evaluate", "sweep"}) {
    pipeline::run_stage(stage, cfg);
  }
  const auto after = snapshot(dir.path() / "run");
  EXPECT_EQ(before.size(), after.size());
  for (const auto& [file, content] : before) {
    ASSERT_TRUE(after.count(file)) << file;
    EXPECT_EQ(content, after.at(file)) << file << " changed across reruns";
  }
}

TEST(Pipeline, MissingInputsRaiseIoError) {
  TempDir dir("pipeline_missing");
  const PipelineConfig cfg = small_config(dir.path() / "run");
  EXPECT_THROW(pipeline::run_stage("train", cfg), IoError);
  EXPECT_THROW(pipeline::run_stage("affinity", cfg), IoError);
  EXPECT_THROW(pipeline::run_stage("evaluate", cfg), IoError);
}

TEST(Pipeline, InvalidConfigRejected) {
  TempDir dir("pipeline_config");
  PipelineConfig cfg = small_config(dir.path() / "run");
  cfg.coeff = cfg.k_local + 1;
  EXPECT_THROW(pipeline::run_stage("gen", cfg), DomainError);
  PipelineConfig bad_mode = small_config(dir.path() / "run2");
  bad_mode.cluster_mode = "sideways";
  EXPECT_THROW(pipeline::run_stage("gen", bad_mode), DomainError);
  PipelineConfig bad_preset = small_config(dir.path() / "run3");
  bad_preset.world_preset = "no_such_world";
  EXPECT_THROW(pipeline::run_stage("gen", bad_preset), DomainError);
}

TEST(Pipeline, EvaluateRefusesMixedConfigHash) {
  TempDir dir("pipeline_hash");
  PipelineConfig cfg = small_config(dir.path() / "run");
  for (const char* stage : {"gen", "train", "affinity", "cluster", "stb", "profile", "query",
                            "classify", "summarize"}) {
    pipeline::run_stage(stage, cfg);
  }
  PipelineConfig drifted = cfg;
  drifted.coeff = 2;  // different config hash, same artifacts on disk
  EXPECT_THROW(pipeline::run_stage("evaluate", drifted), ParseError);
  EXPECT_NO_THROW(pipeline::run_stage("evaluate", cfg));
}

TEST(Pipeline, CorruptModelFailsCleanly) {
  TempDir dir("pipeline_corrupt");
  const PipelineConfig cfg = small_config(dir.path() / "run");
  pipeline::run_stage("gen", cfg);
  pipeline::run_stage("train", cfg);
  const auto model_path = cfg.model_path("s00");
  Json j = load_json(model_path);
  j["beta"][0][0] = -1.0;
  write_file_atomic(model_path, j.dump(2) + "\n");
  EXPECT_THROW(pipeline::run_stage("affinity", cfg), DomainError);
  write_file_atomic(model_path, read_file(model_path).substr(0, 60));
  EXPECT_THROW(pipeline::run_stage("affinity", cfg), ParseError);
}

TEST(Pipeline, TrainArtifactsIndependentOfWorkerCount) {
  TempDir dir("pipeline_jobs");
  PipelineConfig serial = small_config(dir.path() / "serial");
  serial.jobs = 1;
  PipelineConfig parallel = small_config(dir.path() / "parallel");
  parallel.jobs = 2;
  for (const auto* cfg : {&serial, &parallel}) {
    pipeline::run_stage("gen", *cfg);
    pipeline::run_stage("train", *cfg);
  }
  for (const auto& scene : {"s00", "s01", "s02", "s03", "s04", "s05"}) {
    EXPECT_EQ(read_file(serial.model_path(scene)), read_file(parallel.model_path(scene)))
        << scene;
  }
}

TEST(Pipeline, ConfigHashStableAndJobIndependent) {
  PipelineConfig a = small_config("runA");
  PipelineConfig b = small_config("runB");  // run_dir differs, hash must not
  b.jobs = 1;
  EXPECT_EQ(a.config_hash(), b.config_hash());
  PipelineConfig c = a;
  c.coeff = 2;
  EXPECT_NE(a.config_hash(), c.config_hash());
}

TEST(Pipeline, ConfigJsonRoundTrip) {
  PipelineConfig cfg = small_config("somewhere", 17);
  cfg.tau = TauPolicy::fixed(0.02);
  cfg.cluster_mode = "auto";
  const Json j = cfg.to_json();
  const PipelineConfig loaded = PipelineConfig::from_json(j, "test");
  EXPECT_EQ(loaded.config_hash(), cfg.config_hash());
  EXPECT_EQ(loaded.world_preset, cfg.world_preset);
  EXPECT_EQ(loaded.seed, cfg.seed);
  EXPECT_EQ(loaded.summary_lengths, cfg.summary_lengths);
}
