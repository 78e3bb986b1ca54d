#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scenemesh/clustering.hpp"
#include "scenemesh/common.hpp"
#include "scenemesh/corpus.hpp"
#include "scenemesh/eval.hpp"
#include "scenemesh/relatedness.hpp"
#include "scenemesh/synthetic.hpp"
#include "scenemesh/tasks.hpp"
#include "scenemesh/topic_model.hpp"

namespace scenemesh {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing input: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Write-to-temp plus atomic rename; no partial artifact survives a failure.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + tmp.string());
    out << content;
    if (!out) throw IoError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string hash_content(std::string_view content) { return to_hex(fnv1a64(content)); }

inline std::string hash_file(const std::filesystem::path& path) {
  return hash_content(read_file(path));
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

inline Json parse_json(const std::string& text, const std::string& origin) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("invalid JSON in " + origin);
  return j;
}

inline Json load_json(const std::filesystem::path& path) {
  return parse_json(read_file(path), path.string());
}

inline const Json& require_key(const Json& j, const char* key, const std::string& origin) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(origin + ": missing key '" + key + "'");
  return *it;
}

inline void check_schema(const Json& j, const char* kind, const std::string& origin) {
  const int version = require_key(j, "schema_version", origin).get<int>();
  if (version != kSchemaVersion) {
    throw ParseError(origin + ": unsupported schema_version " + std::to_string(version));
  }
  const std::string k = require_key(j, "kind", origin).get<std::string>();
  if (k != kind) throw ParseError(origin + ": expected kind '" + kind + "', found '" + k + "'");
}

// ---------------------------------------------------------------------------
// Core type serialization
// ---------------------------------------------------------------------------

inline Json grid_to_json(const GridSpec& grid) {
  return Json{{"na", grid.cells_x}, {"nb", grid.cells_y}, {"nm", grid.directions}, {"h", grid.cell_pixels}};
}

inline GridSpec grid_from_json(const Json& j, const std::string& origin) {
  GridSpec grid;
  grid.cells_x = require_key(j, "na", origin).get<int>();
  grid.cells_y = require_key(j, "nb", origin).get<int>();
  grid.directions = require_key(j, "nm", origin).get<int>();
  grid.cell_pixels = require_key(j, "h", origin).get<int>();
  grid.validate();
  return grid;
}

inline Json transform_to_json(const SceneTransform& t) {
  return Json{{"scale", t.scale}, {"rotation", t.rotation}, {"tx", t.tx}, {"ty", t.ty}};
}

inline SceneTransform transform_from_json(const Json& j, const std::string& origin) {
  SceneTransform t;
  t.scale = require_key(j, "scale", origin).get<double>();
  t.rotation = require_key(j, "rotation", origin).get<double>();
  t.tx = require_key(j, "tx", origin).get<double>();
  t.ty = require_key(j, "ty", origin).get<double>();
  t.validate();
  return t;
}

inline Json clip_to_json(const ClipDocument& clip) {
  Json counts = Json::array();
  for (const auto& [w, c] : clip.counts) counts.push_back(Json::array({w, c}));
  return Json{{"id", clip.clip_id}, {"counts", std::move(counts)}};
}

inline ClipDocument clip_from_json(const Json& j, const std::string& scene_id,
                                   const std::string& origin) {
  ClipDocument clip;
  clip.clip_id = require_key(j, "id", origin).get<std::string>();
  clip.scene_id = scene_id;
  for (const auto& pair : require_key(j, "counts", origin)) {
    if (!pair.is_array() || pair.size() != 2) throw ParseError(origin + ": malformed count pair");
    clip.counts.emplace_back(pair[0].get<int>(), pair[1].get<int>());
  }
  return clip;
}

// Scene corpus file: {scene_id, grid, clips (training), semantic_clips,
// annotations {clip_id: [tags]}}; counts sorted by word id.
inline Json scene_to_json(const SceneCorpus& scene) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "scene_corpus";
  j["scene_id"] = scene.scene_id;
  j["grid"] = grid_to_json(scene.grid);
  Json clips = Json::array();
  for (const auto& clip : scene.training_clips) clips.push_back(clip_to_json(clip));
  j["clips"] = std::move(clips);
  Json semantic = Json::array();
  for (const auto& clip : scene.semantic_clips) semantic.push_back(clip_to_json(clip));
  j["semantic_clips"] = std::move(semantic);
  Json annotations = Json::object();
  for (const auto& [clip_id, label] : scene.annotations) annotations[clip_id] = label.tags;
  j["annotations"] = std::move(annotations);
  return j;
}

inline SceneCorpus scene_from_json(const Json& j, const std::string& origin) {
  check_schema(j, "scene_corpus", origin);
  SceneCorpus scene;
  scene.scene_id = require_key(j, "scene_id", origin).get<std::string>();
  scene.grid = grid_from_json(require_key(j, "grid", origin), origin);
  for (const auto& c : require_key(j, "clips", origin)) {
    scene.training_clips.push_back(clip_from_json(c, scene.scene_id, origin));
  }
  for (const auto& c : require_key(j, "semantic_clips", origin)) {
    scene.semantic_clips.push_back(clip_from_json(c, scene.scene_id, origin));
  }
  for (const auto& [clip_id, tags] : require_key(j, "annotations", origin).items()) {
    scene.annotations[clip_id] = BehaviorLabel::from_tags(tags.get<std::vector<std::string>>());
  }
  scene.validate();
  return scene;
}

inline Json ground_truth_to_json(const WorldGroundTruth& truth) {
  Json j;
  j["num_clusters"] = truth.num_clusters;
  j["scene_clusters"] = truth.scene_clusters;
  Json scenes = Json::object();
  for (const auto& [scene_id, gt] : truth.scenes) {
    Json activities = Json::array();
    for (const auto& activity : gt.activities) {
      activities.push_back(Json{{"tag", activity.tag}, {"weights", activity.weights}});
    }
    scenes[scene_id] = Json{{"cluster", gt.cluster_index},
                            {"transform", transform_to_json(gt.true_transform)},
                            {"activities", std::move(activities)}};
  }
  j["scenes"] = std::move(scenes);
  Json labels = Json::object();
  for (const auto& [clip_id, label] : truth.clip_labels) labels[clip_id] = label.tags;
  j["clip_labels"] = std::move(labels);
  return j;
}

inline WorldGroundTruth ground_truth_from_json(const Json& j, const std::string& origin) {
  WorldGroundTruth truth;
  truth.num_clusters = require_key(j, "num_clusters", origin).get<int>();
  truth.scene_clusters =
      require_key(j, "scene_clusters", origin).get<std::map<std::string, int>>();
  for (const auto& [scene_id, gt] : require_key(j, "scenes", origin).items()) {
    SceneGroundTruth scene;
    scene.cluster_index = require_key(gt, "cluster", origin).get<int>();
    scene.true_transform = transform_from_json(require_key(gt, "transform", origin), origin);
    for (const auto& activity : require_key(gt, "activities", origin)) {
      PlantedActivity planted;
      planted.tag = require_key(activity, "tag", origin).get<std::string>();
      planted.weights = require_key(activity, "weights", origin).get<std::vector<double>>();
      scene.activities.push_back(std::move(planted));
    }
    truth.scenes[scene_id] = std::move(scene);
  }
  for (const auto& [clip_id, tags] : require_key(j, "clip_labels", origin).items()) {
    truth.clip_labels[clip_id] = BehaviorLabel::from_tags(tags.get<std::vector<std::string>>());
  }
  return truth;
}

// World manifest: scene file list plus optional ground truth.
inline Json world_manifest_to_json(const std::vector<std::string>& scene_files,
                                   const std::optional<WorldGroundTruth>& truth,
                                   const std::string& config_hash, std::uint64_t seed) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "world_manifest";
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["scenes"] = scene_files;
  if (truth.has_value()) j["ground_truth"] = ground_truth_to_json(*truth);
  return j;
}

// Per-scene model file: topics, prior, seed and the training configuration.
struct SceneModel {
  std::string scene_id;
  TopicMatrix topics;
  DirichletPrior prior;
  SceneTransform normalization;
  std::vector<double> elbo_trace;
  LdaConfig config;
};

inline Json model_to_json(const SceneModel& model, const std::string& config_hash) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "scene_model";
  j["config_hash"] = config_hash;
  j["scene_id"] = model.scene_id;
  j["K"] = model.topics.num_topics();
  j["alpha"] = model.prior.alpha;
  j["grid"] = grid_to_json(model.topics.grid);
  j["beta"] = model.topics.topics;
  j["normalization"] = transform_to_json(model.normalization);
  j["elbo_trace"] = model.elbo_trace;
  j["seed"] = model.config.seed;
  j["config"] = Json{{"max_em_iters", model.config.max_em_iters},
                     {"e_step_iters", model.config.e_step_iters},
                     {"tol", model.config.tol},
                     {"e_step_tol", model.config.e_step_tol},
                     {"eta", model.config.eta},
                     {"restarts", model.config.restarts}};
  return j;
}

inline SceneModel model_from_json(const Json& j, const std::string& origin) {
  check_schema(j, "scene_model", origin);
  SceneModel model;
  model.scene_id = require_key(j, "scene_id", origin).get<std::string>();
  model.topics.grid = grid_from_json(require_key(j, "grid", origin), origin);
  model.topics.topics = require_key(j, "beta", origin).get<std::vector<std::vector<double>>>();
  model.prior.alpha = require_key(j, "alpha", origin).get<std::vector<double>>();
  model.normalization = transform_from_json(require_key(j, "normalization", origin), origin);
  model.elbo_trace = require_key(j, "elbo_trace", origin).get<std::vector<double>>();
  const auto& cfg = require_key(j, "config", origin);
  model.config.max_em_iters = require_key(cfg, "max_em_iters", origin).get<int>();
  model.config.e_step_iters = require_key(cfg, "e_step_iters", origin).get<int>();
  model.config.tol = require_key(cfg, "tol", origin).get<double>();
  model.config.e_step_tol = require_key(cfg, "e_step_tol", origin).get<double>();
  model.config.eta = require_key(cfg, "eta", origin).get<double>();
  model.config.restarts = require_key(cfg, "restarts", origin).get<int>();
  model.config.seed = require_key(j, "seed", origin).get<std::uint64_t>();
  if (require_key(j, "K", origin).get<int>() != model.topics.num_topics()) {
    throw ParseError(origin + ": K does not match beta rows");
  }
  model.topics.validate();
  model.prior.validate();
  return model;
}

inline Json clustering_to_json(const SceneClustering& clustering, double tau,
                               const AutoKDiagnostics& diagnostics,
                               const std::string& config_hash) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "scene_clustering";
  j["config_hash"] = config_hash;
  j["mode"] = clustering.mode == ClusterMode::Auto ? "auto" : "fixed";
  j["num_clusters"] = clustering.num_clusters;
  j["partition"] = clustering.partition();
  j["tau"] = tau;
  j["auto_candidates"] = diagnostics.candidates;
  j["auto_rotation_costs"] = diagnostics.rotation_costs;
  return j;
}

inline std::pair<SceneClustering, double> clustering_from_json(const Json& j,
                                                               const std::string& origin) {
  check_schema(j, "scene_clustering", origin);
  SceneClustering clustering;
  clustering.mode = require_key(j, "mode", origin).get<std::string>() == "auto"
                        ? ClusterMode::Auto
                        : ClusterMode::FixedK;
  clustering.num_clusters = require_key(j, "num_clusters", origin).get<int>();
  for (const auto& [scene, label] : require_key(j, "partition", origin).items()) {
    clustering.scene_ids.push_back(scene);
    clustering.labels.push_back(label.get<int>());
  }
  clustering.validate();
  return {clustering, require_key(j, "tau", origin).get<double>()};
}

inline Json stb_to_json(const SharedTopicBasis& stb, const std::string& config_hash) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "shared_topic_basis";
  j["config_hash"] = config_hash;
  j["cluster_id"] = stb.cluster_id;
  j["s_ref"] = stb.reference_scene;
  j["reference_normalization"] = transform_to_json(stb.reference_normalization);
  Json transforms = Json::object();
  for (const auto& [scene, t] : stb.to_reference) transforms[scene] = transform_to_json(t);
  j["transforms"] = std::move(transforms);
  j["grid"] = grid_to_json(stb.grid);
  j["topics"] = stb.topics;
  Json provenance = Json::array();
  for (const auto& group : stb.provenance) {
    Json members = Json::array();
    for (const auto& src : group) {
      members.push_back(Json{{"scene", src.scene_id}, {"topic", src.topic_index}});
    }
    provenance.push_back(std::move(members));
  }
  j["provenance"] = std::move(provenance);
  return j;
}

inline SharedTopicBasis stb_from_json(const Json& j, const std::string& origin) {
  check_schema(j, "shared_topic_basis", origin);
  SharedTopicBasis stb;
  stb.cluster_id = require_key(j, "cluster_id", origin).get<int>();
  stb.reference_scene = require_key(j, "s_ref", origin).get<std::string>();
  stb.reference_normalization =
      transform_from_json(require_key(j, "reference_normalization", origin), origin);
  for (const auto& [scene, t] : require_key(j, "transforms", origin).items()) {
    stb.to_reference[scene] = transform_from_json(t, origin);
  }
  stb.grid = grid_from_json(require_key(j, "grid", origin), origin);
  stb.topics = require_key(j, "topics", origin).get<std::vector<std::vector<double>>>();
  for (const auto& group : require_key(j, "provenance", origin)) {
    std::vector<StbTopicSource> members;
    for (const auto& src : group) {
      members.push_back(StbTopicSource{require_key(src, "scene", origin).get<std::string>(),
                                       require_key(src, "topic", origin).get<int>()});
    }
    stb.provenance.push_back(std::move(members));
  }
  stb.validate();
  return stb;
}

inline Json profiles_to_json(int cluster_id, const std::vector<PooledClip>& profiles,
                             const std::string& config_hash) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "stb_profiles";
  j["config_hash"] = config_hash;
  j["cluster_id"] = cluster_id;
  Json rows = Json::array();
  for (const auto& p : profiles) {
    rows.push_back(Json{{"clip_id", p.clip_id}, {"scene_id", p.scene_id}, {"gamma", p.gamma}});
  }
  j["profiles"] = std::move(rows);
  return j;
}

inline std::vector<PooledClip> profiles_from_json(const Json& j, const std::string& origin) {
  check_schema(j, "stb_profiles", origin);
  std::vector<PooledClip> out;
  for (const auto& row : require_key(j, "profiles", origin)) {
    out.push_back(PooledClip{require_key(row, "clip_id", origin).get<std::string>(),
                             require_key(row, "scene_id", origin).get<std::string>(),
                             require_key(row, "gamma", origin).get<std::vector<double>>()});
  }
  return out;
}

inline std::string config_hash_of_json_artifact(const Json& j, const std::string& origin) {
  return require_key(j, "config_hash", origin).get<std::string>();
}

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Affinity matrix: square CSV with a scene-id header row/column and a leading
// comment carrying the config hash and the inlier threshold used.
inline std::string affinity_to_csv(const AffinityMatrix& affinity, double tau,
                                   const std::string& config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << " tau=" << format_double(tau) << "\n";
  out << "scene";
  for (const auto& id : affinity.scene_ids) out << "," << id;
  out << "\n";
  for (int i = 0; i < affinity.size(); ++i) {
    out << affinity.scene_ids[static_cast<std::size_t>(i)];
    for (int jj = 0; jj < affinity.size(); ++jj) out << "," << format_double(affinity.values(i, jj));
    out << "\n";
  }
  return out.str();
}

struct AffinityArtifact {
  AffinityMatrix affinity;
  double tau = 0.0;
  std::string config_hash;
};

inline AffinityArtifact affinity_from_csv(const std::string& text, const std::string& origin) {
  AffinityArtifact artifact;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0) {
    throw ParseError(origin + ": missing config_hash comment");
  }
  {
    std::istringstream meta(line.substr(2));
    std::string field;
    while (meta >> field) {
      if (field.rfind("config_hash=", 0) == 0) artifact.config_hash = field.substr(12);
      if (field.rfind("tau=", 0) == 0) artifact.tau = std::stod(field.substr(4));
    }
  }
  if (!std::getline(in, line)) throw ParseError(origin + ": missing header");
  {
    std::istringstream header(line);
    std::string cell;
    std::getline(header, cell, ',');  // "scene"
    while (std::getline(header, cell, ',')) artifact.affinity.scene_ids.push_back(cell);
  }
  const int n = static_cast<int>(artifact.affinity.scene_ids.size());
  if (n == 0) throw ParseError(origin + ": empty affinity header");
  artifact.affinity.values = Eigen::MatrixXd(n, n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ParseError(origin + ": truncated affinity matrix");
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    if (cell != artifact.affinity.scene_ids[static_cast<std::size_t>(i)]) {
      throw ParseError(origin + ": row label mismatch");
    }
    for (int jj = 0; jj < n; ++jj) {
      if (!std::getline(row, cell, ',')) throw ParseError(origin + ": truncated affinity row");
      artifact.affinity.values(i, jj) = std::stod(cell);
    }
  }
  artifact.affinity.validate();
  return artifact;
}

// Generic CSV writer: comment line with the config hash, then header + rows.
inline std::string table_to_csv(const std::string& config_hash, const std::string& header,
                                const std::vector<std::string>& rows) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << "\n" << header << "\n";
  for (const auto& row : rows) out << row << "\n";
  return out.str();
}

struct CsvTable {
  std::string config_hash;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable csv_from_string(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty file");
  if (line.rfind("# config_hash=", 0) == 0) {
    std::istringstream meta(line.substr(2));
    std::string field;
    while (meta >> field) {
      if (field.rfind("config_hash=", 0) == 0) table.config_hash = field.substr(12);
    }
    if (!std::getline(in, line)) throw ParseError(origin + ": missing header");
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::istringstream row(s);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    return cells;
  };
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != table.header.size()) throw ParseError(origin + ": ragged CSV row");
    table.rows.push_back(std::move(cells));
  }
  return table;
}

}  // namespace scenemesh
