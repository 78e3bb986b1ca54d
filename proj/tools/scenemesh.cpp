// scenemesh: multi-scene activity modeling pipeline driver.
//
// Usage: scenemesh <stage> --config path [--seed n] [--jobs n] [overrides]
// Stages: gen train affinity cluster stb profile query classify summarize
//         evaluate sweep, plus `all` for the gen..evaluate sequence.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "scenemesh/pipeline.hpp"

using namespace scenemesh;

namespace {

struct CliOverrides {
  std::string config_path;
  std::string run_dir;
  std::string preset;
  std::string cluster_mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
  int k_local = 0;
  int coeff = 0;
  int num_clusters = 0;
  double tau_fixed = 0.0;
  double tau_percentile = 0.0;
};

PipelineConfig resolve_config(const CliOverrides& cli) {
  PipelineConfig cfg;
  if (!cli.config_path.empty()) {
    cfg = PipelineConfig::from_json(load_json(cli.config_path), cli.config_path);
  }
  // Flags win over the config file.
  if (!cli.run_dir.empty()) cfg.run_dir = cli.run_dir;
  if (!cli.preset.empty()) cfg.world_preset = cli.preset;
  if (cli.seed_set) cfg.seed = cli.seed;
  if (cli.jobs > 0) cfg.jobs = cli.jobs;
  if (cli.k_local > 0) cfg.k_local = cli.k_local;
  if (cli.coeff > 0) cfg.coeff = cli.coeff;
  if (!cli.cluster_mode.empty()) cfg.cluster_mode = cli.cluster_mode;
  if (cli.num_clusters > 0) cfg.num_clusters = cli.num_clusters;
  if (cli.tau_fixed > 0.0) cfg.tau = TauPolicy::fixed(cli.tau_fixed);
  if (cli.tau_percentile > 0.0) cfg.tau = TauPolicy::percentile(cli.tau_percentile);
  cfg.validate();
  return cfg;
}

int run(const std::string& stage, const CliOverrides& cli) {
  const PipelineConfig cfg = resolve_config(cli);
  if (stage == "all") {
    for (const char* s : {"gen", "train", "affinity", "cluster", "stb", "profile", "query",
                          "classify", "summarize", "evaluate"}) {
      const auto result = pipeline::run_stage(s, cfg);
      std::fprintf(stderr, "[scenemesh] stage %-9s done (%zu artifacts)\n", s,
                   result.outputs.size());
    }
    return 0;
  }
  const auto result = pipeline::run_stage(stage, cfg);
  std::fprintf(stderr, "[scenemesh] stage %s done (%zu artifacts)\n", stage.c_str(),
               result.outputs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scene surveillance activity modeling pipeline"};
  app.require_subcommand(1);

  CliOverrides cli;
  std::vector<std::string> stages = pipeline::stage_names();
  stages.push_back("all");
  std::vector<CLI::App*> subs;
  for (const auto& stage : stages) {
    CLI::App* sub = app.add_subcommand(stage, "run the '" + stage + "' stage");
    sub->add_option("--config", cli.config_path, "pipeline config JSON");
    sub->add_option("--run-dir", cli.run_dir, "artifact directory");
    sub->add_option("--preset", cli.preset, "synthetic world preset");
    sub->add_option("--seed", cli.seed, "master seed")->each([&](const std::string&) {
      cli.seed_set = true;
    });
    sub->add_option("--jobs", cli.jobs, "parallel scene workers");
    sub->add_option("--k-local", cli.k_local, "local topics per scene");
    sub->add_option("--coeff", cli.coeff, "shared-basis topics per member scene");
    sub->add_option("--mode", cli.cluster_mode, "clustering mode: fixed|auto");
    sub->add_option("--clusters", cli.num_clusters, "cluster count for fixed mode");
    sub->add_option("--tau", cli.tau_fixed, "fixed inlier threshold");
    sub->add_option("--tau-percentile", cli.tau_percentile, "adaptive inlier threshold percentile");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (subs[i]->parsed()) return run(stages[i], cli);
    }
    std::fprintf(stderr, "[scenemesh] no stage selected\n");
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "[scenemesh] io error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "[scenemesh] config/parse error: %s\n", e.what());
    return 3;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "[scenemesh] invalid input: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "[scenemesh] numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[scenemesh] error: %s\n", e.what());
    return 1;
  }
}
