// fedlab command-line front end. Talks to the library strictly through the
// public C API so it doubles as a smoke test for that surface.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedlab.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(fedlab_status s) {
  if (s == FEDLAB_OK) return 0;
  if (s == FEDLAB_ERR_NUMERIC) return kExitNumeric;
  return kExitUsage;
}

int report(fedlab_status s) {
  if (s != FEDLAB_OK) std::fprintf(stderr, "error: %s\n", fedlab_last_error());
  return exit_code_for(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedlab: deterministic federated-learning simulations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fedlab_version()));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a Gaussian-blob dataset pair");
  int32_t classes = 10, dim = 32, train_per_class = 500, test_per_class = 100;
  double spread = 0.5;
  uint64_t gen_seed = 0;
  std::string train_out, test_out;
  gen->add_option("--classes", classes, "Number of classes")->capture_default_str();
  gen->add_option("--dim", dim, "Feature dimension")->capture_default_str();
  gen->add_option("--train-per-class", train_per_class, "Training samples per class")
      ->capture_default_str();
  gen->add_option("--test-per-class", test_per_class, "Test samples per class")
      ->capture_default_str();
  gen->add_option("--spread", spread, "Gaussian spread around each center")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--train-out", train_out, "Output path for the training set")->required();
  gen->add_option("--test-out", test_out, "Output path for the test set")->required();

  // run / probe share flags
  std::string config_path, out_dir;
  int64_t seed_override = -1;
  int32_t threads = 0;
  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
    cmd->add_option("--out", out_dir, "Output directory")->required();
    cmd->add_option("--seed", seed_override,
                    "Override the algorithm seed and re-derive dataset/partition seeds");
    cmd->add_option("--threads", threads, "Worker threads (0 = FEDLAB_THREADS env or 1)");
  };
  auto* run = app.add_subcommand("run", "Run a federated training experiment");
  add_run_flags(run);
  auto* probe = app.add_subcommand("probe", "Run analysis probes (degradation, encoder exchange)");
  add_run_flags(probe);

  // compare
  auto* compare = app.add_subcommand("compare", "Compare runs at a matched communication budget");
  std::vector<std::string> metrics_files;
  std::string csv_out;
  compare->add_option("metrics", metrics_files, "metrics.json files (two or more)")
      ->required()
      ->expected(-2);
  compare->add_option("--csv", csv_out, "Also write the comparison as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen->parsed()) {
    fedlab_dataset* train = nullptr;
    fedlab_dataset* test = nullptr;
    fedlab_status s = fedlab_dataset_generate_split(classes, dim, train_per_class, test_per_class,
                                                    spread, gen_seed, &train, &test);
    if (s == FEDLAB_OK) s = fedlab_dataset_save(train, train_out.c_str());
    if (s == FEDLAB_OK) s = fedlab_dataset_save(test, test_out.c_str());
    if (s == FEDLAB_OK) {
      std::printf("wrote %s (%d samples), %s (%d samples)\n", train_out.c_str(),
                  fedlab_dataset_samples(train), test_out.c_str(), fedlab_dataset_samples(test));
    }
    fedlab_dataset_free(train);
    fedlab_dataset_free(test);
    return report(s);
  }

  if (run->parsed()) {
    return report(fedlab_run_experiment(config_path.c_str(), out_dir.c_str(), seed_override,
                                        threads));
  }

  if (probe->parsed()) {
    return report(fedlab_probe_experiment(config_path.c_str(), out_dir.c_str(), seed_override,
                                          threads));
  }

  if (compare->parsed()) {
    std::vector<const char*> paths;
    for (const std::string& p : metrics_files) paths.push_back(p.c_str());
    char* table = nullptr;
    fedlab_status s = fedlab_compare_runs(paths.data(), int32_t(paths.size()),
                                          csv_out.empty() ? nullptr : csv_out.c_str(), &table);
    if (s == FEDLAB_OK && table != nullptr) std::fputs(table, stdout);
    fedlab_string_free(table);
    return report(s);
  }

  return kExitUsage;
}
