#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "mdfsc/commands.hpp"
#include "mdfsc/errors.hpp"

namespace {

void add_config_flags(CLI::App* app, std::vector<std::pair<std::string, std::string>>* overrides) {
  static const char* keys[] = {
      "seed", "image_size", "threads",
      "ae.widths", "ae.latent_dim", "ae.epochs", "ae.batch", "ae.lr",
      "ae.crop", "ae.input_channels", "ae.linear_head",
      "features.patch", "features.stride", "features.budget_per_image",
      "sparse.n_atoms", "sparse.alpha", "sparse.max_outer", "sparse.tol",
      "scoring.k", "scoring.normalize_by_count", "scoring.scorer",
      "synth.n_train", "synth.n_test_normal", "synth.n_test_anom",
      "synth.anomaly_min", "synth.anomaly_max", "synth.contrast",
      "paths.train_manifest", "paths.test_manifest", "paths.checkpoint",
      "paths.dictionary", "paths.reports", "paths.out_dir",
      "paths.metrics_out", "paths.roc_csv"};
  for (const char* key : keys) {
    app->add_option_function<std::string>(
        std::string("--") + key,
        [overrides, key](const std::string& v) {
          overrides->emplace_back(key, v);
        },
        "override config value " + std::string(key));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale deep feature sparse coding anomaly detection"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("-c,--config", config_path, "TOML config file");

  std::vector<std::pair<std::string, std::string>> overrides;
  int (*run)(const mdfsc::RunConfig&) = nullptr;
  for (auto [name, desc, fn] :
       {std::tuple{"synth", "generate a synthetic dataset", &mdfsc::cmd_synth},
        std::tuple{"train-ae", "train the autoencoder", &mdfsc::cmd_train_ae},
        std::tuple{"fit-dict", "fit the sparse-coding dictionary",
                   &mdfsc::cmd_fit_dict},
        std::tuple{"score", "score test images", &mdfsc::cmd_score},
        std::tuple{"eval", "compute AUC/AP from reports", &mdfsc::cmd_eval}}) {
    CLI::App* sub = app.add_subcommand(name, desc);
    add_config_flags(sub, &overrides);
    sub->callback([&run, fn] { run = fn; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    mdfsc::RunConfig cfg;
    if (!config_path.empty()) cfg = mdfsc::parse_config_file(config_path);
    for (const auto& [k, v] : overrides) mdfsc::apply_override(cfg, k, v);
    if (const char* env_seed = std::getenv("MDFSC_SEED"))
      mdfsc::apply_override(cfg, "seed", env_seed);
    return run(cfg);
  } catch (const mdfsc::ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mdfsc::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const mdfsc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
