#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mdfsc {

// One config governs every subcommand; flat TOML-syntax key/value file with
// [section] headers. CLI flags override file values; MDFSC_SEED overrides
// the seed.
struct RunConfig {
  std::uint64_t seed = 0;
  int image_size = 512;
  int threads = 1;

  struct {
    std::string widths = "8,16,32,64,64";  // comma-separated stage widths
    int latent_dim = 256;
    int epochs = 50;
    int batch = 32;
    double lr = 1e-4;
    int crop = 64;
    int input_channels = 1;
    bool linear_head = true;
  } ae;

  struct {
    int patch = 16;
    int stride = 2;
    int budget_per_image = 500;
  } features;

  struct {
    int n_atoms = 50;
    double alpha = 1.0;
    int max_outer = 30;
    double tol = 1e-4;
  } sparse;

  struct {
    int k = 5;
    bool normalize_by_count = false;
    std::string scorer = "mdfsc";  // mdfsc | recon
  } scoring;

  struct {
    std::string train_manifest;
    std::string test_manifest;
    std::string checkpoint = "model.ckpt";
    std::string dictionary = "dict.bin";
    std::string reports = "reports.jsonl";
    std::string out_dir = "data";
    std::string metrics_out;  // empty = stdout only
    std::string roc_csv;      // optional fpr/tpr dump
  } paths;

  struct {
    int n_train = 200;
    int n_test_normal = 50;
    int n_test_anom = 50;
    int anomaly_min = 1;
    int anomaly_max = 3;
    double contrast = 0.35;
  } synth;

  std::vector<int> parsed_widths() const;
  // Fully-resolved key/value view, suitable for the run log and reruns.
  std::string resolved_toml() const;
};

RunConfig parse_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
int cmd_synth(const RunConfig& cfg);
int cmd_train_ae(const RunConfig& cfg);
int cmd_fit_dict(const RunConfig& cfg);
int cmd_score(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);

}  // namespace mdfsc
