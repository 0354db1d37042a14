#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mdfsc/image.hpp"
#include "mdfsc/rng.hpp"
#include "mdfsc/tensor.hpp"

namespace mdfsc {

// Per-channel dataset statistics, fitted on the training split and persisted
// with the model so inference preprocessing matches training.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std_dev;
};

NormStats fit_norm_stats(const std::vector<ImageRecord>& train);
ImageRecord apply_norm(const ImageRecord& img, const NormStats& stats);
ImageRecord denorm(const ImageRecord& img, const NormStats& stats);

Tensor4 random_crop(const ImageRecord& img, int p, Rng& rng);

struct PatchSet {
  std::string source_id;
  int p = 0, s = 0;
  int grid_h = 0, grid_w = 0;
  std::vector<std::pair<int, int>> coords;  // (row, col), row-major grid order
};

PatchSet sliding_patches(const ImageRecord& img, int p = 16, int s = 2);
Tensor4 extract_patch(const ImageRecord& img, int row, int col, int p);

// ---- synthetic dataset generator ----

struct SynthConfig {
  int size = 128;
  int n_train = 200;
  int n_test_normal = 50;
  int n_test_anom = 50;
  int anomaly_min = 2;
  int anomaly_max = 3;
  double contrast = 0.35;  // minimum blob amplitude
};

struct AnomalyRegion {
  enum class Kind { bright_blob, dark_blob, occlusion, blur } kind;
  int cx = 0, cy = 0, radius = 0;
};

// Smooth radial-gradient disc on a dark background with band-limited texture
// and vessel-like curves.
Tensor4 synth_normal_image(int size, Rng& rng);

// Mutates img in place; returns the injected regions.
std::vector<AnomalyRegion> inject_anomalies(Tensor4& img, Rng& rng,
                                            const SynthConfig& cfg);

struct SynthDataset {
  std::vector<ImageRecord> train;  // all normal
  std::vector<ImageRecord> test;   // normals then anomalies
};

SynthDataset synth_dataset(const SynthConfig& cfg, std::uint64_t seed);

// ---- dataset manifests: one `<relative-path>\t<label>` line per image ----

struct ManifestEntry {
  std::string path;  // relative to the manifest file
  Label label;
};

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ImageRecord> load_manifest_images(const std::string& manifest_path,
                                              int target_size);

}  // namespace mdfsc
