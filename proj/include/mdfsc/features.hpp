#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mdfsc/autoencoder.hpp"
#include "mdfsc/pipeline.hpp"

namespace mdfsc {

struct PatchSource {
  std::string image_id;
  int row = 0, col = 0;
};

// Columns are per-patch multi-scale feature vectors.
struct FeatureMatrix {
  int d = 0;
  Eigen::MatrixXf columns;  // d x m
  std::vector<PatchSource> sources;

  int m() const { return static_cast<int>(columns.cols()); }
};

// Closed-form feature length for a patch of side p:
// (C2 + C3 + C4) * (p/8)^2 where Ci is the width of stage i+1.
int feature_dim(const ArchSpec& arch, int p);

// Aligned activations from three encoder taps at three input scales,
// concatenated along channels and flattened row-major.
Eigen::VectorXf multiscale_feature(const Autoencoder& model,
                                   const Tensor4& patch);

// Full 16/stride-2 grid per image, uniformly subsampled to budget_per_image
// columns without replacement (all, if fewer). Column order is deterministic.
FeatureMatrix build_feature_matrix(const Autoencoder& model,
                                   const std::vector<ImageRecord>& images,
                                   int budget_per_image, Rng& rng,
                                   int patch = 16, int stride = 2);

// Binary export: magic MDFSCF1, u32-LE d, u64-LE m, then d*m f32-LE values
// column-major.
void export_feature_matrix(const FeatureMatrix& F, const std::string& path);
FeatureMatrix import_feature_matrix(const std::string& path);

}  // namespace mdfsc
