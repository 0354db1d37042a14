#pragma once

#include <string>
#include <variant>
#include <vector>

#include "mdfsc/autoencoder.hpp"
#include "mdfsc/features.hpp"
#include "mdfsc/sparse.hpp"

namespace mdfsc {

struct PatchResidual {
  int row = 0, col = 0;
  double value = 0.0;
};

struct AnomalyReport {
  std::string image_id;
  double score = 0.0;  // sum of the k largest residuals
  int k = 0;
  int n_patches = 0;
  bool k_exceeds_patches = false;
  std::vector<PatchResidual> residuals;  // all patches, grid order
  std::string model_digest, dict_digest;
};

struct ScoringConfig {
  int k = 5;
  double alpha = 1.0;
  int patch = 16;
  int stride = 2;
  bool normalize_by_count = false;  // for mixed-resolution use
  int threads = 1;
};

// Featurizes the full stride-2 grid, sparse-codes each column against the
// dictionary, and sums the top-k residuals. The image must already be
// preprocessed with the model's NormStats.
AnomalyReport score_image(const Autoencoder& model, const Dictionary& dict,
                          const ImageRecord& img, const ScoringConfig& cfg);

// Whole-image reconstruction MSE from the fully-convolutional model variant.
double recon_baseline_score(Autoencoder& fullconv_model,
                            const ImageRecord& img);

struct ScoreError {
  std::string image_id;
  std::string message;
};

std::vector<std::variant<AnomalyReport, ScoreError>> score_batch(
    const Autoencoder& model, const Dictionary& dict,
    const std::vector<ImageRecord>& images, const ScoringConfig& cfg);

// One JSON object per line:
// {id, score, k, n_patches, top_residuals:[{row,col,value}], model_digest,
//  dict_digest}
void write_reports_jsonl(const std::vector<AnomalyReport>& reports,
                         const std::string& path);

// Helper shared with the scorer and report self-checks.
double top_k_sum(std::vector<PatchResidual> residuals, int k);

}  // namespace mdfsc
