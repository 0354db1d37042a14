#include "mdfsc/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "mdfsc/container.hpp"
#include "mdfsc/errors.hpp"

namespace mdfsc {

namespace {

std::string digest_of_floats(const float* data, std::size_t count) {
  return sha256_hex(reinterpret_cast<const std::uint8_t*>(data),
                    count * sizeof(float));
}

std::string model_digest(const Autoencoder& model) {
  std::vector<float> all;
  auto& m = const_cast<Autoencoder&>(model);
  m.for_each_param([&](const std::string&, ParamTensor& p) {
    all.insert(all.end(), p.value.data.begin(), p.value.data.end());
  });
  return digest_of_floats(all.data(), all.size());
}

std::string dictionary_digest(const Dictionary& dict) {
  const Eigen::MatrixXf atoms32 = dict.atoms.cast<float>();
  return digest_of_floats(atoms32.data(),
                          static_cast<std::size_t>(atoms32.size()));
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count < 2) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads, count); ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

double top_k_sum(std::vector<PatchResidual> residuals, int k) {
  std::sort(residuals.begin(), residuals.end(),
            [](const PatchResidual& a, const PatchResidual& b) {
              if (a.value != b.value) return a.value > b.value;
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });
  double sum = 0;
  const int take = std::min<int>(k, static_cast<int>(residuals.size()));
  for (int i = 0; i < take; ++i) sum += residuals[i].value;
  return sum;
}

AnomalyReport score_image(const Autoencoder& model, const Dictionary& dict,
                          const ImageRecord& img, const ScoringConfig& cfg) {
  require(cfg.k >= 1, "score_image: k must be >= 1");
  const int d = feature_dim(model.arch, cfg.patch);
  if (d != dict.d()) {
    throw ContractError(
        "score_image: feature dim " + std::to_string(d) + " (model " +
        model_digest(model) + ") != dictionary dim " +
        std::to_string(dict.d()) + " (dict " + dictionary_digest(dict) + ")");
  }

  const PatchSet grid = sliding_patches(img, cfg.patch, cfg.stride);
  const int n_patches = static_cast<int>(grid.coords.size());

  AnomalyReport rep;
  rep.image_id = img.id;
  rep.k = cfg.k;
  rep.n_patches = n_patches;
  rep.model_digest = model_digest(model);
  rep.dict_digest = dictionary_digest(dict);
  rep.residuals.resize(n_patches);

  const Eigen::MatrixXd G = dict.atoms.transpose() * dict.atoms;
  parallel_for(n_patches, cfg.threads, [&](int i) {
    const auto [row, col] = grid.coords[i];
    const Tensor4 patch = extract_patch(img, row, col, cfg.patch);
    const Eigen::VectorXd f =
        multiscale_feature(model, patch).cast<double>();
    const SparseCode code =
        lasso_lars_gram(G, dict.atoms.transpose() * f, cfg.alpha);
    rep.residuals[i] = {row, col, residual(dict, f, code)};
  });

  rep.k_exceeds_patches = cfg.k > n_patches;
  rep.score = top_k_sum(rep.residuals, cfg.k);
  if (cfg.normalize_by_count && n_patches > 0) rep.score /= n_patches;
  return rep;
}

double recon_baseline_score(Autoencoder& fullconv_model,
                            const ImageRecord& img) {
  require(!fullconv_model.arch.with_linear_head,
          "recon_baseline_score: model must be built with "
          "with_linear_head=false");
  ForwardStateT<float> state;
  const Tensor4 out = ae_forward(fullconv_model, img.pixels, state);
  return l2_loss(out, img.pixels);
}

std::vector<std::variant<AnomalyReport, ScoreError>> score_batch(
    const Autoencoder& model, const Dictionary& dict,
    const std::vector<ImageRecord>& images, const ScoringConfig& cfg) {
  std::vector<std::variant<AnomalyReport, ScoreError>> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    try {
      out.emplace_back(score_image(model, dict, img, cfg));
    } catch (const std::exception& e) {
      out.emplace_back(ScoreError{img.id, e.what()});
    }
  }
  return out;
}

void write_reports_jsonl(const std::vector<AnomalyReport>& reports,
                         const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write reports: " + path);
  for (const auto& rep : reports) {
    std::vector<PatchResidual> top = rep.residuals;
    std::sort(top.begin(), top.end(),
              [](const PatchResidual& a, const PatchResidual& b) {
                if (a.value != b.value) return a.value > b.value;
                if (a.row != b.row) return a.row < b.row;
                return a.col < b.col;
              });
    if (static_cast<int>(top.size()) > rep.k) top.resize(rep.k);
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : top)
      jr.push_back({{"row", r.row}, {"col", r.col}, {"value", r.value}});
    nlohmann::json j = {{"id", rep.image_id},
                        {"score", rep.score},
                        {"k", rep.k},
                        {"n_patches", rep.n_patches},
                        {"top_residuals", jr},
                        {"model_digest", rep.model_digest},
                        {"dict_digest", rep.dict_digest}};
    os << j.dump() << "\n";
  }
}

}  // namespace mdfsc
