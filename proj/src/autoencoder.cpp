#include "mdfsc/autoencoder.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "mdfsc/container.hpp"
#include "mdfsc/errors.hpp"

namespace mdfsc {

namespace {
constexpr const char* kMagic = "MDFSCAE1";
constexpr int kFormatVersion = 1;
}  // namespace

TrainReport train_autoencoder(Autoencoder& model,
                              const std::vector<ImageRecord>& train_images,
                              const TrainConfig& cfg, Rng& rng) {
  require(!train_images.empty(), "train_autoencoder: no training images");
  for (const auto& r : train_images)
    require(r.label == Label::normal,
            "train_autoencoder: non-normal image in training set: " + r.id);
  require(cfg.batch_size >= 1 && cfg.crop >= 32, "train_autoencoder: bad config");
  if (model.arch.with_linear_head)
    require(cfg.crop == model.arch.patch_size,
            "train_autoencoder: crop must equal arch patch_size");

  TrainReport report;
  auto params = model.params();
  AdamConfig adam{cfg.lr};

  std::vector<std::size_t> order(train_images.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle on the shared stream
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int bn = static_cast<int>(end - start);
      Tensor4 batch(bn, model.arch.input_channels, cfg.crop, cfg.crop);
      for (int b = 0; b < bn; ++b) {
        Tensor4 crop = random_crop(train_images[order[start + b]], cfg.crop, rng);
        std::copy(crop.data.begin(), crop.data.end(),
                  batch.data.begin() + static_cast<std::size_t>(b) * crop.size());
      }
      ForwardStateT<float> state;
      Tensor4 out = ae_forward(model, batch, state);
      const float loss = l2_loss(out, batch);
      if (!std::isfinite(loss))
        throw NumericError(
            "train_autoencoder: NaN/Inf loss at epoch " + std::to_string(epoch) +
            " (check learning rate / initialization)");
      ae_backward(model, state, l2_loss_backward(out, batch));
      adam_step(params, adam);
      loss_sum += loss;
      ++batches;
    }
    report.epoch_loss.push_back(batches ? loss_sum / batches : 0.0);
  }
  report.final_loss = report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back();
  model.meta.epochs += cfg.epochs;
  model.meta.final_loss = report.final_loss;
  return report;
}

void save_autoencoder(const Autoencoder& model, const std::string& path) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["arch"] = {{"stage_widths", model.arch.stage_widths},
                      {"convs_per_stage", model.arch.convs_per_stage},
                      {"latent_dim", model.arch.latent_dim},
                      {"input_channels", model.arch.input_channels},
                      {"with_linear_head", model.arch.with_linear_head},
                      {"patch_size", model.arch.patch_size}};
  manifest["norm"] = {{"mean", model.norm.mean}, {"std", model.norm.std_dev}};
  manifest["train_meta"] = {{"seed", model.meta.seed},
                            {"epochs", model.meta.epochs},
                            {"final_loss", model.meta.final_loss}};

  std::vector<std::uint8_t> payload;
  nlohmann::json tensors = nlohmann::json::array();
  auto& m = const_cast<Autoencoder&>(model);  // enumeration only, no mutation
  m.for_each_param([&](const std::string& name, ParamTensor& p) {
    if (!p.value.all_finite())
      throw NumericError("save_autoencoder: non-finite values in " + name);
    nlohmann::json t;
    t["name"] = name;
    t["dims"] = {p.value.n, p.value.c, p.value.h, p.value.w};
    t["offset"] = payload.size();
    tensors.push_back(t);
    const std::size_t bytes = p.value.size() * sizeof(float);
    const std::size_t off = payload.size();
    payload.resize(off + bytes);
    std::memcpy(payload.data() + off, p.value.data.data(), bytes);
  });
  manifest["tensors"] = tensors;
  write_container(path, kMagic, manifest, payload);
}

Autoencoder load_autoencoder(const std::string& path) {
  Container c = read_container(path, kMagic);
  try {
    if (c.manifest.at("format_version").get<int>() != kFormatVersion)
      throw DataError("checkpoint format version mismatch: " + path);
    const auto& ja = c.manifest.at("arch");
    ArchSpec arch;
    arch.stage_widths = ja.at("stage_widths").get<std::vector<int>>();
    arch.convs_per_stage = ja.at("convs_per_stage").get<std::vector<int>>();
    arch.latent_dim = ja.at("latent_dim").get<int>();
    arch.input_channels = ja.at("input_channels").get<int>();
    arch.with_linear_head = ja.at("with_linear_head").get<bool>();
    arch.patch_size = ja.at("patch_size").get<int>();

    Rng dummy(0);
    Autoencoder model = build_autoencoder<float>(arch, dummy);
    model.norm.mean = c.manifest.at("norm").at("mean").get<std::vector<double>>();
    model.norm.std_dev = c.manifest.at("norm").at("std").get<std::vector<double>>();
    const auto& jm = c.manifest.at("train_meta");
    model.meta.seed = jm.at("seed").get<std::uint64_t>();
    model.meta.epochs = jm.at("epochs").get<int>();
    model.meta.final_loss = jm.at("final_loss").get<double>();

    std::size_t ti = 0;
    const auto& tensors = c.manifest.at("tensors");
    model.for_each_param([&](const std::string& name, ParamTensor& p) {
      if (ti >= tensors.size())
        throw DataError("checkpoint missing tensor " + name + ": " + path);
      const auto& t = tensors[ti++];
      if (t.at("name").get<std::string>() != name)
        throw DataError("checkpoint tensor order mismatch at " + name);
      const auto dims = t.at("dims").get<std::vector<int>>();
      if (dims != std::vector<int>{p.value.n, p.value.c, p.value.h, p.value.w})
        throw DataError("checkpoint tensor dims mismatch at " + name);
      const std::size_t off = t.at("offset").get<std::size_t>();
      const std::size_t bytes = p.value.size() * sizeof(float);
      if (off + bytes > c.payload.size())
        throw DataError("checkpoint payload truncated at " + name);
      std::memcpy(p.value.data.data(), c.payload.data() + off, bytes);
    });
    if (ti != tensors.size())
      throw DataError("checkpoint has extra tensors: " + path);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint manifest in " + path + ": " + e.what());
  }
}

}  // namespace mdfsc
