#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "mdfsc/adam.hpp"
#include "mdfsc/ops.hpp"
#include "mdfsc/pipeline.hpp"
#include "mdfsc/rng.hpp"
#include "mdfsc/tensor.hpp"

namespace mdfsc {

// VGG-style architecture: 5 conv stages with 2+2+3+3+3 = 13 conv layers,
// maxpool after each stage, optional two-linear bottleneck, mirrored decoder.
struct ArchSpec {
  std::vector<int> stage_widths = {8, 16, 32, 64, 64};
  std::vector<int> convs_per_stage = {2, 2, 3, 3, 3};
  int latent_dim = 256;
  int input_channels = 1;
  bool with_linear_head = true;
  int patch_size = 64;  // training crop side; fixes the bottleneck reshape

  int bottleneck_side() const { return patch_size / 32; }
  int bottleneck_flat() const {
    return stage_widths.back() * bottleneck_side() * bottleneck_side();
  }
  void validate() const;
  static std::vector<int> paper_widths() { return {64, 128, 256, 512, 512}; }
};

enum class TapName { stage2_last, stage3_last, stage4_last };

// pools applied before the tap's stage
inline int tap_pool_count(TapName t) {
  switch (t) {
    case TapName::stage2_last: return 1;
    case TapName::stage3_last: return 2;
    default: return 3;
  }
}
// 0-based encoder stage index holding the tap
inline int tap_stage_index(TapName t) { return tap_pool_count(t); }

template <typename T>
struct ConvLayerT {
  ParamTensorT<T> w, b;
};
template <typename T>
struct LinearLayerT {
  ParamTensorT<T> w, b;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_loss = 0.0;
};

template <typename T>
struct AutoencoderT {
  ArchSpec arch;
  std::vector<ConvLayerT<T>> enc;  // 13 with default convs_per_stage
  LinearLayerT<T> fc1, fc2;        // present iff arch.with_linear_head
  std::vector<ConvLayerT<T>> dec;  // mirror of enc
  NormStats norm;
  TrainMeta meta;

  void for_each_param(
      const std::function<void(const std::string&, ParamTensorT<T>&)>& fn);
  std::vector<ParamTensorT<T>*> params();
};

using Autoencoder = AutoencoderT<float>;

template <typename T>
AutoencoderT<T> build_autoencoder(const ArchSpec& arch, Rng& rng);

// Cached activations for one forward pass, consumed by backward.
template <typename T>
struct ForwardStateT {
  std::vector<Tensor4T<T>> enc_in, enc_pre;
  std::vector<ArgmaxIndices> pool_idx;
  std::vector<std::array<int, 2>> pool_in_hw;
  Tensor4T<T> flat;
  Tensor4T<T> fc1_pre, fc1_out, fc2_pre, fc2_out;
  std::vector<Tensor4T<T>> dec_in, dec_pre;
  Tensor4T<T> output;
};

template <typename T>
Tensor4T<T> ae_forward(AutoencoderT<T>& model, const Tensor4T<T>& input,
                       ForwardStateT<T>& state);

// Accumulates parameter gradients; returns gradient w.r.t. the input.
template <typename T>
Tensor4T<T> ae_backward(AutoencoderT<T>& model, const ForwardStateT<T>& state,
                        const Tensor4T<T>& grad_output);

// Post-ReLU activation of the tap layer; no decoder work.
template <typename T>
Tensor4T<T> encode_tap(const AutoencoderT<T>& model, const Tensor4T<T>& input,
                       TapName tap);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-4;
  int crop = 64;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
};

// Trains on random crops of (already normalized) normal images, L2 loss, Adam.
TrainReport train_autoencoder(Autoencoder& model,
                              const std::vector<ImageRecord>& train_images,
                              const TrainConfig& cfg, Rng& rng);

void save_autoencoder(const Autoencoder& model, const std::string& path);
Autoencoder load_autoencoder(const std::string& path);

// ----- template implementation -----

inline void ArchSpec::validate() const {
  require(stage_widths.size() == 5 && convs_per_stage.size() == 5,
          "ArchSpec: expected 5 stages");
  for (int w : stage_widths) require(w >= 1, "ArchSpec: stage width < 1");
  require(latent_dim >= 1, "ArchSpec: latent_dim < 1");
  require(input_channels == 1 || input_channels == 3,
          "ArchSpec: input_channels must be 1 or 3");
  if (with_linear_head)
    require(patch_size % 32 == 0 && patch_size >= 32,
            "ArchSpec: patch_size must be a multiple of 32 for the linear "
            "bottleneck reshape");
}

template <typename T>
void AutoencoderT<T>::for_each_param(
    const std::function<void(const std::string&, ParamTensorT<T>&)>& fn) {
  for (std::size_t i = 0; i < enc.size(); ++i) {
    fn("enc" + std::to_string(i) + ".w", enc[i].w);
    fn("enc" + std::to_string(i) + ".b", enc[i].b);
  }
  if (arch.with_linear_head) {
    fn("fc1.w", fc1.w);
    fn("fc1.b", fc1.b);
    fn("fc2.w", fc2.w);
    fn("fc2.b", fc2.b);
  }
  for (std::size_t i = 0; i < dec.size(); ++i) {
    fn("dec" + std::to_string(i) + ".w", dec[i].w);
    fn("dec" + std::to_string(i) + ".b", dec[i].b);
  }
}

template <typename T>
std::vector<ParamTensorT<T>*> AutoencoderT<T>::params() {
  std::vector<ParamTensorT<T>*> out;
  for_each_param([&](const std::string&, ParamTensorT<T>& p) { out.push_back(&p); });
  return out;
}

namespace detail {

// He-style fan-in-scaled uniform: limit sqrt(6/fan_in) keeps activation
// variance roughly constant through relu layers
template <typename T>
Tensor4T<T> init_uniform(int n, int c, int h, int w, int fan_in, Rng& rng) {
  Tensor4T<T> t(n, c, h, w);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
ConvLayerT<T> make_conv(int out_c, int in_c, Rng& rng) {
  ConvLayerT<T> l;
  const int fan_in = in_c * 9;
  l.w = ParamTensorT<T>(init_uniform<T>(out_c, in_c, 3, 3, fan_in, rng));
  l.b = ParamTensorT<T>(Tensor4T<T>(out_c, 1, 1, 1));  // biases start at 0
  return l;
}

template <typename T>
LinearLayerT<T> make_linear(int d_out, int d_in, Rng& rng) {
  LinearLayerT<T> l;
  l.w = ParamTensorT<T>(init_uniform<T>(d_out, d_in, 1, 1, d_in, rng));
  l.b = ParamTensorT<T>(Tensor4T<T>(d_out, 1, 1, 1));
  return l;
}

// Channel plan of the mirrored decoder stage s: width w[s] throughout,
// except the stage's final conv which maps down to w[s-1] (or the input
// channel count for stage 0).
inline int dec_out_width(const ArchSpec& a, int stage, int conv_in_stage) {
  const bool last = conv_in_stage == a.convs_per_stage[stage] - 1;
  if (!last) return a.stage_widths[stage];
  return stage > 0 ? a.stage_widths[stage - 1] : a.input_channels;
}

}  // namespace detail

template <typename T>
AutoencoderT<T> build_autoencoder(const ArchSpec& arch, Rng& rng) {
  arch.validate();
  AutoencoderT<T> m;
  m.arch = arch;
  int in_c = arch.input_channels;
  for (int s = 0; s < 5; ++s) {
    for (int k = 0; k < arch.convs_per_stage[s]; ++k) {
      m.enc.push_back(detail::make_conv<T>(arch.stage_widths[s], in_c, rng));
      in_c = arch.stage_widths[s];
    }
  }
  if (arch.with_linear_head) {
    const int flat = arch.bottleneck_flat();
    m.fc1 = detail::make_linear<T>(arch.latent_dim, flat, rng);
    m.fc2 = detail::make_linear<T>(flat, arch.latent_dim, rng);
  }
  for (int s = 4; s >= 0; --s) {
    int dec_in = arch.stage_widths[s];
    for (int k = 0; k < arch.convs_per_stage[s]; ++k) {
      const int out_c = detail::dec_out_width(arch, s, k);
      m.dec.push_back(detail::make_conv<T>(out_c, dec_in, rng));
      dec_in = out_c;
    }
  }
  return m;
}

template <typename T>
Tensor4T<T> ae_forward(AutoencoderT<T>& model, const Tensor4T<T>& input,
                       ForwardStateT<T>& state) {
  const ArchSpec& a = model.arch;
  require(input.c == a.input_channels, "ae_forward: channel mismatch");
  require(input.h % 32 == 0 && input.w % 32 == 0,
          "ae_forward: spatial dims must be divisible by 32");
  if (a.with_linear_head)
    require(input.h == a.patch_size && input.w == a.patch_size,
            "ae_forward: linear-head model is fixed to patch_size inputs");

  state = ForwardStateT<T>{};
  Tensor4T<T> x = input;
  std::size_t li = 0;
  for (int s = 0; s < 5; ++s) {
    for (int k = 0; k < a.convs_per_stage[s]; ++k, ++li) {
      state.enc_in.push_back(x);
      Tensor4T<T> pre =
          conv2d(x, model.enc[li].w.value, model.enc[li].b.value);
      state.enc_pre.push_back(pre);
      x = relu(pre);
    }
    state.pool_in_hw.push_back({x.h, x.w});
    auto [pooled, idx] = maxpool2(x);
    state.pool_idx.push_back(std::move(idx));
    x = std::move(pooled);
  }

  if (a.with_linear_head) {
    // flatten (n, C, hb, wb) -> (n, C*hb*wb, 1, 1); same memory order
    Tensor4T<T> flat(x.n, x.c * x.h * x.w, 1, 1);
    flat.data = x.data;
    state.flat = flat;
    state.fc1_pre = linear(flat, model.fc1.w.value, model.fc1.b.value);
    state.fc1_out = relu(state.fc1_pre);
    state.fc2_pre = linear(state.fc1_out, model.fc2.w.value, model.fc2.b.value);
    state.fc2_out = relu(state.fc2_pre);
    Tensor4T<T> reshaped(x.n, a.stage_widths[4], a.bottleneck_side(),
                         a.bottleneck_side());
    reshaped.data = state.fc2_out.data;
    x = std::move(reshaped);
  }

  li = 0;
  for (int s = 4; s >= 0; --s) {
    x = upsample2(x);
    for (int k = 0; k < a.convs_per_stage[s]; ++k, ++li) {
      state.dec_in.push_back(x);
      Tensor4T<T> pre =
          conv2d(x, model.dec[li].w.value, model.dec[li].b.value);
      state.dec_pre.push_back(pre);
      const bool final_conv = (s == 0 && k == a.convs_per_stage[s] - 1);
      x = final_conv ? pre : relu(pre);  // linear output activation
    }
  }
  state.output = x;
  return x;
}

template <typename T>
Tensor4T<T> ae_backward(AutoencoderT<T>& model, const ForwardStateT<T>& state,
                        const Tensor4T<T>& grad_output) {
  const ArchSpec& a = model.arch;
  Tensor4T<T> g = grad_output;

  int li = static_cast<int>(model.dec.size()) - 1;
  for (int s = 0; s < 5; ++s) {
    for (int k = a.convs_per_stage[s] - 1; k >= 0; --k, --li) {
      const bool final_conv = (s == 0 && k == a.convs_per_stage[s] - 1);
      if (!final_conv) g = relu_backward(state.dec_pre[li], g);
      g = conv2d_backward(state.dec_in[li], model.dec[li].w, model.dec[li].b, g);
    }
    g = upsample2_backward(g);
  }

  if (a.with_linear_head) {
    Tensor4T<T> gflat(g.n, g.c * g.h * g.w, 1, 1);
    gflat.data = g.data;
    gflat = relu_backward(state.fc2_pre, gflat);
    gflat = linear_backward(state.fc1_out, model.fc2.w, model.fc2.b, gflat);
    gflat = relu_backward(state.fc1_pre, gflat);
    gflat = linear_backward(state.flat, model.fc1.w, model.fc1.b, gflat);
    const int side = state.pool_in_hw[4][0] / 2;
    Tensor4T<T> gsq(g.n, a.stage_widths[4], side, side);
    gsq.data = gflat.data;
    g = std::move(gsq);
  }

  li = static_cast<int>(model.enc.size()) - 1;
  for (int s = 4; s >= 0; --s) {
    g = maxpool2_backward(state.pool_idx[s], g, state.pool_in_hw[s][0],
                          state.pool_in_hw[s][1]);
    for (int k = a.convs_per_stage[s] - 1; k >= 0; --k, --li) {
      g = relu_backward(state.enc_pre[li], g);
      g = conv2d_backward(state.enc_in[li], model.enc[li].w, model.enc[li].b, g);
    }
  }
  return g;
}

template <typename T>
Tensor4T<T> encode_tap(const AutoencoderT<T>& model, const Tensor4T<T>& input,
                       TapName tap) {
  const ArchSpec& a = model.arch;
  require(input.c == a.input_channels, "encode_tap: channel mismatch");
  const int pools = tap_pool_count(tap);
  require(input.h % (1 << pools) == 0 && input.w % (1 << pools) == 0 &&
              input.h >= (1 << pools) && input.w >= (1 << pools),
          "encode_tap: input " + input.dims_str() +
              " too small for tap pooling depth " + std::to_string(pools));

  Tensor4T<T> x = input;
  std::size_t li = 0;
  const int tap_stage = tap_stage_index(tap);
  for (int s = 0; s <= tap_stage; ++s) {
    for (int k = 0; k < a.convs_per_stage[s]; ++k, ++li) {
      // model is logically const here; conv2d reads values only
      x = relu(conv2d(x, model.enc[li].w.value, model.enc[li].b.value));
    }
    if (s < tap_stage) x = maxpool2(x).first;
  }
  return x;
}

}  // namespace mdfsc
