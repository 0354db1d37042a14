#pragma once

#include <string>

#include "mdfsc/tensor.hpp"

namespace mdfsc {

enum class Label { normal, anomalous, unknown };

std::string label_name(Label l);
Label parse_label(const std::string& s);

struct ImageRecord {
  std::string id;
  Tensor4 pixels;  // (1, c, H, W), values in [0,1] before normalization
  Label label = Label::unknown;
};

// Decodes PNG or binary 8-bit PGM/PPM by content sniffing.
// Grayscale -> c=1, color -> c=3, values scaled to [0,1].
Tensor4 load_image(const std::string& path);

// Writers used by the synthetic generator and tests. Values clamped to [0,1].
void save_pgm(const std::string& path, const Tensor4& img);
void save_ppm(const std::string& path, const Tensor4& img);
void save_png(const std::string& path, const Tensor4& img);

Tensor4 resize_bilinear(const Tensor4& img, int out_h, int out_w);

ImageRecord load_and_resize(const std::string& path, int target);

}  // namespace mdfsc
