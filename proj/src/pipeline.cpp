#include "mdfsc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdfsc/errors.hpp"

namespace fs = std::filesystem;

namespace mdfsc {

NormStats fit_norm_stats(const std::vector<ImageRecord>& train) {
  require(!train.empty(), "fit_norm_stats: empty training list");
  const int c = train[0].pixels.c;
  std::vector<double> sum(c, 0.0), sum2(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (const auto& rec : train) {
    require(rec.pixels.c == c, "fit_norm_stats: mixed channel counts");
    for (int ch = 0; ch < c; ++ch) {
      const float* p = rec.pixels.plane(0, ch);
      const std::size_t np = static_cast<std::size_t>(rec.pixels.h) * rec.pixels.w;
      for (std::size_t i = 0; i < np; ++i) {
        sum[ch] += p[i];
        sum2[ch] += static_cast<double>(p[i]) * p[i];
      }
      count[ch] += np;
    }
  }
  NormStats stats;
  stats.mean.resize(c);
  stats.std_dev.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    const double m = sum[ch] / count[ch];
    const double var = sum2[ch] / count[ch] - m * m;
    stats.mean[ch] = m;
    stats.std_dev[ch] = std::sqrt(std::max(var, 0.0));
    if (stats.std_dev[ch] <= 1e-12)
      throw DataError("fit_norm_stats: channel " + std::to_string(ch) +
                      " has zero standard deviation");
  }
  return stats;
}

ImageRecord apply_norm(const ImageRecord& img, const NormStats& stats) {
  require(static_cast<int>(stats.mean.size()) == img.pixels.c,
          "apply_norm: channel count mismatch");
  ImageRecord out = img;
  for (int ch = 0; ch < img.pixels.c; ++ch) {
    float* p = out.pixels.plane(0, ch);
    const float m = static_cast<float>(stats.mean[ch]);
    const float inv = static_cast<float>(1.0 / stats.std_dev[ch]);
    const std::size_t np = static_cast<std::size_t>(img.pixels.h) * img.pixels.w;
    for (std::size_t i = 0; i < np; ++i) p[i] = (p[i] - m) * inv;
  }
  return out;
}

ImageRecord denorm(const ImageRecord& img, const NormStats& stats) {
  require(static_cast<int>(stats.mean.size()) == img.pixels.c,
          "denorm: channel count mismatch");
  ImageRecord out = img;
  for (int ch = 0; ch < img.pixels.c; ++ch) {
    float* p = out.pixels.plane(0, ch);
    const float m = static_cast<float>(stats.mean[ch]);
    const float s = static_cast<float>(stats.std_dev[ch]);
    const std::size_t np = static_cast<std::size_t>(img.pixels.h) * img.pixels.w;
    for (std::size_t i = 0; i < np; ++i) p[i] = p[i] * s + m;
  }
  return out;
}

Tensor4 random_crop(const ImageRecord& img, int p, Rng& rng) {
  const int H = img.pixels.h, W = img.pixels.w;
  require(H >= p && W >= p, "random_crop: image " + img.pixels.dims_str() +
                                " smaller than patch " + std::to_string(p));
  const int row = static_cast<int>(rng.uniform_int(0, H - p));
  const int col = static_cast<int>(rng.uniform_int(0, W - p));
  return extract_patch(img, row, col, p);
}

PatchSet sliding_patches(const ImageRecord& img, int p, int s) {
  const int H = img.pixels.h, W = img.pixels.w;
  require(H >= p && W >= p, "sliding_patches: image smaller than patch");
  require(s >= 1, "sliding_patches: stride must be >= 1");
  PatchSet set;
  set.source_id = img.id;
  set.p = p;
  set.s = s;
  set.grid_h = (H - p) / s + 1;
  set.grid_w = (W - p) / s + 1;
  set.coords.reserve(static_cast<std::size_t>(set.grid_h) * set.grid_w);
  for (int r = 0; r + p <= H; r += s)
    for (int c = 0; c + p <= W; c += s) set.coords.emplace_back(r, c);
  return set;
}

Tensor4 extract_patch(const ImageRecord& img, int row, int col, int p) {
  require(row >= 0 && col >= 0 && row + p <= img.pixels.h &&
              col + p <= img.pixels.w,
          "extract_patch: out of bounds");
  Tensor4 patch(1, img.pixels.c, p, p);
  for (int ch = 0; ch < img.pixels.c; ++ch) {
    const float* ip = img.pixels.plane(0, ch);
    float* pp = patch.plane(0, ch);
    for (int y = 0; y < p; ++y)
      std::copy_n(ip + (row + y) * img.pixels.w + col, p, pp + y * p);
  }
  return patch;
}

// ---- synthetic generator ----

namespace {

float smoothstep(float e0, float e1, float x) {
  const float t = std::clamp((x - e0) / (e1 - e0), 0.0f, 1.0f);
  return t * t * (3.0f - 2.0f * t);
}

void draw_vessel(Tensor4& img, Rng& rng, float cx, float cy, float disc_r) {
  // quadratic Bezier through the disc, drawn as a soft dark line
  const double a0 = rng.uniform(0, 2 * M_PI);
  const double a1 = a0 + M_PI + rng.uniform(-0.9, 0.9);
  const float r0 = disc_r * static_cast<float>(rng.uniform(0.55, 0.95));
  const float r1 = disc_r * static_cast<float>(rng.uniform(0.55, 0.95));
  const float x0 = cx + r0 * std::cos(static_cast<float>(a0));
  const float y0 = cy + r0 * std::sin(static_cast<float>(a0));
  const float x1 = cx + r1 * std::cos(static_cast<float>(a1));
  const float y1 = cy + r1 * std::sin(static_cast<float>(a1));
  const float mx = 0.5f * (x0 + x1) + static_cast<float>(rng.uniform(-0.4, 0.4)) * disc_r;
  const float my = 0.5f * (y0 + y1) + static_cast<float>(rng.uniform(-0.4, 0.4)) * disc_r;
  const float depth = static_cast<float>(rng.uniform(0.16, 0.2));
  const float width = static_cast<float>(rng.uniform(1.8, 2.4));
  // max-over-path profile so overlapping samples don't over-darken
  std::vector<float> mask(static_cast<std::size_t>(img.h) * img.w, 0.0f);
  const int steps = 3 * img.w;
  for (int i = 0; i <= steps; ++i) {
    const float t = static_cast<float>(i) / steps;
    const float u = 1.0f - t;
    const float px = u * u * x0 + 2 * u * t * mx + t * t * x1;
    const float py = u * u * y0 + 2 * u * t * my + t * t * y1;
    const int xi0 = std::max(0, static_cast<int>(px - 4));
    const int xi1 = std::min(img.w - 1, static_cast<int>(px + 4));
    const int yi0 = std::max(0, static_cast<int>(py - 4));
    const int yi1 = std::min(img.h - 1, static_cast<int>(py + 4));
    for (int y = yi0; y <= yi1; ++y)
      for (int x = xi0; x <= xi1; ++x) {
        const float d2 = (x - px) * (x - px) + (y - py) * (y - py);
        const float fall = std::exp(-d2 / (2 * width * width));
        float& m = mask[static_cast<std::size_t>(y) * img.w + x];
        m = std::max(m, fall);
      }
  }
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float& v = img.at(0, 0, y, x);
      v = std::clamp(v - depth * mask[static_cast<std::size_t>(y) * img.w + x],
                     0.0f, 1.0f);
    }
}

}  // namespace

Tensor4 synth_normal_image(int size, Rng& rng) {
  Tensor4 img(1, 1, size, size);
  const float cx = size * 0.5f + static_cast<float>(rng.uniform(-0.03, 0.03)) * size;
  const float cy = size * 0.5f + static_cast<float>(rng.uniform(-0.03, 0.03)) * size;
  const float disc_r = size * static_cast<float>(rng.uniform(0.36, 0.42));
  const float peak = static_cast<float>(rng.uniform(0.65, 0.70));

  // band-limited texture: a few low-frequency sinusoids
  const int n_waves = 6;
  float wx[n_waves], wy[n_waves], ph[n_waves], amp[n_waves];
  for (int k = 0; k < n_waves; ++k) {
    const double period = rng.uniform(size / 24.0, size / 6.0);
    const double theta = rng.uniform(0, 2 * M_PI);
    wx[k] = static_cast<float>(2 * M_PI / period * std::cos(theta));
    wy[k] = static_cast<float>(2 * M_PI / period * std::sin(theta));
    ph[k] = static_cast<float>(rng.uniform(0, 2 * M_PI));
    amp[k] = static_cast<float>(rng.uniform(0.035, 0.045));
  }

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const float dx = x - cx, dy = y - cy;
      const float r = std::sqrt(dx * dx + dy * dy);
      const float inside = 1.0f - smoothstep(disc_r - 3.0f, disc_r + 3.0f, r);
      const float profile = peak * (1.0f - 0.55f * (r / disc_r) * (r / disc_r));
      float tex = 0.0f;
      for (int k = 0; k < n_waves; ++k)
        tex += amp[k] * std::sin(wx[k] * x + wy[k] * y + ph[k]);
      img.at(0, 0, y, x) =
          std::clamp(0.05f + inside * (std::max(profile, 0.12f) - 0.05f + tex),
                     0.0f, 1.0f);
    }

  const int n_vessels = 5;
  for (int v = 0; v < n_vessels; ++v) draw_vessel(img, rng, cx, cy, disc_r);
  return img;
}

std::vector<AnomalyRegion> inject_anomalies(Tensor4& img, Rng& rng,
                                            const SynthConfig& cfg) {
  std::vector<AnomalyRegion> regions;
  const int count =
      static_cast<int>(rng.uniform_int(cfg.anomaly_min, cfg.anomaly_max));
  const int size = img.h;
  for (int a = 0; a < count; ++a) {
    AnomalyRegion reg;
    // The first region is always an occlusion, the highest-contrast kind:
    // dark blobs shade toward the background level, blur only removes
    // detail, and smooth bright bumps are partly absorbed by any
    // reconstruction, so an image carrying only those kinds would have
    // almost no signal for any detector.
    const int kind = a == 0 ? 2 : static_cast<int>(rng.uniform_int(0, 3));
    reg.kind = static_cast<AnomalyRegion::Kind>(kind);
    // regions stay small relative to the image: a localized anomaly is
    // diluted in any whole-image statistic but still dominates the patches
    // that cover it, which is the regime patch-level scoring is built for
    reg.radius = reg.kind == AnomalyRegion::Kind::occlusion
                     ? static_cast<int>(rng.uniform_int(6, 9))
                     : static_cast<int>(rng.uniform_int(7, 11));
    // keep the anomaly inside the disc area
    reg.cx = static_cast<int>(rng.uniform_int(3 * size / 10, 7 * size / 10));
    reg.cy = static_cast<int>(rng.uniform_int(3 * size / 10, 7 * size / 10));
    // bright blobs get extra amplitude: they rise toward the saturated end
    // of the range, while dark blobs at the same amplitude would clip to a
    // flat background-like level
    const float amp = static_cast<float>(
        reg.kind == AnomalyRegion::Kind::bright_blob
            ? rng.uniform(cfg.contrast + 0.15, cfg.contrast + 0.25)
            : rng.uniform(cfg.contrast, cfg.contrast + 0.15));
    switch (reg.kind) {
      case AnomalyRegion::Kind::bright_blob:
      case AnomalyRegion::Kind::dark_blob: {
        const float sign = reg.kind == AnomalyRegion::Kind::bright_blob ? 1.f : -1.f;
        const float sigma = reg.radius * 0.5f;
        for (int y = std::max(0, reg.cy - 2 * reg.radius);
             y < std::min(size, reg.cy + 2 * reg.radius); ++y)
          for (int x = std::max(0, reg.cx - 2 * reg.radius);
               x < std::min(size, reg.cx + 2 * reg.radius); ++x) {
            const float d2 = static_cast<float>((x - reg.cx) * (x - reg.cx) +
                                                (y - reg.cy) * (y - reg.cy));
            const float fall = std::exp(-d2 / (2 * sigma * sigma));
            float& v = img.at(0, 0, y, x);
            v = std::clamp(v + sign * amp * fall, 0.0f, 1.0f);
          }
        break;
      }
      case AnomalyRegion::Kind::occlusion: {
        // a flat dark square would mimic the background outside the disc;
        // an over-bright level is outside the normal value range everywhere
        const float level = static_cast<float>(rng.uniform(0.9, 0.97));
        for (int y = std::max(0, reg.cy - reg.radius);
             y < std::min(size, reg.cy + reg.radius); ++y)
          for (int x = std::max(0, reg.cx - reg.radius);
               x < std::min(size, reg.cx + reg.radius); ++x)
            img.at(0, 0, y, x) = level;
        break;
      }
      case AnomalyRegion::Kind::blur: {
        // box blur applied twice over a square region
        const int r0 = std::max(0, reg.cy - 2 * reg.radius);
        const int r1 = std::min(size, reg.cy + 2 * reg.radius);
        const int c0 = std::max(0, reg.cx - 2 * reg.radius);
        const int c1 = std::min(size, reg.cx + 2 * reg.radius);
        for (int pass = 0; pass < 2; ++pass) {
          Tensor4 copy = img;
          for (int y = r0; y < r1; ++y)
            for (int x = c0; x < c1; ++x) {
              float acc = 0;
              int n = 0;
              for (int dy = -3; dy <= 3; ++dy)
                for (int dx = -3; dx <= 3; ++dx) {
                  const int yy = y + dy, xx = x + dx;
                  if (yy >= 0 && yy < size && xx >= 0 && xx < size) {
                    acc += copy.at(0, 0, yy, xx);
                    ++n;
                  }
                }
              img.at(0, 0, y, x) = acc / n;
            }
        }
        break;
      }
    }
    regions.push_back(reg);
  }
  return regions;
}

SynthDataset synth_dataset(const SynthConfig& cfg, std::uint64_t seed) {
  SynthDataset ds;
  auto make = [&](const std::string& id, bool anomalous) {
    ImageRecord rec;
    rec.id = id;
    Rng rng(Rng::derive_seed(seed, id));
    rec.pixels = synth_normal_image(cfg.size, rng);
    if (anomalous) {
      inject_anomalies(rec.pixels, rng, cfg);
      rec.label = Label::anomalous;
    } else {
      rec.label = Label::normal;
    }
    return rec;
  };
  for (int i = 0; i < cfg.n_train; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "train_%04d", i);
    ds.train.push_back(make(buf, false));
  }
  for (int i = 0; i < cfg.n_test_normal; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "test_n_%04d", i);
    ds.test.push_back(make(buf, false));
  }
  for (int i = 0; i < cfg.n_test_anom; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "test_a_%04d", i);
    ds.test.push_back(make(buf, true));
  }
  return ds;
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw DataError("cannot open manifest: " + manifest_path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("manifest line " + std::to_string(lineno) +
                      " missing tab separator: " + manifest_path);
    entries.push_back({line.substr(0, tab), parse_label(line.substr(tab + 1))});
  }
  return entries;
}

void write_manifest(const std::string& manifest_path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest: " + manifest_path);
  for (const auto& e : entries) os << e.path << "\t" << label_name(e.label) << "\n";
}

std::vector<ImageRecord> load_manifest_images(const std::string& manifest_path,
                                              int target_size) {
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<ImageRecord> out;
  for (const auto& e : read_manifest(manifest_path)) {
    ImageRecord rec = load_and_resize((base / e.path).string(), target_size);
    rec.id = e.path;
    rec.label = e.label;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mdfsc
