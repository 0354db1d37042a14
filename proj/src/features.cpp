#include "mdfsc/features.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mdfsc/errors.hpp"
#include "mdfsc/ops.hpp"

namespace mdfsc {

int feature_dim(const ArchSpec& arch, int p) {
  require(p % 8 == 0, "feature_dim: patch side must be divisible by 8");
  const int side = p / 8;
  return (arch.stage_widths[1] + arch.stage_widths[2] + arch.stage_widths[3]) *
         side * side;
}

Eigen::VectorXf multiscale_feature(const Autoencoder& model,
                                   const Tensor4& patch) {
  require(patch.n == 1, "multiscale_feature: expects a single patch");
  require(patch.h == patch.w && patch.h % 8 == 0,
          "multiscale_feature: patch side must be square and divisible by 8");

  const Tensor4 f1 = encode_tap(model, patch, TapName::stage4_last);
  const Tensor4 f2 =
      encode_tap(model, downscale(patch, 2), TapName::stage3_last);
  const Tensor4 f3 =
      encode_tap(model, downscale(patch, 4), TapName::stage2_last);

  const int side = patch.h / 8;
  require(f1.h == side && f1.w == side && f2.h == side && f2.w == side &&
              f3.h == side && f3.w == side,
          "multiscale_feature: tap spatial dims misaligned");

  Eigen::VectorXf out(static_cast<Eigen::Index>(f1.size() + f2.size() + f3.size()));
  Eigen::Index o = 0;
  for (const Tensor4* t : {&f1, &f2, &f3}) {
    std::copy(t->data.begin(), t->data.end(), out.data() + o);
    o += static_cast<Eigen::Index>(t->size());
  }
  return out;
}

FeatureMatrix build_feature_matrix(const Autoencoder& model,
                                   const std::vector<ImageRecord>& images,
                                   int budget_per_image, Rng& rng, int patch,
                                   int stride) {
  require(!images.empty(), "build_feature_matrix: empty image list");
  require(budget_per_image >= 1, "build_feature_matrix: budget must be >= 1");

  const int d = feature_dim(model.arch, patch);
  std::vector<std::pair<const ImageRecord*, std::pair<int, int>>> picks;
  for (const auto& img : images) {
    PatchSet grid = sliding_patches(img, patch, stride);
    std::vector<std::size_t> sel(grid.coords.size());
    std::iota(sel.begin(), sel.end(), 0);
    if (static_cast<int>(sel.size()) > budget_per_image) {
      // partial Fisher-Yates: first budget entries are a uniform sample
      for (int i = 0; i < budget_per_image; ++i) {
        const std::size_t j = static_cast<std::size_t>(
            rng.uniform_int(i, static_cast<std::int64_t>(sel.size()) - 1));
        std::swap(sel[i], sel[j]);
      }
      sel.resize(budget_per_image);
      std::sort(sel.begin(), sel.end());  // deterministic grid order
    }
    for (std::size_t s : sel) picks.emplace_back(&img, grid.coords[s]);
  }

  FeatureMatrix F;
  F.d = d;
  F.columns.resize(d, static_cast<Eigen::Index>(picks.size()));
  F.sources.reserve(picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto& [img, rc] = picks[i];
    Tensor4 pt = extract_patch(*img, rc.first, rc.second, patch);
    F.columns.col(static_cast<Eigen::Index>(i)) = multiscale_feature(model, pt);
    F.sources.push_back({img->id, rc.first, rc.second});
  }
  return F;
}

namespace {
constexpr char kMagic[] = {'M', 'D', 'F', 'S', 'C', 'F', '1'};
}

void export_feature_matrix(const FeatureMatrix& F, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  const std::uint32_t d = static_cast<std::uint32_t>(F.d);
  const std::uint64_t m = static_cast<std::uint64_t>(F.m());
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(&m), 8);
  os.write(reinterpret_cast<const char*>(F.columns.data()),
           static_cast<std::streamsize>(sizeof(float) * F.columns.size()));
  if (!os) throw DataError("write failed: " + path);
}

FeatureMatrix import_feature_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (is.gcount() != sizeof(magic) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("bad feature-matrix magic: " + path);
  std::uint32_t d = 0;
  std::uint64_t m = 0;
  is.read(reinterpret_cast<char*>(&d), 4);
  is.read(reinterpret_cast<char*>(&m), 8);
  FeatureMatrix F;
  F.d = static_cast<int>(d);
  F.columns.resize(d, static_cast<Eigen::Index>(m));
  is.read(reinterpret_cast<char*>(F.columns.data()),
          static_cast<std::streamsize>(sizeof(float) * F.columns.size()));
  if (static_cast<std::size_t>(is.gcount()) != sizeof(float) * F.columns.size())
    throw DataError("truncated feature matrix: " + path);
  return F;
}

}  // namespace mdfsc
