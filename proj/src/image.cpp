#include "mdfsc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "mdfsc/errors.hpp"

namespace mdfsc {

std::string label_name(Label l) {
  switch (l) {
    case Label::normal: return "normal";
    case Label::anomalous: return "anomalous";
    default: return "unknown";
  }
}

Label parse_label(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "anomalous") return Label::anomalous;
  throw DataError("unknown label: '" + s + "'");
}

namespace {

// ---- PNM (binary PGM/PPM) ----

int pnm_token(std::istream& is) {
  // skips whitespace and '#' comments
  while (is) {
    int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  int v = -1;
  is >> v;
  return v;
}

Tensor4 load_pnm(std::ifstream& is, const std::string& path) {
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  const int channels = (m1 == '6') ? 3 : 1;
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw DataError("unsupported PNM type in " + path);
  const int w = pnm_token(is);
  const int h = pnm_token(is);
  const int maxval = pnm_token(is);
  if (w <= 0 || h <= 0) throw DataError("zero-dimension image: " + path);
  if (maxval != 255) throw DataError("only 8-bit PNM supported: " + path);
  is.get();  // single whitespace before raster
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size())
    throw DataError("truncated PNM raster: " + path);
  Tensor4 img(1, channels, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < channels; ++ch)
        img.at(0, ch, y, x) =
            raw[(static_cast<std::size_t>(y) * w + x) * channels + ch] / 255.0f;
  return img;
}

// ---- PNG via libpng ----

Tensor4 load_png_file(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("cannot open: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("corrupt PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (w == 0 || h == 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("zero-dimension image: " + path);
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = raw.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  const int out_c = channels >= 3 ? 3 : 1;
  Tensor4 img(1, out_c, static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int ch = 0; ch < out_c; ++ch)
        img.at(0, ch, static_cast<int>(y), static_cast<int>(x)) =
            raw[(static_cast<std::size_t>(y) * w + x) * channels + ch] / 255.0f;
  return img;
}

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

}  // namespace

Tensor4 load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  unsigned char sig[8] = {0};
  is.read(reinterpret_cast<char*>(sig), 8);
  if (is.gcount() < 2) throw DataError("unreadable image: " + path);
  is.seekg(0);
  if (sig[0] == 0x89 && sig[1] == 'P') return load_png_file(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6'))
    return load_pnm(is, path);
  throw DataError("unrecognized image format: " + path);
}

void save_pgm(const std::string& path, const Tensor4& img) {
  require(img.n == 1 && img.c == 1, "save_pgm: expects (1,1,H,W)");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  for (std::size_t i = 0; i < img.size(); ++i) os.put(to_byte(img.data[i]));
  if (!os) throw DataError("write failed: " + path);
}

void save_ppm(const std::string& path, const Tensor4& img) {
  require(img.n == 1 && img.c == 3, "save_ppm: expects (1,3,H,W)");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) os.put(to_byte(img.at(0, ch, y, x)));
  if (!os) throw DataError("write failed: " + path);
}

void save_png(const std::string& path, const Tensor4& img) {
  require(img.n == 1 && (img.c == 1 || img.c == 3),
          "save_png: expects (1,1|3,H,W)");
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot open for writing: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("PNG write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.w, img.h, 8,
               img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<std::size_t>(img.w) * img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        row[static_cast<std::size_t>(x) * img.c + ch] = to_byte(img.at(0, ch, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Tensor4 resize_bilinear(const Tensor4& img, int out_h, int out_w) {
  require(img.h >= 1 && img.w >= 1 && out_h >= 1 && out_w >= 1,
          "resize_bilinear: empty dims");
  if (img.h == out_h && img.w == out_w) return img;
  Tensor4 out(img.n, img.c, out_h, out_w);
  // pixel-center alignment: source coord = (i + 0.5) * scale - 0.5
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int b = 0; b < img.n; ++b)
    for (int ch = 0; ch < img.c; ++ch) {
      const float* ip = img.plane(b, ch);
      float* op = out.plane(b, ch);
      for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(img.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                       static_cast<double>(img.w - 1));
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, img.w - 1);
          const double wx = fx - x0;
          const double v =
              (1 - wy) * ((1 - wx) * ip[y0 * img.w + x0] +
                          wx * ip[y0 * img.w + x1]) +
              wy * ((1 - wx) * ip[y1 * img.w + x0] + wx * ip[y1 * img.w + x1]);
          op[y * out_w + x] = static_cast<float>(v);
        }
      }
    }
  return out;
}

ImageRecord load_and_resize(const std::string& path, int target) {
  require(target >= 1, "load_and_resize: target must be >= 1");
  ImageRecord rec;
  rec.id = std::filesystem::path(path).filename().string();
  rec.pixels = resize_bilinear(load_image(path), target, target);
  rec.label = Label::unknown;
  return rec;
}

}  // namespace mdfsc
