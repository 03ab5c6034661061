#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "fgdc/data/io.hpp"

namespace fgdc {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

Tensor<float> from_bytes(const std::vector<unsigned char>& px, int h, int w, int channels) {
  Tensor<float> t({1, 3, h, w});
  auto d = t.mutable_data();
  const std::size_t P = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < P; ++p)
    for (int c = 0; c < 3; ++c) {
      const int src = channels >= 3 ? c : 0;
      d[c * P + p] = static_cast<float>(px[p * channels + src]) / 255.0f;
    }
  return t;
}

std::vector<unsigned char> to_bytes(const Tensor<float>& image) {
  const Shape s = image.shape();
  require(s.n >= 1 && (s.c == 3 || s.c == 1), "write_image expects 1 or 3 channels, got " +
                                                   s.str());
  const std::size_t P = s.plane();
  std::vector<unsigned char> px(P * 3);
  for (std::size_t p = 0; p < P; ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = image.data()[(s.c == 3 ? c : 0) * P + p];
      const float q = std::round(std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f) * 255.0f);
      px[p * 3 + c] = static_cast<unsigned char>(q);
    }
  return px;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

Tensor<float> read_png(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<unsigned char> px;
  std::vector<png_bytep> rows;
  int h = 0, w = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt or truncated PNG " + path.string() + ": " + error);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  px.resize(static_cast<std::size_t>(w) * h * channels);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = px.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_bytes(px, h, w, channels);
}

void write_png(const Tensor<float>& image, const std::filesystem::path& path) {
  const Shape s = image.shape();
  std::vector<unsigned char> px = to_bytes(image);
  File f = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(s.h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing PNG " + path.string() + ": " + error);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, s.w, s.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < s.h; ++y) rows[y] = px.data() + static_cast<std::size_t>(y) * s.w * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Skips whitespace and '#' comments between PPM header tokens.
int ppm_token(std::istream& in, const std::filesystem::path& path) {
  int ch;
  while ((ch = in.peek()) != EOF) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  if (!(in >> v) || v < 0) throw DataError("malformed PPM header in " + path.string());
  return v;
}

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  const int w = ppm_token(in, path);
  const int h = ppm_token(in, path);
  const int maxval = ppm_token(in, path);
  if (maxval != 255) throw DataError("only 8-bit PPM is supported: " + path.string());
  in.get();
  if (w <= 0 || h <= 0) throw DataError("empty PPM " + path.string());
  std::vector<unsigned char> px(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (static_cast<std::size_t>(in.gcount()) != px.size())
    throw DataError("truncated PPM " + path.string());
  return from_bytes(px, h, w, 3);
}

void write_ppm(const Tensor<float>& image, const std::filesystem::path& path) {
  const Shape s = image.shape();
  std::vector<unsigned char> px = to_bytes(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "P6\n" << s.w << ' ' << s.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

Tensor<float> read_image(const std::filesystem::path& path) {
  unsigned char head[8] = {};
  {
    File f = open_file(path, "rb");
    const std::size_t got = std::fread(head, 1, sizeof head, f.get());
    if (got >= 8 && png_sig_cmp(head, 0, 8) == 0) return read_png(path);
    if (got >= 2 && head[0] == 'P' && head[1] == '6') return read_ppm(path);
  }
  throw DataError("unsupported image format (expected PNG or binary PPM): " + path.string());
}

void write_image(const Tensor<float>& image, const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return write_png(image, path);
  if (ext == ".ppm") return write_ppm(image, path);
  throw DataError("unsupported image extension '" + ext + "' for " + path.string());
}

}  // namespace fgdc
