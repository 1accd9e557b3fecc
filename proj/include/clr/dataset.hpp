#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "clr/errors.hpp"
#include "clr/tensor.hpp"

namespace clr {

// An in-memory labeled image set. Pixels are stored already normalized:
// raw bytes are scaled to [0,1] and then shifted/scaled per channel by
// (norm_mean, norm_std). The normalization constants used are kept so a test
// split can reuse its train split's statistics.
struct Dataset {
  std::string name;
  int channels = 0, height = 0, width = 0;
  std::vector<float> images;  // n * channels * height * width
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<float> norm_mean, norm_std;

  int size() const { return static_cast<int>(labels.size()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::int64_t image_elems() const {
    return static_cast<std::int64_t>(channels) * height * width;
  }
  const float* image(int i) const { return images.data() + i * image_elems(); }

  // Gathers the given sample indices into a [n,c,h,w] batch tensor.
  TensorPtr batch(const std::vector<int>& idxs) const {
    auto t = make_tensor<float>({static_cast<int>(idxs.size()), channels, height, width});
    const std::int64_t e = image_elems();
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      const int s = idxs[i];
      if (s < 0 || s >= size()) throw RangeError("batch index out of range");
      std::copy(image(s), image(s) + e, t->data.begin() + static_cast<std::int64_t>(i) * e);
    }
    return t;
  }

  std::vector<int> batch_labels(const std::vector<int>& idxs) const {
    std::vector<int> out(idxs.size());
    for (std::size_t i = 0; i < idxs.size(); ++i) out[i] = labels[static_cast<std::size_t>(idxs[i])];
    return out;
  }

  void check() const {
    if (channels < 1 || height < 1 || width < 1) throw DataError("dataset has empty geometry");
    if (images.size() != static_cast<std::size_t>(size()) * static_cast<std::size_t>(image_elems()))
      throw DataError("dataset image buffer size mismatch");
    for (int l : labels)
      if (l < 0 || l >= num_classes())
        throw DataError("label " + std::to_string(l) + " outside class list of size " +
                        std::to_string(num_classes()));
  }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("truncated " + what + " (header)");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Scales raw bytes to [0,1], derives per-channel mean/std when none are
// given, and applies them. A constant channel gets std clamped to 1 so the
// division stays finite.
inline void normalize_pixels(const std::vector<unsigned char>& raw, int n, int c,
                             std::int64_t plane, const std::vector<float>* mean_in,
                             const std::vector<float>* std_in, Dataset& ds) {
  ds.images.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    ds.images[i] = static_cast<float>(raw[i]) / 255.0f;
  if (mean_in && std_in) {
    ds.norm_mean = *mean_in;
    ds.norm_std = *std_in;
  } else {
    ds.norm_mean.assign(static_cast<std::size_t>(c), 0.0f);
    ds.norm_std.assign(static_cast<std::size_t>(c), 1.0f);
    const double per_ch = static_cast<double>(n) * plane;
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = ds.images.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
        for (std::int64_t t = 0; t < plane; ++t) acc += p[t];
      }
      const double mu = acc / per_ch;
      double var = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = ds.images.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
        for (std::int64_t t = 0; t < plane; ++t) {
          const double d = p[t] - mu;
          var += d * d;
        }
      }
      var /= per_ch;
      ds.norm_mean[static_cast<std::size_t>(ch)] = static_cast<float>(mu);
      const double sd = std::sqrt(var);
      ds.norm_std[static_cast<std::size_t>(ch)] = sd < 1e-8 ? 1.0f : static_cast<float>(sd);
    }
  }
  if (static_cast<int>(ds.norm_mean.size()) != c || static_cast<int>(ds.norm_std.size()) != c)
    throw DataError("normalization constants must have one entry per channel");
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      float* p = ds.images.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
      const float mu = ds.norm_mean[static_cast<std::size_t>(ch)];
      const float sd = ds.norm_std[static_cast<std::size_t>(ch)];
      for (std::int64_t t = 0; t < plane; ++t) p[t] = (p[t] - mu) / sd;
    }
  }
}

}  // namespace detail

// --- IDX ---------------------------------------------------------------------
//
// The de-facto IDX layout: 4-byte big-endian magic (0x00000803 for 3-d u8
// image files, 0x00000801 for 1-d u8 label files), one big-endian u32 per
// dimension, then raw bytes. Images come out as single-channel.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const std::vector<float>* mean = nullptr,
                        const std::vector<float>* stddev = nullptr) {
  std::ifstream imf(images_path, std::ios::binary);
  if (!imf) throw FormatError("cannot open image file: " + images_path);
  if (detail::read_be32(imf, "image file") != 0x00000803u)
    throw FormatError("bad magic in image file: " + images_path);
  const std::uint32_t n = detail::read_be32(imf, "image file");
  const std::uint32_t h = detail::read_be32(imf, "image file");
  const std::uint32_t w = detail::read_be32(imf, "image file");
  if (n == 0 || h == 0 || w == 0) throw FormatError("empty image file: " + images_path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
  if (!imf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw FormatError("truncated image file: " + images_path);

  std::ifstream lbf(labels_path, std::ios::binary);
  if (!lbf) throw FormatError("cannot open label file: " + labels_path);
  if (detail::read_be32(lbf, "label file") != 0x00000801u)
    throw FormatError("bad magic in label file: " + labels_path);
  const std::uint32_t ln = detail::read_be32(lbf, "label file");
  if (ln != n)
    throw FormatError("image/label count mismatch: " + std::to_string(n) + " vs " +
                       std::to_string(ln));
  std::vector<unsigned char> lraw(ln);
  if (!lbf.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lraw.size())))
    throw FormatError("truncated label file: " + labels_path);

  Dataset ds;
  ds.name = std::filesystem::path(images_path).stem().string();
  ds.channels = 1;
  ds.height = static_cast<int>(h);
  ds.width = static_cast<int>(w);
  ds.labels.assign(lraw.begin(), lraw.end());
  int max_label = 0;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  for (int cidx = 0; cidx <= max_label; ++cidx)
    ds.class_names.push_back("class" + std::to_string(cidx));
  detail::normalize_pixels(raw, static_cast<int>(n), 1,
                           static_cast<std::int64_t>(h) * w, mean, stddev, ds);
  ds.check();
  return ds;
}

/// Writes raw u8 images [n,h,w] and labels as an IDX pair.
inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const std::vector<unsigned char>& pixels,
                      const std::vector<unsigned char>& labels, int h, int w) {
  const std::size_t n = labels.size();
  if (pixels.size() != n * static_cast<std::size_t>(h) * w)
    throw DataError("write_idx: pixel buffer does not match n*h*w");
  std::ofstream imf(images_path, std::ios::binary | std::ios::trunc);
  if (!imf) throw FormatError("cannot write image file: " + images_path);
  detail::write_be32(imf, 0x00000803u);
  detail::write_be32(imf, static_cast<std::uint32_t>(n));
  detail::write_be32(imf, static_cast<std::uint32_t>(h));
  detail::write_be32(imf, static_cast<std::uint32_t>(w));
  imf.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  std::ofstream lbf(labels_path, std::ios::binary | std::ios::trunc);
  if (!lbf) throw FormatError("cannot write label file: " + labels_path);
  detail::write_be32(lbf, 0x00000801u);
  detail::write_be32(lbf, static_cast<std::uint32_t>(n));
  lbf.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!imf.flush() || !lbf.flush()) throw FormatError("idx write failed");
}

// --- PPM / PGM -----------------------------------------------------------------

struct RawImage {
  int channels = 0, height = 0, width = 0;
  std::vector<unsigned char> pixels;  // planar, channel-major
};

// Binary PGM (P5, 1 channel) and PPM (P6, 3 channels), maxval up to 255.
// Returns planar channel-major pixels.
inline RawImage load_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("missing image file: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6") throw FormatError("unsupported raster format in " + path);
  auto next_int = [&]() {
    // Skips whitespace and '#' comment lines between header fields.
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    int v = -1;
    f >> v;
    if (!f || v < 0) throw FormatError("bad header in " + path);
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval <= 0 || maxval > 255) throw FormatError("unsupported maxval in " + path);
  f.get();  // single whitespace after maxval
  const int c = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> inter(static_cast<std::size_t>(w) * h * c);
  if (!f.read(reinterpret_cast<char*>(inter.data()), static_cast<std::streamsize>(inter.size())))
    throw FormatError("truncated pixel data in " + path);
  RawImage img;
  img.channels = c;
  img.height = h;
  img.width = w;
  img.pixels.resize(inter.size());
  // interleaved -> planar
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        img.pixels[(static_cast<std::size_t>(ch) * h + y) * w + x] =
            inter[(static_cast<std::size_t>(y) * w + x) * c + ch];
  return img;
}

inline void write_pnm(const std::string& path, const RawImage& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path);
  f << (img.channels == 3 ? "P6" : "P5") << "\n"
    << img.width << " " << img.height << "\n255\n";
  const int c = img.channels, h = img.height, w = img.width;
  std::vector<unsigned char> inter(static_cast<std::size_t>(w) * h * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        inter[(static_cast<std::size_t>(y) * w + x) * c + ch] =
            img.pixels[(static_cast<std::size_t>(ch) * h + y) * w + x];
  f.write(reinterpret_cast<const char*>(inter.data()), static_cast<std::streamsize>(inter.size()));
  if (!f.flush()) throw FormatError("write failed for " + path);
}

namespace detail {

// Nearest-neighbor scale of the shorter side to the target, then center crop.
inline RawImage resize_center_crop(const RawImage& in, int th, int tw) {
  const double scale = std::max(static_cast<double>(th) / in.height,
                                static_cast<double>(tw) / in.width);
  const int sh = std::max(th, static_cast<int>(std::lround(in.height * scale)));
  const int sw = std::max(tw, static_cast<int>(std::lround(in.width * scale)));
  RawImage out;
  out.channels = in.channels;
  out.height = th;
  out.width = tw;
  out.pixels.resize(static_cast<std::size_t>(in.channels) * th * tw);
  const int y_off = (sh - th) / 2, x_off = (sw - tw) / 2;
  for (int ch = 0; ch < in.channels; ++ch) {
    const unsigned char* plane =
        in.pixels.data() + static_cast<std::size_t>(ch) * in.height * in.width;
    unsigned char* dst = out.pixels.data() + static_cast<std::size_t>(ch) * th * tw;
    for (int y = 0; y < th; ++y) {
      const int sy = std::min(in.height - 1,
                              static_cast<int>((y + y_off) * in.height / static_cast<double>(sh)));
      for (int x = 0; x < tw; ++x) {
        const int sx = std::min(in.width - 1,
                                static_cast<int>((x + x_off) * in.width / static_cast<double>(sw)));
        dst[static_cast<std::size_t>(y) * tw + x] =
            plane[static_cast<std::size_t>(sy) * in.width + sx];
      }
    }
  }
  return out;
}

inline RawImage convert_channels(const RawImage& in, int tc) {
  if (in.channels == tc) return in;
  RawImage out;
  out.channels = tc;
  out.height = in.height;
  out.width = in.width;
  const std::size_t plane = static_cast<std::size_t>(in.height) * in.width;
  out.pixels.resize(plane * tc);
  if (in.channels == 3 && tc == 1) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int v = in.pixels[i] + in.pixels[plane + i] + in.pixels[2 * plane + i];
      out.pixels[i] = static_cast<unsigned char>(v / 3);
    }
  } else if (in.channels == 1 && tc == 3) {
    for (int ch = 0; ch < 3; ++ch)
      std::copy(in.pixels.begin(), in.pixels.begin() + static_cast<std::ptrdiff_t>(plane),
                out.pixels.begin() + static_cast<std::ptrdiff_t>(ch * plane));
  } else {
    throw FormatError("unsupported channel conversion " + std::to_string(in.channels) +
                       " -> " + std::to_string(tc));
  }
  return out;
}

}  // namespace detail

// --- manifest directory ---------------------------------------------------------
//
// dir/manifest.csv with header `path,label` (paths relative to dir, labels by
// name), dir/classes.txt with one class name per line. Images are PGM/PPM,
// resized and center-cropped to (c,h,w).
inline Dataset load_manifest(const std::string& dir, int c, int h, int w,
                             const std::vector<float>* mean = nullptr,
                             const std::vector<float>* stddev = nullptr) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream cls(root / "classes.txt");
  if (!cls) throw FormatError("missing classes.txt in " + dir);
  Dataset ds;
  ds.name = root.filename().string();
  ds.channels = c;
  ds.height = h;
  ds.width = w;
  std::string line;
  while (std::getline(cls, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) ds.class_names.push_back(line);
  }
  if (ds.class_names.empty()) throw FormatError("classes.txt is empty in " + dir);

  std::ifstream mf(root / "manifest.csv");
  if (!mf) throw FormatError("missing manifest.csv in " + dir);
  if (!std::getline(mf, line)) throw FormatError("empty manifest.csv in " + dir);
  while (!line.empty() && (line.back() == '\r')) line.pop_back();
  if (line != "path,label")
    throw FormatError("manifest.csv must start with header `path,label`, got: " + line);

  std::vector<unsigned char> raw;
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  while (std::getline(mf, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError("manifest row missing comma: " + line);
    const std::string rel = line.substr(0, comma);
    const std::string label_name = line.substr(comma + 1);
    int label = -1;
    for (std::size_t i = 0; i < ds.class_names.size(); ++i)
      if (ds.class_names[i] == label_name) label = static_cast<int>(i);
    if (label < 0) throw DataError("manifest label `" + label_name + "` not in classes.txt");
    RawImage img = load_pnm((root / rel).string());
    img = detail::convert_channels(img, c);
    img = detail::resize_center_crop(img, h, w);
    raw.insert(raw.end(), img.pixels.begin(), img.pixels.end());
    ds.labels.push_back(label);
  }
  if (ds.labels.empty()) throw FormatError("manifest.csv lists no images in " + dir);
  detail::normalize_pixels(raw, ds.size(), c, plane, mean, stddev, ds);
  ds.check();
  return ds;
}

}  // namespace clr
