#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "clr/dataset.hpp"
#include "clr/rng.hpp"

// Self-contained synthetic image sets, written as ordinary IDX files. Two
// disjoint domains: digits (bitmap-font glyphs with scale/position/intensity
// jitter) and clothing (procedural garment silhouettes). Both are 1x28x28,
// 10 classes, and entirely a function of the seed.

namespace clr {

namespace detail {

// 5x7 digit glyphs, rows top to bottom, LSB = leftmost column.
inline const std::array<std::array<std::uint8_t, 7>, 10>& digit_font() {
  static const std::array<std::array<std::uint8_t, 7>, 10> font = {{
      {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
      {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
      {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
      {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
      {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
      {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
      {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
      {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
      {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
      {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
  }};
  return font;
}

inline void render_digit(unsigned char* img, int digit, Rng& rng) {
  const int s = 3 + static_cast<int>(rng.next_below(2));  // glyph scale 3 or 4
  const int gw = 5 * s, gh = 7 * s;
  const int x0 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(28 - gw + 1)));
  const int y0 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(28 - gh + 1)));
  const int base = 150 + static_cast<int>(rng.next_below(76));
  for (int i = 0; i < 28 * 28; ++i)
    img[i] = static_cast<unsigned char>(rng.next_below(36));
  const auto& rows = digit_font()[static_cast<std::size_t>(digit)];
  for (int gy = 0; gy < 7; ++gy) {
    for (int gx = 0; gx < 5; ++gx) {
      if (!((rows[static_cast<std::size_t>(gy)] >> (4 - gx)) & 1)) continue;
      for (int dy = 0; dy < s; ++dy) {
        for (int dx = 0; dx < s; ++dx) {
          const int v = base + static_cast<int>(rng.next_below(106)) - 40;
          img[(y0 + gy * s + dy) * 28 + (x0 + gx * s + dx)] =
              static_cast<unsigned char>(std::min(255, std::max(0, v)));
        }
      }
    }
  }
}

// Garment masks drawn from rectangles with per-sample jitter.
inline void render_clothing(unsigned char* img, int cls, Rng& rng) {
  float mask[28 * 28] = {};
  const int jy = static_cast<int>(rng.next_below(5)) - 2;
  const int jx = static_cast<int>(rng.next_below(5)) - 2;
  const int grow = static_cast<int>(rng.next_below(3)) - 1;
  auto rect = [&](int y0, int y1, int x0, int x1) {
    y0 = std::max(0, std::min(27, y0 + jy));
    y1 = std::max(0, std::min(27, y1 + jy));
    x0 = std::max(0, std::min(27, x0 + jx - grow));
    x1 = std::max(0, std::min(27, x1 + jx + grow));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) mask[y * 28 + x] = 1.0f;
  };
  auto clear = [&](int y0, int y1, int x0, int x1) {
    y0 = std::max(0, std::min(27, y0 + jy));
    y1 = std::max(0, std::min(27, y1 + jy));
    x0 = std::max(0, std::min(27, x0 + jx));
    x1 = std::max(0, std::min(27, x1 + jx));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) mask[y * 28 + x] = 0.0f;
  };
  switch (cls) {
    case 0:  // tshirt: wide sleeve bar + torso
      rect(6, 10, 3, 24);
      rect(6, 22, 9, 18);
      break;
    case 1:  // trouser: waistband + two legs
      rect(4, 7, 9, 18);
      rect(7, 24, 9, 12);
      rect(7, 24, 15, 18);
      break;
    case 2:  // pullover: long sleeves + wide torso
      rect(6, 12, 2, 25);
      rect(6, 24, 8, 19);
      break;
    case 3:  // dress: flared triangle
      for (int r = 0; r < 20; ++r) {
        const int half = 2 + (r * 8) / 19;
        rect(5 + r, 5 + r, 14 - half, 13 + half);
      }
      break;
    case 4:  // coat: long body with collar notch
      rect(4, 25, 7, 20);
      clear(4, 9, 12, 15);
      break;
    case 5:  // sandal: sole + straps
      rect(18, 21, 4, 24);
      rect(12, 13, 6, 22);
      rect(15, 16, 8, 24);
      break;
    case 6:  // shirt: narrow torso, short sleeves
      rect(5, 9, 6, 21);
      rect(5, 23, 11, 16);
      break;
    case 7:  // sneaker: low wedge with toe rise
      rect(16, 22, 3, 24);
      rect(13, 16, 14, 24);
      break;
    case 8:  // bag: body + handle arch
      rect(10, 23, 5, 22);
      rect(6, 7, 9, 18);
      rect(6, 10, 9, 10);
      rect(6, 10, 17, 18);
      break;
    case 9:  // boot: shaft + foot
      rect(4, 18, 14, 20);
      rect(15, 22, 6, 20);
      break;
    default:
      throw RangeError("clothing class out of range");
  }
  for (int i = 0; i < 28 * 28; ++i) {
    if (mask[i] > 0.0f) {
      const int v = 150 + static_cast<int>(rng.next_below(100));
      img[i] = static_cast<unsigned char>(v);
    } else {
      img[i] = static_cast<unsigned char>(rng.next_below(30));
    }
  }
}

inline void write_split(const std::string& dir, const std::string& stem, int n_total,
                        Rng& rng, void (*render)(unsigned char*, int, Rng&)) {
  const int per = n_total / 10;
  if (per < 1 || n_total % 10 != 0)
    throw RangeError("synthetic split size must be a positive multiple of 10");
  std::vector<unsigned char> pixels(static_cast<std::size_t>(n_total) * 28 * 28);
  std::vector<unsigned char> labels(static_cast<std::size_t>(n_total));
  // Classes interleaved so any prefix is still roughly balanced.
  for (int i = 0; i < n_total; ++i) {
    const int cls = i % 10;
    labels[static_cast<std::size_t>(i)] = static_cast<unsigned char>(cls);
    render(pixels.data() + static_cast<std::size_t>(i) * 28 * 28, cls, rng);
  }
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_idx((fs::path(dir) / (stem + "-images.idx")).string(),
            (fs::path(dir) / (stem + "-labels.idx")).string(), pixels, labels, 28, 28);
}

}  // namespace detail

// Writes {stem}-train-images.idx / -labels.idx and {stem}-test-* into dir.
// Deterministic in (counts, seed).
inline void make_digits_idx(const std::string& dir, int n_train, int n_test,
                            std::uint64_t seed) {
  Rng rng(seed);
  Rng train_rng = rng.fork(0), test_rng = rng.fork(1);
  detail::write_split(dir, "digits-train", n_train, train_rng, detail::render_digit);
  detail::write_split(dir, "digits-test", n_test, test_rng, detail::render_digit);
}

inline void make_clothing_idx(const std::string& dir, int n_train, int n_test,
                              std::uint64_t seed) {
  Rng rng(seed);
  Rng train_rng = rng.fork(0), test_rng = rng.fork(1);
  detail::write_split(dir, "clothing-train", n_train, train_rng, detail::render_clothing);
  detail::write_split(dir, "clothing-test", n_test, test_rng, detail::render_clothing);
}

}  // namespace clr
