#pragma once

// Pixel-exact segmentation machinery: binary rasters, the COCO-style
// compressed run-length codec, boolean mask algebra and polygon
// rasterization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctxmask/errors.hpp"

namespace ctxmask {

namespace detail {
inline std::size_t checked_raster_size(int width, int height) {
  if (width < 0 || height < 0)
    throw std::invalid_argument("mask dimensions must be non-negative");
  return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}
}  // namespace detail

/// A single-channel binary raster. Bits are stored in column-major order
/// (pixel (row r, col c) lives at index c*height + r), the COCO run-length
/// convention; all run-length counts in this module follow that order.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // one byte per pixel, 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h)
      : width(w), height(h), bits(detail::checked_raster_size(w, h), 0) {}

  bool at(int r, int c) const {
    return bits[static_cast<std::size_t>(c) * height + r] != 0;
  }
  void set(int r, int c, bool v) {
    bits[static_cast<std::size_t>(c) * height + r] = v ? 1 : 0;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Run-length encoding of a BinaryMask: alternating background/foreground
/// run lengths over the column-major pixel order, starting with a
/// background run (possibly zero-length). sum(counts) == height*width.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

namespace detail {
inline void require_same_dims(const BinaryMask& a, const BinaryMask& b,
                              const char* op) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument(std::string(op) + ": mask dimensions differ");
}
}  // namespace detail

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_dims(a, b, "mask_union");
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= b.bits[i];
  return out;
}

inline BinaryMask mask_intersect(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_dims(a, b, "mask_intersect");
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] &= b.bits[i];
  return out;
}

inline BinaryMask mask_subtract(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_dims(a, b, "mask_subtract");
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i)
    out.bits[i] = static_cast<std::uint8_t>(out.bits[i] & ~b.bits[i] & 1u);
  return out;
}

inline std::int64_t mask_area(const BinaryMask& m) {
  std::int64_t n = 0;
  for (std::uint8_t b : m.bits) n += b;
  return n;
}

inline Rle rle_from_mask(const BinaryMask& m) {
  Rle r;
  r.height = m.height;
  r.width = m.width;
  std::uint8_t current = 0;  // runs start with background
  std::uint32_t run = 0;
  for (std::uint8_t b : m.bits) {
    if (b == current) {
      ++run;
    } else {
      r.counts.push_back(run);
      current = b;
      run = 1;
    }
  }
  if (!m.bits.empty()) r.counts.push_back(run);
  return r;
}

inline BinaryMask rle_to_mask(const Rle& r) {
  const std::int64_t expected =
      static_cast<std::int64_t>(r.height) * static_cast<std::int64_t>(r.width);
  std::int64_t total = 0;
  for (std::uint32_t c : r.counts) total += c;
  if (total != expected)
    throw ParseError("RLE counts sum to " + std::to_string(total) +
                     ", expected " + std::to_string(expected) + " for " +
                     std::to_string(r.height) + "x" + std::to_string(r.width));
  BinaryMask m(r.width, r.height);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t c : r.counts) {
    std::fill_n(m.bits.begin() + pos, c, value);
    pos += c;
    value ^= 1u;
  }
  return m;
}

/// Serializes run counts into the compact printable form: counts are
/// delta-coded against the count two positions back (d_i = c_i - c_{i-2}
/// for i >= 2), then each signed delta is emitted little-endian in 6-bit
/// characters: 5 value bits plus a continuation bit (0x20), offset by
/// ASCII 48. A chunk with bit 0x10 set in the final position marks a
/// negative value (sign extension on decode).
inline std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts) {
  std::string out;
  out.reserve(counts.size() * 2);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::int64_t x = static_cast<std::int64_t>(counts[i]);
    if (i >= 2) x -= static_cast<std::int64_t>(counts[i - 2]);
    bool more = true;
    while (more) {
      int chunk = static_cast<int>(x & 0x1f);
      x >>= 5;  // arithmetic shift; C++20 guarantees sign extension
      more = (chunk & 0x10) ? x != -1 : x != 0;
      if (more) chunk |= 0x20;
      out.push_back(static_cast<char>(chunk + 48));
    }
  }
  return out;
}

inline Rle rle_decode(std::string_view encoded, int height, int width) {
  Rle r;
  r.height = height;
  r.width = width;
  std::size_t p = 0;
  while (p < encoded.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    int chunk = 0;
    while (more) {
      if (p >= encoded.size())
        throw ParseError("truncated RLE string (continuation bit at end)");
      chunk = encoded[p] - 48;
      if (chunk < 0 || chunk > 63)
        throw ParseError("invalid RLE character at offset " + std::to_string(p));
      if (k >= 12) throw ParseError("RLE run count overflows 64 bits");
      x |= static_cast<std::int64_t>(chunk & 0x1f) << (5 * k);
      more = (chunk & 0x20) != 0;
      ++p;
      ++k;
    }
    if (chunk & 0x10)  // sign-extend the final chunk
      x |= ~((std::int64_t(1) << (5 * k)) - 1);
    if (r.counts.size() >= 2)
      x += static_cast<std::int64_t>(r.counts[r.counts.size() - 2]);
    if (x < 0)
      throw ParseError("RLE decodes to negative run count at index " +
                       std::to_string(r.counts.size()));
    r.counts.push_back(static_cast<std::uint32_t>(x));
  }
  const std::int64_t expected =
      static_cast<std::int64_t>(height) * static_cast<std::int64_t>(width);
  std::int64_t total = 0;
  for (std::uint32_t c : r.counts) total += c;
  if (total != expected)
    throw ParseError("RLE counts sum to " + std::to_string(total) +
                     ", expected " + std::to_string(expected) + " for " +
                     std::to_string(height) + "x" + std::to_string(width));
  return r;
}

inline std::string rle_encode(const BinaryMask& mask) {
  return rle_counts_to_string(rle_from_mask(mask).counts);
}

/// Fills every pixel whose center lies inside any of the polygons under the
/// even-odd rule. Polygons are flat [x0,y0,x1,y1,...] lists in pixel
/// coordinates; multiple polygons are unioned (each filled even-odd on its
/// own). Pixel (r,c) has center (c+0.5, r+0.5); span boundaries are treated
/// left-closed/right-open so shared edges are not double-counted.
inline BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons,
                                     int height, int width) {
  BinaryMask mask(width, height);
  std::vector<double> crossings;
  for (const auto& poly : polygons) {
    if (poly.size() < 6 || poly.size() % 2 != 0)
      throw std::invalid_argument("polygon needs at least 3 (x,y) vertices");
    const std::size_t n = poly.size() / 2;
    for (int r = 0; r < height; ++r) {
      const double y = r + 0.5;
      crossings.clear();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double y1 = poly[2 * j + 1];
        const double y2 = poly[2 * i + 1];
        if ((y1 <= y && y < y2) || (y2 <= y && y < y1)) {
          const double x1 = poly[2 * j];
          const double x2 = poly[2 * i];
          crossings.push_back(x1 + (y - y1) / (y2 - y1) * (x2 - x1));
        }
      }
      std::sort(crossings.begin(), crossings.end());
      for (std::size_t i = 0; i + 1 < crossings.size(); i += 2) {
        int c0 = static_cast<int>(std::ceil(crossings[i] - 0.5));
        int c1 = static_cast<int>(std::ceil(crossings[i + 1] - 0.5)) - 1;
        c0 = std::max(c0, 0);
        c1 = std::min(c1, width - 1);
        for (int c = c0; c <= c1; ++c) mask.set(r, c, true);
      }
    }
  }
  return mask;
}

}  // namespace ctxmask
