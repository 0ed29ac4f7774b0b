#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "conlabel/common.hpp"

// Near-duplicate removal: difference hash on a 9x8 luminance grid, Hamming
// distance between hashes, greedy first-kept-wins clustering.

namespace conlabel::dedup {

struct GrayImage {
  size_t width = 0;
  size_t height = 0;
  std::vector<uint8_t> pixels;  // row-major, one byte per pixel

  uint8_t at(size_t r, size_t c) const { return pixels[r * width + c]; }
};

struct PerceptualHash {
  uint64_t bits = 0;
  bool operator==(const PerceptualHash&) const = default;
};

inline uint8_t luma(uint8_t r, uint8_t g, uint8_t b) {
  return static_cast<uint8_t>((77 * r + 150 * g + 29 * b) >> 8);
}

// Bilinear sample with center-aligned coordinates. Resampling an image to its
// own size reproduces it exactly, which pins the hash-after-downscale
// invariant.
inline double bilinear_sample(const GrayImage& img, double x, double y) {
  double max_x = static_cast<double>(img.width - 1);
  double max_y = static_cast<double>(img.height - 1);
  x = std::clamp(x, 0.0, max_x);
  y = std::clamp(y, 0.0, max_y);
  size_t x0 = static_cast<size_t>(x);
  size_t y0 = static_cast<size_t>(y);
  size_t x1 = std::min(x0 + 1, img.width - 1);
  size_t y1 = std::min(y0 + 1, img.height - 1);
  double fx = x - static_cast<double>(x0);
  double fy = y - static_cast<double>(y0);
  double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
  double bot = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
  return (1.0 - fy) * top + fy * bot;
}

inline constexpr size_t kHashGridWidth = 9;
inline constexpr size_t kHashGridHeight = 8;

inline PerceptualHash dhash(const GrayImage& img) {
  if (img.width == 0 || img.height == 0)
    fail(ErrorCode::EmptyImage, "dhash requires a non-empty image");
  double grid[kHashGridHeight][kHashGridWidth];
  for (size_t r = 0; r < kHashGridHeight; ++r) {
    double y = (static_cast<double>(r) + 0.5) * static_cast<double>(img.height) /
                   static_cast<double>(kHashGridHeight) -
               0.5;
    for (size_t c = 0; c < kHashGridWidth; ++c) {
      double x = (static_cast<double>(c) + 0.5) * static_cast<double>(img.width) /
                     static_cast<double>(kHashGridWidth) -
                 0.5;
      grid[r][c] = bilinear_sample(img, x, y);
    }
  }
  uint64_t bits = 0;
  for (size_t r = 0; r < kHashGridHeight; ++r)
    for (size_t c = 0; c + 1 < kHashGridWidth; ++c)
      if (grid[r][c] < grid[r][c + 1]) bits |= uint64_t{1} << (r * 8 + c);
  return {bits};
}

inline int hamming(PerceptualHash a, PerceptualHash b) { return std::popcount(a.bits ^ b.bits); }

struct RemovedEntry {
  std::string id;
  std::string duplicate_of;
  int distance = 0;
};

struct DedupReport {
  std::vector<std::string> kept;
  std::vector<RemovedEntry> removed;
  int threshold = 0;
};

inline DedupReport dedup_hashes(const std::vector<std::pair<std::string, PerceptualHash>>& items,
                                int threshold) {
  std::unordered_set<std::string> seen;
  DedupReport report;
  report.threshold = threshold;
  std::vector<PerceptualHash> kept_hashes;
  for (const auto& [id, hash] : items) {
    if (!seen.insert(id).second) fail(ErrorCode::DuplicateId, "duplicate instance id '" + id + "'");
    bool removed = false;
    for (size_t i = 0; i < kept_hashes.size(); ++i) {
      int d = hamming(hash, kept_hashes[i]);
      if (d <= threshold) {
        report.removed.push_back({id, report.kept[i], d});
        removed = true;
        break;
      }
    }
    if (!removed) {
      report.kept.push_back(id);
      kept_hashes.push_back(hash);
    }
  }
  return report;
}

inline DedupReport dedup(const std::vector<std::pair<std::string, GrayImage>>& instances,
                         int threshold) {
  std::vector<std::pair<std::string, PerceptualHash>> hashed;
  hashed.reserve(instances.size());
  for (const auto& [id, img] : instances) hashed.emplace_back(id, dhash(img));
  return dedup_hashes(hashed, threshold);
}

// --- PGM (P5) I/O; other formats come in through a caller-supplied decoder ---

using ImageDecoder = std::function<std::optional<GrayImage>(const std::string& path)>;

inline GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open image file '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5") fail(ErrorCode::UnsupportedImage, "'" + path + "' is not a P5 PGM file");
  auto next_int = [&](const char* field) -> long {
    // skip whitespace and '#' comment lines between header tokens
    int ch = in.peek();
    while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
      if (ch == '#') {
        std::string comment;
        std::getline(in, comment);
      } else {
        in.get();
      }
      ch = in.peek();
    }
    long v = -1;
    if (!(in >> v) || v < 0)
      fail(ErrorCode::ParseError, std::string("bad PGM ") + field + " in '" + path + "'");
    return v;
  };
  long width = next_int("width");
  long height = next_int("height");
  long maxval = next_int("maxval");
  if (maxval <= 0 || maxval > 255)
    fail(ErrorCode::UnsupportedImage, "only 8-bit PGM supported: '" + path + "'");
  in.get();  // single whitespace byte before raster
  GrayImage img;
  img.width = static_cast<size_t>(width);
  img.height = static_cast<size_t>(height);
  img.pixels.resize(img.width * img.height);
  if (!img.pixels.empty()) {
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<size_t>(in.gcount()) != img.pixels.size())
      fail(ErrorCode::ParseError, "truncated PGM raster in '" + path + "'");
  }
  return img;
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write image file '" + path + "'");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

inline GrayImage load_image(const std::string& path, const ImageDecoder& decoder = {}) {
  if (decoder) {
    if (auto img = decoder(path)) return *img;
  }
  return load_pgm(path);
}

}  // namespace conlabel::dedup
