#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cforb/core.hpp"

namespace cforb {

/// Multi-scale oriented corner. Coordinates are level-0 pixels; `octave` is
/// the pyramid level the corner was detected at.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;
  double angle = 0.0;  // radians in [0, 2*pi)
  int octave = 0;
};

/// Intensity-weighted patch sums; offsets are relative to the patch center,
/// so m10/m01 can be negative.
struct OrientationMoments {
  std::int64_t m00 = 0;
  std::int64_t m10 = 0;
  std::int64_t m01 = 0;
};

struct PatchOrientation {
  double angle = 0.0;
  bool degenerate = false;  // both centroid moments zero
};

namespace detail {

// Bresenham circle of radius 3, 16 pixels, clockwise from the top.
inline constexpr int kCircleDx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
inline constexpr int kCircleDy[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
inline constexpr int kSegmentArc = 9;  // FAST-9

/// Segment-test score at one pixel: if a contiguous circular run of >= 9
/// pixels is all brighter than center+threshold (or all darker than
/// center-threshold), the score is the sum of threshold exceedances over all
/// circle pixels of the passing polarity; 0 means no corner. At most one
/// polarity can pass (9 + 9 > 16).
inline int fast_score(const GrayImage& img, int x, int y, int threshold) {
  const int c = img.at(x, y);
  const int hi = c + threshold;
  const int lo = c - threshold;

  bool bright[16];
  bool dark[16];
  int bright_sum = 0;
  int dark_sum = 0;
  for (int k = 0; k < 16; ++k) {
    const int v = img.at(x + kCircleDx[k], y + kCircleDy[k]);
    bright[k] = v > hi;
    dark[k] = v < lo;
    if (bright[k]) bright_sum += v - hi;
    if (dark[k]) dark_sum += lo - v;
  }

  auto has_arc = [](const bool* mask) {
    int run = 0;
    // Doubling the circle handles wrap-around runs.
    for (int k = 0; k < 32; ++k) {
      if (mask[k % 16]) {
        if (++run >= kSegmentArc) return true;
      } else {
        run = 0;
      }
    }
    return false;
  };

  if (has_arc(bright)) return bright_sum;
  if (has_arc(dark)) return dark_sum;
  return 0;
}

}  // namespace detail

/// FAST-9 corners with 3x3 non-maximum suppression. Candidates are reported
/// in row-major order at integer level coordinates. Equal-score neighbors are
/// resolved in favor of the earlier pixel in scan order. Images too small for
/// the requested border yield an empty list.
inline std::vector<Keypoint> fast_detect(const GrayImage& img, int threshold, int border) {
  const int b = std::max(border, 3);  // the segment-test circle needs 3 px
  std::vector<Keypoint> out;
  if (img.width <= 2 * b || img.height <= 2 * b) return out;

  const int w = img.width;
  const int h = img.height;
  std::vector<int> score(static_cast<std::size_t>(w) * h, 0);
  for (int y = b; y < h - b; ++y)
    for (int x = b; x < w - b; ++x)
      score[static_cast<std::size_t>(y) * w + x] = detail::fast_score(img, x, y, threshold);

  for (int y = b; y < h - b; ++y) {
    for (int x = b; x < w - b; ++x) {
      const int s = score[static_cast<std::size_t>(y) * w + x];
      if (s <= 0) continue;
      bool maximal = true;
      for (int dy = -1; dy <= 1 && maximal; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int sn = score[static_cast<std::size_t>(y + dy) * w + (x + dx)];
          if (sn > s || (sn == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            maximal = false;
            break;
          }
        }
      }
      if (maximal)
        out.push_back(Keypoint{static_cast<double>(x), static_cast<double>(y),
                               static_cast<double>(s), 0.0, 0});
    }
  }
  return out;
}

/// m_pq = sum over the disc dx^2+dy^2 <= radius^2 of dx^p * dy^q * I. Exact
/// integer arithmetic; throws if the disc leaves the image.
inline OrientationMoments compute_moments(const GrayImage& img, int cx, int cy, int radius) {
  if (radius <= 0) throw std::invalid_argument("compute_moments: radius must be > 0");
  if (cx - radius < 0 || cy - radius < 0 || cx + radius >= img.width || cy + radius >= img.height)
    throw std::out_of_range("compute_moments: disc exceeds image border");

  OrientationMoments m;
  const int r2 = radius * radius;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > r2) continue;
      const std::int64_t v = img.at(cx + dx, cy + dy);
      m.m00 += v;
      m.m10 += dx * v;
      m.m01 += dy * v;
    }
  }
  return m;
}

/// Orientation of the corner-to-centroid vector, atan2(m01, m10), in [0, 2*pi).
inline PatchOrientation orientation(const OrientationMoments& m) {
  if (m.m10 == 0 && m.m01 == 0) return PatchOrientation{0.0, true};
  double a = std::atan2(static_cast<double>(m.m01), static_cast<double>(m.m10));
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  if (a >= 2.0 * std::numbers::pi) a = 0.0;
  return PatchOrientation{a, false};
}

namespace detail {

/// Bilinear resize sampling at pixel centers, rounded to nearest.
inline GrayImage resize_bilinear(const GrayImage& src, int dst_w, int dst_h) {
  GrayImage dst(dst_w, dst_h);
  const double sx = static_cast<double>(src.width) / dst_w;
  const double sy = static_cast<double>(src.height) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const double v = (1.0 - wy) * ((1.0 - wx) * src.at(x0, y0) + wx * src.at(x1, y0)) +
                       wy * ((1.0 - wx) * src.at(x0, y1) + wx * src.at(x1, y1));
      dst.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
    }
  }
  return dst;
}

}  // namespace detail

/// Level k has dimensions floor(original / scale_factor^k); construction stops
/// early once a level would fall under 32x32.
inline Pyramid build_pyramid(const GrayImage& img, int max_levels, double scale_factor) {
  if (max_levels < 1) throw std::invalid_argument("build_pyramid: need at least one level");
  if (!(scale_factor > 1.0)) throw std::invalid_argument("build_pyramid: scale_factor must be > 1");
  Pyramid pyr;
  pyr.scale_factor = scale_factor;
  pyr.levels.push_back(img);
  for (int k = 1; k < max_levels; ++k) {
    const double s = std::pow(scale_factor, k);
    const int w = static_cast<int>(std::floor(img.width / s));
    const int h = static_cast<int>(std::floor(img.height / s));
    if (w < 32 || h < 32) break;
    pyr.levels.push_back(detail::resize_bilinear(pyr.levels.back(), w, h));
  }
  return pyr;
}

/// Full multi-scale detection: FAST per level, global response ranking capped
/// at max_features, intensity-centroid orientation at the keypoint's own
/// level, coordinates rescaled to level 0.
inline std::vector<Keypoint> detect(const GrayImage& img, const PipelineConfig& cfg) {
  const Pyramid pyr = build_pyramid(img, cfg.pyramid_levels, cfg.scale_factor);
  const int border = std::max(cfg.patch_radius, 3);

  std::vector<Keypoint> all;
  for (std::size_t level = 0; level < pyr.levels.size(); ++level) {
    auto kps = fast_detect(pyr.levels[level], cfg.fast_threshold, border);
    for (auto& kp : kps) {
      kp.octave = static_cast<int>(level);
      all.push_back(kp);
    }
  }

  std::sort(all.begin(), all.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.octave != b.octave) return a.octave < b.octave;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (all.size() > cfg.max_features) all.resize(cfg.max_features);

  for (auto& kp : all) {
    const auto& level_img = pyr.levels[static_cast<std::size_t>(kp.octave)];
    const auto m = compute_moments(level_img, static_cast<int>(kp.x), static_cast<int>(kp.y),
                                   cfg.patch_radius);
    kp.angle = orientation(m).angle;
    const double s = std::pow(cfg.scale_factor, kp.octave);
    kp.x *= s;
    kp.y *= s;
  }
  return all;
}

}  // namespace cforb
