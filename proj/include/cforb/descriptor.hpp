#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "cforb/core.hpp"
#include "cforb/detector.hpp"

namespace cforb {

/// One receptive field of the retina-like pattern, at unit scale.
struct PatternPoint {
  double dx = 0.0;
  double dy = 0.0;
  double sigma = 0.0;  // smoothing disc radius, px
  int ring = 0;        // 7 = outermost ... 1 = innermost, 0 = center
};

inline constexpr std::size_t kPatternPoints = 43;  // 1 center + 7 rings of 6
inline constexpr std::size_t kDescriptorBits = 512;
inline constexpr std::size_t kCoarseBits = 128;  // first 16 bytes

/// Retina-like sampling layout plus the ordered comparison pairs. Pairs are
/// coarse-to-fine: the first 128 use only outer-ring points, so the first 16
/// descriptor bytes carry the coarse information the cascade filters on.
struct SamplingPattern {
  std::array<PatternPoint, kPatternPoints> points{};
  std::array<std::pair<std::uint16_t, std::uint16_t>, kDescriptorBits> pairs{};
};

/// 512-bit descriptor, bit k set iff the smoothed intensity at pairs[k].first
/// strictly exceeds the one at pairs[k].second.
struct BinaryDescriptor {
  std::array<std::uint64_t, 8> words{};

  bool bit(std::size_t k) const { return (words[k >> 6] >> (k & 63)) & 1u; }
  void set_bit(std::size_t k) { words[k >> 6] |= std::uint64_t{1} << (k & 63); }
  bool operator==(const BinaryDescriptor&) const = default;
};

inline int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int d = 0;
  for (std::size_t w = 0; w < 8; ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

/// Distance restricted to the first 16 bytes (bits 0..127).
inline int coarse_hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  return std::popcount(a.words[0] ^ b.words[0]) + std::popcount(a.words[1] ^ b.words[1]);
}

/// Deterministic pattern: 1 center point plus 7 concentric rings of 6 points,
/// ring radii geometric from 1.5 px to 22 px at unit scale. Points are indexed
/// outermost ring first, center last. Candidate pairs are ordered by
/// descending mean ring index (tie-break: ring_i, ring_j, i, j ascending) and
/// the first 512 are kept.
inline SamplingPattern build_pattern() {
  SamplingPattern p;

  constexpr double r_inner = 1.5;
  constexpr double r_outer = 22.0;
  const double ratio = std::pow(r_outer / r_inner, 1.0 / 6.0);
  double radius[8];  // radius[ring], ring 1..7
  for (int ring = 1; ring <= 7; ++ring) radius[ring] = r_inner * std::pow(ratio, ring - 1);

  std::size_t idx = 0;
  for (int ring = 7; ring >= 1; --ring) {
    const double gap = (ring < 7) ? radius[ring + 1] - radius[ring] : radius[7] - radius[6];
    const double sigma = 0.5 * gap;
    const double stagger = (ring % 2 == 0) ? std::numbers::pi / 6.0 : 0.0;
    for (int k = 0; k < 6; ++k) {
      const double a = 2.0 * std::numbers::pi * k / 6.0 + stagger;
      p.points[idx++] = PatternPoint{radius[ring] * std::cos(a), radius[ring] * std::sin(a),
                                     sigma, ring};
    }
  }
  p.points[idx] = PatternPoint{0.0, 0.0, 1.0, 0};  // center

  struct Candidate {
    int ring_sum;
    int ring_i, ring_j;
    std::uint16_t i, j;
  };
  std::vector<Candidate> cands;
  cands.reserve(kPatternPoints * (kPatternPoints - 1) / 2);
  for (std::uint16_t i = 0; i < kPatternPoints; ++i)
    for (std::uint16_t j = static_cast<std::uint16_t>(i + 1); j < kPatternPoints; ++j)
      cands.push_back(Candidate{p.points[i].ring + p.points[j].ring, p.points[i].ring,
                                p.points[j].ring, i, j});

  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.ring_sum != b.ring_sum) return a.ring_sum > b.ring_sum;
    if (a.ring_i != b.ring_i) return a.ring_i < b.ring_i;
    if (a.ring_j != b.ring_j) return a.ring_j < b.ring_j;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  for (std::size_t k = 0; k < kDescriptorBits; ++k) p.pairs[k] = {cands[k].i, cands[k].j};
  return p;
}

/// Process-wide shared pattern (immutable after construction).
inline const SamplingPattern& shared_pattern() {
  static const SamplingPattern pattern = build_pattern();
  return pattern;
}

namespace detail {

/// Mean intensity over the integer disc dx^2+dy^2 <= radius^2 centered at
/// (cx, cy); nullopt if the disc's bounding box leaves the image.
inline std::optional<double> disc_mean(const GrayImage& img, int cx, int cy, double radius) {
  const int r = static_cast<int>(std::floor(radius));
  if (cx - r < 0 || cy - r < 0 || cx + r >= img.width || cy + r >= img.height)
    return std::nullopt;
  const double r2 = radius * radius;
  std::int64_t sum = 0;
  int count = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r2) continue;
      sum += img.at(cx + dx, cy + dy);
      ++count;
    }
  }
  return static_cast<double>(sum) / count;
}

}  // namespace detail

/// Descriptor at a keypoint: receptive fields rotated by kp.angle and scaled
/// by scale_factor^octave, then compared pairwise. Returns nullopt when any
/// receptive field leaves the image (caller drops the keypoint).
inline std::optional<BinaryDescriptor> compute(const GrayImage& img, const Keypoint& kp,
                                               const SamplingPattern& pattern,
                                               double scale_factor = 1.2) {
  const double s = std::pow(scale_factor, kp.octave);
  const double c = std::cos(kp.angle);
  const double sn = std::sin(kp.angle);

  std::array<double, kPatternPoints> smoothed{};
  for (std::size_t i = 0; i < kPatternPoints; ++i) {
    const auto& pt = pattern.points[i];
    const double ox = s * (c * pt.dx - sn * pt.dy);
    const double oy = s * (sn * pt.dx + c * pt.dy);
    const int cx = static_cast<int>(std::llround(kp.x + ox));
    const int cy = static_cast<int>(std::llround(kp.y + oy));
    const auto mean = detail::disc_mean(img, cx, cy, pt.sigma * s);
    if (!mean) return std::nullopt;
    smoothed[i] = *mean;
  }

  BinaryDescriptor d;
  for (std::size_t k = 0; k < kDescriptorBits; ++k) {
    const auto [i, j] = pattern.pairs[k];
    if (smoothed[i] > smoothed[j]) d.set_bit(k);
  }
  return d;
}

/// Coarse-then-full cascade: candidates whose first-16-byte distance exceeds
/// coarse_max are skipped without a full comparison; the minimal full distance
/// among survivors wins if it is <= full_max. Ties go to the lowest index.
inline std::optional<std::uint32_t> cascade_match(const BinaryDescriptor& query,
                                                  std::span<const BinaryDescriptor> candidates,
                                                  int coarse_max, int full_max) {
  std::optional<std::uint32_t> best;
  int best_dist = kDescriptorBits + 1;
  for (std::uint32_t idx = 0; idx < candidates.size(); ++idx) {
    if (coarse_hamming(query, candidates[idx]) > coarse_max) continue;
    const int d = hamming(query, candidates[idx]);
    if (d < best_dist) {
      best_dist = d;
      best = idx;
    }
  }
  if (best && best_dist <= full_max) return best;
  return std::nullopt;
}

/// Cascade restricted to a subset of candidate indices; `indices` must be
/// ascending so ties resolve to the lowest candidate index.
inline std::optional<std::uint32_t> cascade_match(const BinaryDescriptor& query,
                                                  std::span<const BinaryDescriptor> candidates,
                                                  std::span<const std::uint32_t> indices,
                                                  int coarse_max, int full_max) {
  std::optional<std::uint32_t> best;
  int best_dist = kDescriptorBits + 1;
  for (const auto idx : indices) {
    if (coarse_hamming(query, candidates[idx]) > coarse_max) continue;
    const int d = hamming(query, candidates[idx]);
    if (d < best_dist) {
      best_dist = d;
      best = idx;
    }
  }
  if (best && best_dist <= full_max) return best;
  return std::nullopt;
}

}  // namespace cforb
