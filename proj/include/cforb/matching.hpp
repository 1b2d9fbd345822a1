#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "cforb/core.hpp"
#include "cforb/descriptor.hpp"
#include "cforb/detector.hpp"

namespace cforb {

/// Mutual-best stereo correspondence within one frame.
struct StereoMatch {
  std::uint32_t left_idx = 0;
  std::uint32_t right_idx = 0;
  int distance = 0;  // full Hamming bits
};

/// One closed matching loop across the four images of two consecutive stereo
/// pairs. Positions are level-0 pixels.
struct CircularMatch {
  Eigen::Vector2d p_l_prev;
  Eigen::Vector2d p_r_prev;
  Eigen::Vector2d p_l_curr;
  Eigen::Vector2d p_r_curr;
};

/// Everything extracted from one stereo pair. Descriptor lists are
/// index-aligned with the keypoint lists; `stereo` holds the matches that
/// survived both geometric constraints.
struct FrameFeatures {
  std::vector<Keypoint> left_kps;
  std::vector<Keypoint> right_kps;
  std::vector<BinaryDescriptor> left_desc;
  std::vector<BinaryDescriptor> right_desc;
  std::vector<StereoMatch> stereo;
};

/// Mutual-best cascade matching: (i, j) is kept iff i's best match in the
/// right list is j and j's best match in the left list is i.
inline std::vector<StereoMatch> match_stereo(std::span<const BinaryDescriptor> left,
                                             std::span<const BinaryDescriptor> right,
                                             const PipelineConfig& cfg) {
  std::vector<StereoMatch> out;
  if (left.empty() || right.empty()) return out;

  std::vector<std::optional<std::uint32_t>> right_best(right.size());
  for (std::uint32_t j = 0; j < right.size(); ++j)
    right_best[j] = cascade_match(right[j], left, cfg.coarse_hamming_max, cfg.full_hamming_max);

  for (std::uint32_t i = 0; i < left.size(); ++i) {
    const auto j = cascade_match(left[i], right, cfg.coarse_hamming_max, cfg.full_hamming_max);
    if (j && right_best[*j] && *right_best[*j] == i)
      out.push_back(StereoMatch{i, *j, hamming(left[i], right[*j])});
  }
  return out;
}

/// Keeps matches with |y_left - y_right| <= max_dy (boundary inclusive).
inline std::vector<StereoMatch> vertical_filter(const std::vector<StereoMatch>& matches,
                                                std::span<const Keypoint> left_kps,
                                                std::span<const Keypoint> right_kps,
                                                double max_dy) {
  std::vector<StereoMatch> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    const double dy = left_kps[m.left_idx].y - right_kps[m.right_idx].y;
    if (std::abs(dy) <= max_dy) out.push_back(m);
  }
  return out;
}

/// Keeps matches with min_disp <= (x_left - x_right) <= max_dx; rectified
/// stereo puts the left view's image of a point to the right of the right
/// view's, so negative disparity is impossible.
inline std::vector<StereoMatch> horizontal_filter(const std::vector<StereoMatch>& matches,
                                                  std::span<const Keypoint> left_kps,
                                                  std::span<const Keypoint> right_kps,
                                                  double max_dx, double min_disp) {
  std::vector<StereoMatch> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    const double disp = left_kps[m.left_idx].x - right_kps[m.right_idx].x;
    if (disp >= min_disp && disp <= max_dx) out.push_back(m);
  }
  return out;
}

namespace detail {

/// Keypoint indices inside the axis-aligned square window of half-size
/// `half px` around (x0, y0), ascending.
inline std::vector<std::uint32_t> window_indices(std::span<const Keypoint> kps, double x0,
                                                 double y0, double half) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < kps.size(); ++i)
    if (std::abs(kps[i].x - x0) <= half && std::abs(kps[i].y - y0) <= half) out.push_back(i);
  return out;
}

}  // namespace detail

/// Circular matching between two consecutive frames: for each current stereo
/// match, (1) the current-left descriptor is cascade-matched against
/// previous-left features inside the search window, (2) the winner must belong
/// to a previous stereo match, (3) that match's previous-right descriptor is
/// cascade-matched against current-right features inside the window around its
/// own position, and (4) the loop closes only if the result is exactly the
/// current match's right feature. No epipolar computation is involved.
inline std::vector<CircularMatch> circular_match(const FrameFeatures& prev,
                                                 const FrameFeatures& curr,
                                                 const PipelineConfig& cfg) {
  std::vector<CircularMatch> out;

  std::unordered_map<std::uint32_t, std::uint32_t> prev_left_to_right;
  prev_left_to_right.reserve(prev.stereo.size());
  for (const auto& m : prev.stereo) prev_left_to_right.emplace(m.left_idx, m.right_idx);

  for (const auto& m : curr.stereo) {
    const Keypoint& kl = curr.left_kps[m.left_idx];

    const auto cand_prev =
        detail::window_indices(prev.left_kps, kl.x, kl.y, cfg.circular_window_px);
    const auto pl = cascade_match(curr.left_desc[m.left_idx], prev.left_desc, cand_prev,
                                  cfg.coarse_hamming_max, cfg.full_hamming_max);
    if (!pl) continue;

    const auto it = prev_left_to_right.find(*pl);
    if (it == prev_left_to_right.end()) continue;
    const std::uint32_t pr = it->second;
    const Keypoint& kpr = prev.right_kps[pr];

    const auto cand_curr =
        detail::window_indices(curr.right_kps, kpr.x, kpr.y, cfg.circular_window_px);
    const auto rc = cascade_match(prev.right_desc[pr], curr.right_desc, cand_curr,
                                  cfg.coarse_hamming_max, cfg.full_hamming_max);
    if (!rc || *rc != m.right_idx) continue;

    const Keypoint& kpl = prev.left_kps[*pl];
    const Keypoint& kr = curr.right_kps[m.right_idx];
    out.push_back(CircularMatch{Eigen::Vector2d(kpl.x, kpl.y), Eigen::Vector2d(kpr.x, kpr.y),
                                Eigen::Vector2d(kl.x, kl.y), Eigen::Vector2d(kr.x, kr.y)});
  }
  return out;
}

}  // namespace cforb
