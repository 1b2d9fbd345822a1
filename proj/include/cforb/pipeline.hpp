#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cforb/core.hpp"
#include "cforb/descriptor.hpp"
#include "cforb/detector.hpp"
#include "cforb/egomotion.hpp"
#include "cforb/geometry.hpp"
#include "cforb/matching.hpp"

namespace cforb {

/// Mutable odometry state folded over the frame sequence.
struct VoState {
  std::optional<FrameFeatures> prev;
  Pose world_pose;
  std::size_t frame_index = 0;
  MotionParams last_motion;
  std::vector<FrameStats> stats;
};

/// Per-pair feature stage: detect, describe (dropping keypoints whose
/// sampling disc leaves the image), stereo-match, then apply the vertical and
/// horizontal constraints.
inline FrameFeatures extract(const GrayImage& left, const GrayImage& right,
                             const PipelineConfig& cfg) {
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("extract: stereo pair dimensions differ");

  FrameFeatures ff;
  const auto& pattern = shared_pattern();
  const auto describe = [&](const GrayImage& img, std::vector<Keypoint>& kps,
                            std::vector<BinaryDescriptor>& descs) {
    for (const auto& kp : detect(img, cfg)) {
      if (const auto d = compute(img, kp, pattern, cfg.scale_factor)) {
        kps.push_back(kp);
        descs.push_back(*d);
      }
    }
  };
  describe(left, ff.left_kps, ff.left_desc);
  describe(right, ff.right_kps, ff.right_desc);

  auto matches = match_stereo(ff.left_desc, ff.right_desc, cfg);
  matches = vertical_filter(matches, ff.left_kps, ff.right_kps, cfg.vertical_max_px);
  ff.stereo = horizontal_filter(matches, ff.left_kps, ff.right_kps, cfg.horizontal_max_px,
                                cfg.min_disparity_px);
  return ff;
}

/// Advances the odometry by one stereo pair. The first pair only seeds the
/// feature cache; afterwards each call circular-matches against the previous
/// pair, triangulates, estimates the frame-to-frame motion, and chains the
/// world pose. On estimation failure the previous motion is repeated and the
/// frame is flagged.
inline void step(VoState& state, const GrayImage& left, const GrayImage& right,
                 const StereoCalib& calib, const PipelineConfig& cfg) {
  FrameFeatures curr = extract(left, right, cfg);

  FrameStats st;
  st.frame_index = state.frame_index;
  st.stereo_matches = curr.stereo.size();

  if (!state.prev) {
    state.prev = std::move(curr);
    state.stats.push_back(st);
    ++state.frame_index;
    return;
  }

  const auto circular = circular_match(*state.prev, curr, cfg);
  st.circular_matches = circular.size();

  std::vector<Observation> obs;
  obs.reserve(circular.size());
  for (const auto& cm : circular) {
    if (const auto X = triangulate(cm.p_l_prev, cm.p_r_prev, calib, cfg.min_disparity_px))
      obs.push_back(Observation{*X, cm.p_l_curr, cm.p_r_curr});
  }

  std::optional<MotionEstimate> est;
  if (obs.size() >= static_cast<std::size_t>(cfg.ransac_sample_size))
    est = ransac_estimate(obs, calib, cfg);

  MotionParams motion;
  if (est) {
    motion = est->params;
    state.last_motion = motion;
    st.inlier_count = est->inlier_indices.size();
    st.inlier_pct = circular.empty()
                        ? 0.0
                        : 100.0 * static_cast<double>(st.inlier_count) /
                              static_cast<double>(circular.size());
  } else {
    motion = state.last_motion;  // constant-velocity fallback
    st.flagged = true;
  }

  state.world_pose = compose(state.world_pose, inverse(motion_to_transform(motion)));
  state.prev = std::move(curr);
  state.stats.push_back(st);
  ++state.frame_index;
}

struct RunResult {
  std::vector<Pose> trajectory;  // one camera-to-world pose per frame
  std::vector<FrameStats> stats;
};

/// Folds `step` over a sequence of `n_frames` stereo pairs supplied by
/// load(i) -> std::pair<GrayImage, GrayImage>. Loader errors are rethrown
/// with the frame index attached.
template <typename PairLoader>
RunResult run(std::size_t n_frames, PairLoader&& load, const StereoCalib& calib,
              const PipelineConfig& cfg) {
  if (n_frames == 0) throw std::invalid_argument("run: need at least one frame pair");
  VoState state;
  RunResult result;
  result.trajectory.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    std::pair<GrayImage, GrayImage> pair = [&] {
      try {
        return load(i);
      } catch (const IoError& e) {
        throw IoError("frame " + std::to_string(i) + ": " + e.what());
      }
    }();
    step(state, pair.first, pair.second, calib, cfg);
    result.trajectory.push_back(state.world_pose);
  }
  result.stats = std::move(state.stats);
  return result;
}

}  // namespace cforb
