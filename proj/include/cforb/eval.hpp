#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cforb/core.hpp"

namespace cforb {

/// One evaluated trajectory segment.
struct SegmentError {
  std::size_t first_frame = 0;
  double length_m = 0.0;                // nominal segment length
  double trans_err = 0.0;               // fraction of length
  double rot_err = 0.0;                 // deg/m
  std::optional<double> speed_kmh;
};

struct EvalReport {
  std::vector<SegmentError> segments;
  std::map<int, std::pair<double, double>> per_length;  // L -> (trans fraction, rot deg/m)
  std::map<int, std::pair<double, double>> per_speed;   // km/h bin -> same
  double overall_translation = 0.0;                     // fraction
  double overall_rotation = 0.0;                        // deg/m
  bool short_path_fallback = false;
  std::vector<FrameStats> per_frame;  // filled by pipeline callers, empty otherwise
};

namespace detail {

inline double rotation_angle_deg(const Eigen::Matrix3d& R) {
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline std::size_t segment_end(const std::vector<double>& dist, std::size_t first, double len) {
  for (std::size_t i = first + 1; i < dist.size(); ++i)
    if (dist[i] >= dist[first] + len) return i;
  return dist.size();  // sentinel: no frame far enough
}

}  // namespace detail

/// KITTI-protocol trajectory comparison: relative-pose errors over segments of
/// 100..800 m of ground-truth path, start frames every `step` frames,
/// translational error as a fraction of segment length and rotational error in
/// deg/m, plus speed-binned averages when timestamps are supplied. Paths too
/// short for a 100 m segment fall back to two half-path lengths and set the
/// fallback flag (per-length bins stay empty in that mode).
inline EvalReport evaluate(const std::vector<Pose>& est, const std::vector<Pose>& gt,
                           const std::vector<double>* timestamps = nullptr,
                           std::size_t step = 10) {
  if (est.size() != gt.size())
    throw std::invalid_argument("evaluate: trajectory lengths differ");
  if (est.size() < 2) throw std::invalid_argument("evaluate: need at least two poses");
  if (timestamps && timestamps->size() != gt.size())
    throw std::invalid_argument("evaluate: timestamp count differs from trajectory length");
  if (step == 0) throw std::invalid_argument("evaluate: step must be positive");

  std::vector<double> dist(gt.size(), 0.0);
  for (std::size_t i = 1; i < gt.size(); ++i)
    dist[i] = dist[i - 1] + (gt[i].t - gt[i - 1].t).norm();

  std::vector<double> lengths;
  EvalReport report;
  if (dist.back() >= 100.0) {
    for (int L = 100; L <= 800; L += 100) lengths.push_back(L);
  } else if (dist.back() > 0.0) {
    lengths.push_back(dist.back() / 2.0);
    report.short_path_fallback = true;
  }

  for (std::size_t s = 0; s < gt.size(); s += step) {
    for (const double L : lengths) {
      const std::size_t e = detail::segment_end(dist, s, L);
      if (e >= gt.size()) break;  // longer segments cannot fit either

      const Pose rel_gt = compose(inverse(gt[s]), gt[e]);
      const Pose rel_est = compose(inverse(est[s]), est[e]);
      const Pose error = compose(inverse(rel_gt), rel_est);

      SegmentError seg;
      seg.first_frame = s;
      seg.length_m = L;
      seg.trans_err = error.t.norm() / L;
      seg.rot_err = detail::rotation_angle_deg(error.R) / L;
      if (timestamps) {
        const double elapsed = (*timestamps)[e] - (*timestamps)[s];
        if (elapsed > 0.0) seg.speed_kmh = 3.6 * (dist[e] - dist[s]) / elapsed;
      }
      report.segments.push_back(seg);
    }
  }

  if (!report.segments.empty()) {
    double tsum = 0.0, rsum = 0.0;
    std::map<int, std::pair<std::pair<double, double>, std::size_t>> by_length, by_speed;
    for (const auto& seg : report.segments) {
      tsum += seg.trans_err;
      rsum += seg.rot_err;
      if (!report.short_path_fallback) {
        auto& acc = by_length[static_cast<int>(std::llround(seg.length_m))];
        acc.first.first += seg.trans_err;
        acc.first.second += seg.rot_err;
        ++acc.second;
      }
      if (seg.speed_kmh) {
        auto& acc = by_speed[static_cast<int>(std::llround(*seg.speed_kmh / 10.0)) * 10];
        acc.first.first += seg.trans_err;
        acc.first.second += seg.rot_err;
        ++acc.second;
      }
    }
    const auto n = static_cast<double>(report.segments.size());
    report.overall_translation = tsum / n;
    report.overall_rotation = rsum / n;
    for (const auto& [L, acc] : by_length)
      report.per_length[L] = {acc.first.first / static_cast<double>(acc.second),
                              acc.first.second / static_cast<double>(acc.second)};
    for (const auto& [bin, acc] : by_speed)
      if (acc.second >= 3)  // thinner bins are statistically useless
        report.per_speed[bin] = {acc.first.first / static_cast<double>(acc.second),
                                 acc.first.second / static_cast<double>(acc.second)};
  }
  return report;
}

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path);
  out.setf(std::ios::fixed);
  out.precision(6);
  return out;
}

}  // namespace detail

/// Writes <prefix>_length.csv, <prefix>_speed.csv, and <prefix>_frames.csv.
inline void export_csv(const EvalReport& report, const std::string& prefix) {
  {
    auto out = detail::open_csv(prefix + "_length.csv");
    out << "length_m,trans_pct,rot_degm\n";
    for (const auto& [L, err] : report.per_length)
      out << L << ',' << 100.0 * err.first << ',' << err.second << '\n';
    if (!out) throw IoError("write failure: " + prefix + "_length.csv");
  }
  {
    auto out = detail::open_csv(prefix + "_speed.csv");
    out << "speed_kmh,trans_pct,rot_degm\n";
    for (const auto& [bin, err] : report.per_speed)
      out << bin << ',' << 100.0 * err.first << ',' << err.second << '\n';
    if (!out) throw IoError("write failure: " + prefix + "_speed.csv");
  }
  {
    auto out = detail::open_csv(prefix + "_frames.csv");
    out << "frame,inlier_pct,circular_matches,flagged\n";
    for (const auto& st : report.per_frame)
      out << st.frame_index << ',' << st.inlier_pct << ',' << st.circular_matches << ','
          << (st.flagged ? 1 : 0) << '\n';
    if (!out) throw IoError("write failure: " + prefix + "_frames.csv");
  }
}

}  // namespace cforb
