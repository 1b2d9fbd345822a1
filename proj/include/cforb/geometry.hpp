#pragma once

#include <Eigen/Dense>

#include <optional>

#include "cforb/core.hpp"

namespace cforb {

enum class CameraSide { left, right };

/// Rectified-stereo triangulation into the left-camera frame. Rejects pairs
/// whose disparity (u_l - u_r) is non-positive or below `min_disparity`; the
/// vertical coordinate of the left pixel is authoritative.
inline std::optional<Eigen::Vector3d> triangulate(const Eigen::Vector2d& p_l,
                                                  const Eigen::Vector2d& p_r,
                                                  const StereoCalib& calib,
                                                  double min_disparity = 0.0) {
  const double d = p_l.x() - p_r.x();
  if (d <= 0.0 || d < min_disparity) return std::nullopt;
  const double z = calib.f * calib.baseline / d;
  return Eigen::Vector3d((p_l.x() - calib.cu) * z / calib.f,
                         (p_l.y() - calib.cv) * z / calib.f, z);
}

/// Projects a landmark (previous left-camera coordinates) into the current
/// left or right image under motion (r, t). Points that land on or behind the
/// image plane are rejected.
inline std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& X, const MotionParams& m,
                                              const StereoCalib& calib, CameraSide side) {
  const Eigen::Vector3d Xc = rotation_from_euler(m.r) * X + m.t;
  if (Xc.z() <= 0.0) return std::nullopt;
  const double shift = (side == CameraSide::right) ? calib.baseline : 0.0;
  return Eigen::Vector2d(calib.f * (Xc.x() - shift) / Xc.z() + calib.cu,
                         calib.f * Xc.y() / Xc.z() + calib.cv);
}

/// The scalar m'ᵀ F m; zero (up to noise) when m ↔ m' is a true
/// correspondence under fundamental matrix F.
inline double epipolar_residual(const Eigen::Vector3d& m, const Eigen::Vector3d& m_prime,
                                const Eigen::Matrix3d& F) {
  return m_prime.dot(F * m);
}

/// Fundamental matrix of an ideal rectified pair (pure horizontal baseline):
/// m'ᵀ F m reduces to v - v', the row disagreement.
inline Eigen::Matrix3d rectified_fundamental() {
  Eigen::Matrix3d F = Eigen::Matrix3d::Zero();
  F(1, 2) = -1.0;
  F(2, 1) = 1.0;
  return F;
}

}  // namespace cforb
