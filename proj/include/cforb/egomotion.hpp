#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "cforb/core.hpp"
#include "cforb/detail/rng.hpp"
#include "cforb/geometry.hpp"

namespace cforb {

/// One circular match ready for motion estimation: a landmark triangulated in
/// the previous frame plus its observed positions in the current pair.
struct Observation {
  Eigen::Vector3d landmark;
  Eigen::Vector2d x_l;
  Eigen::Vector2d x_r;
};

struct MotionEstimate {
  MotionParams params;
  std::vector<std::uint32_t> inlier_indices;  // ascending, unique
  double final_cost = 0.0;                    // square pixels over the inliers
};

/// Stacked reprojection residuals at motion m: four rows per observation,
/// (x_l - pi_l, x_r - pi_r). An observation whose landmark falls behind either
/// camera is flagged invalid, its rows are zeroed, and the total cost becomes
/// infinite so candidate models that lose sight of a point score worst.
struct ResidualEval {
  Eigen::VectorXd r;
  std::vector<bool> valid;
  bool all_valid = true;
  double cost = 0.0;
};

inline ResidualEval residuals(const MotionParams& m, const std::vector<Observation>& obs,
                              const StereoCalib& calib) {
  ResidualEval ev;
  ev.r = Eigen::VectorXd::Zero(4 * static_cast<Eigen::Index>(obs.size()));
  ev.valid.assign(obs.size(), true);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto pl = project(obs[i].landmark, m, calib, CameraSide::left);
    const auto pr = project(obs[i].landmark, m, calib, CameraSide::right);
    if (!pl || !pr) {
      ev.valid[i] = false;
      ev.all_valid = false;
      continue;
    }
    const auto row = 4 * static_cast<Eigen::Index>(i);
    ev.r.segment<2>(row) = obs[i].x_l - *pl;
    ev.r.segment<2>(row + 2) = obs[i].x_r - *pr;
  }
  ev.cost = ev.all_valid ? ev.r.squaredNorm() : std::numeric_limits<double>::infinity();
  return ev;
}

namespace detail {

inline Eigen::Matrix3d rotation_x_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d d = Eigen::Matrix3d::Zero();
  d(1, 1) = -s;
  d(1, 2) = -c;
  d(2, 1) = c;
  d(2, 2) = -s;
  return d;
}

inline Eigen::Matrix3d rotation_y_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d d = Eigen::Matrix3d::Zero();
  d(0, 0) = -s;
  d(0, 2) = c;
  d(2, 0) = -c;
  d(2, 2) = -s;
  return d;
}

inline Eigen::Matrix3d rotation_z_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d d = Eigen::Matrix3d::Zero();
  d(0, 0) = -s;
  d(0, 1) = -c;
  d(1, 0) = c;
  d(1, 1) = -s;
  return d;
}

}  // namespace detail

/// Analytic Jacobian of the stacked residuals with respect to
/// (rx, ry, rz, tx, ty, tz). Rows of behind-camera observations are zero,
/// matching `residuals`.
inline Eigen::MatrixXd jacobian(const MotionParams& m, const std::vector<Observation>& obs,
                                const StereoCalib& calib) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(4 * static_cast<Eigen::Index>(obs.size()), 6);

  const Eigen::Matrix3d Rx = rotation_x(m.r.x());
  const Eigen::Matrix3d Ry = rotation_y(m.r.y());
  const Eigen::Matrix3d Rz = rotation_z(m.r.z());
  const Eigen::Matrix3d R = Rx * Ry * Rz;
  const Eigen::Matrix3d dR_rx = detail::rotation_x_deriv(m.r.x()) * Ry * Rz;
  const Eigen::Matrix3d dR_ry = Rx * detail::rotation_y_deriv(m.r.y()) * Rz;
  const Eigen::Matrix3d dR_rz = Rx * Ry * detail::rotation_z_deriv(m.r.z());

  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Eigen::Vector3d Xc = R * obs[i].landmark + m.t;
    if (Xc.z() <= 0.0) continue;

    // d(Xc)/d(param): rotation columns move the point, translation is identity.
    Eigen::Matrix<double, 3, 6> dXc;
    dXc.col(0) = dR_rx * obs[i].landmark;
    dXc.col(1) = dR_ry * obs[i].landmark;
    dXc.col(2) = dR_rz * obs[i].landmark;
    dXc.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity();

    const double iz = 1.0 / Xc.z();
    const auto row = 4 * static_cast<Eigen::Index>(i);
    for (int p = 0; p < 6; ++p) {
      const double dx = dXc(0, p), dy = dXc(1, p), dz = dXc(2, p);
      // Residual is (observation - projection), hence the leading minus.
      J(row + 0, p) = -calib.f * (dx * iz - Xc.x() * dz * iz * iz);
      J(row + 1, p) = -calib.f * (dy * iz - Xc.y() * dz * iz * iz);
      J(row + 2, p) = -calib.f * (dx * iz - (Xc.x() - calib.baseline) * dz * iz * iz);
      J(row + 3, p) = -calib.f * (dy * iz - Xc.y() * dz * iz * iz);
    }
  }
  return J;
}

struct GaussNewtonResult {
  MotionParams params;
  double cost = 0.0;
  int iterations = 0;
};

/// Plain Gauss-Newton on the reprojection residuals. Fails (nullopt) when the
/// normal matrix goes singular, a landmark falls behind a camera, the cost
/// rises on two consecutive iterations, or the end cost exceeds the start
/// cost; no damping is applied.
inline std::optional<GaussNewtonResult> gauss_newton(const MotionParams& init,
                                                     const std::vector<Observation>& obs,
                                                     const StereoCalib& calib, int max_iters,
                                                     double step_tol) {
  MotionParams m = init;
  ResidualEval ev = residuals(m, obs, calib);
  if (!ev.all_valid) return std::nullopt;
  const double initial_cost = ev.cost;

  double prev_cost = initial_cost;
  int rising = 0;
  int iter = 0;
  while (iter < max_iters) {
    const Eigen::MatrixXd J = jacobian(m, obs, calib);
    const Eigen::Matrix<double, 6, 6> JtJ = J.transpose() * J;
    const Eigen::Matrix<double, 6, 1> g = J.transpose() * ev.r;

    Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(JtJ);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Matrix<double, 6, 1> delta = lu.solve(-g);

    m.r += delta.head<3>();
    m.t += delta.tail<3>();
    ++iter;

    ev = residuals(m, obs, calib);
    if (!ev.all_valid) return std::nullopt;
    rising = (ev.cost > prev_cost) ? rising + 1 : 0;
    if (rising >= 2) return std::nullopt;
    prev_cost = ev.cost;

    if (delta.norm() < step_tol) break;
  }

  if (ev.cost > initial_cost) return std::nullopt;
  return GaussNewtonResult{m, ev.cost, iter};
}

namespace detail {

/// Combined squared reprojection error of one observation under m, or nullopt
/// when the landmark is behind either camera.
inline std::optional<double> squared_error(const MotionParams& m, const Observation& ob,
                                           const StereoCalib& calib) {
  const auto pl = project(ob.landmark, m, calib, CameraSide::left);
  const auto pr = project(ob.landmark, m, calib, CameraSide::right);
  if (!pl || !pr) return std::nullopt;
  return (ob.x_l - *pl).squaredNorm() + (ob.x_r - *pr).squaredNorm();
}

}  // namespace detail

/// Indices whose combined squared reprojection error is strictly below
/// `threshold`; behind-camera observations never qualify.
inline std::vector<std::uint32_t> classify_inliers(const MotionParams& m,
                                                   const std::vector<Observation>& obs,
                                                   const StereoCalib& calib, double threshold) {
  std::vector<std::uint32_t> inliers;
  for (std::uint32_t i = 0; i < obs.size(); ++i) {
    const auto e = detail::squared_error(m, obs[i], calib);
    if (e && *e < threshold) inliers.push_back(i);
  }
  return inliers;
}

namespace detail {

inline double inlier_cost(const MotionParams& m, const std::vector<Observation>& obs,
                          const std::vector<std::uint32_t>& inliers, const StereoCalib& calib) {
  double cost = 0.0;
  for (const auto idx : inliers) {
    const auto e = squared_error(m, obs[idx], calib);
    cost += e ? *e : std::numeric_limits<double>::infinity();
  }
  return cost;
}

}  // namespace detail

/// RANSAC over minimal samples with Gauss-Newton from zero motion, followed by
/// a refinement pass over the best model's inliers. Sample index lists are
/// drawn up front from a generator seeded with cfg.seed, so results are
/// reproducible and independent of evaluation order. The returned model never
/// has fewer inliers than the best sampled one: if refinement loses inliers,
/// the sampled model is returned instead.
inline std::optional<MotionEstimate> ransac_estimate(const std::vector<Observation>& obs,
                                                     const StereoCalib& calib,
                                                     const PipelineConfig& cfg) {
  const auto n = static_cast<std::uint32_t>(obs.size());
  const auto k = static_cast<std::uint32_t>(cfg.ransac_sample_size);
  if (n < k) return std::nullopt;

  std::mt19937_64 gen(cfg.seed);
  std::vector<std::vector<std::uint32_t>> samples;
  samples.reserve(static_cast<std::size_t>(cfg.ransac_iterations));
  for (int it = 0; it < cfg.ransac_iterations; ++it)
    samples.push_back(detail::sample_distinct(gen, n, k));

  bool have_best = false;
  MotionParams best_params;
  std::vector<std::uint32_t> best_inliers;
  double best_cost = std::numeric_limits<double>::infinity();

  std::vector<Observation> sample_obs(k);
  for (const auto& sample : samples) {
    for (std::size_t s = 0; s < sample.size(); ++s) sample_obs[s] = obs[sample[s]];
    const auto fit = gauss_newton(MotionParams{}, sample_obs, calib, cfg.gn_max_iters,
                                  cfg.gn_step_tol);
    if (!fit) continue;

    auto inliers = classify_inliers(fit->params, obs, calib, cfg.inlier_threshold);
    const double cost = detail::inlier_cost(fit->params, obs, inliers, calib);
    const bool better = !have_best || inliers.size() > best_inliers.size() ||
                        (inliers.size() == best_inliers.size() && cost < best_cost);
    if (better) {
      have_best = true;
      best_params = fit->params;
      best_inliers = std::move(inliers);
      best_cost = cost;
    }
  }
  if (!have_best || best_inliers.empty()) return std::nullopt;

  std::vector<Observation> inlier_obs;
  inlier_obs.reserve(best_inliers.size());
  for (const auto idx : best_inliers) inlier_obs.push_back(obs[idx]);
  const auto refined =
      gauss_newton(best_params, inlier_obs, calib, cfg.gn_max_iters, cfg.gn_step_tol);
  if (refined) {
    auto inliers = classify_inliers(refined->params, obs, calib, cfg.inlier_threshold);
    if (inliers.size() >= best_inliers.size()) {
      const double cost = detail::inlier_cost(refined->params, obs, inliers, calib);
      return MotionEstimate{refined->params, std::move(inliers), cost};
    }
  }
  return MotionEstimate{best_params, std::move(best_inliers), best_cost};
}

}  // namespace cforb
