#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cforb/core.hpp"
#include "cforb/detail/rng.hpp"
#include "cforb/egomotion.hpp"
#include "cforb/geometry.hpp"
#include "cforb/io.hpp"

namespace cforb {

/// A scripted rig: landmarks in frame-0 left-camera coordinates and the true
/// motion applied between consecutive frames (motions[k] maps frame-k
/// coordinates to frame-k+1 coordinates). Serves as the ground-truth
/// generator for estimator and pipeline tests.
struct SyntheticScene {
  std::vector<Eigen::Vector3d> landmarks;
  std::vector<MotionParams> motions;
  double noise_sigma = 0.0;
  double outlier_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Observations for one transition: landmarks expressed in the earlier
/// frame's coordinates, pixels measured in the later frame.
struct TrackFrame {
  std::vector<Observation> obs;
  MotionParams true_motion;
};

namespace detail {

inline std::vector<std::vector<Eigen::Vector3d>> landmark_positions(const SyntheticScene& scene) {
  std::vector<std::vector<Eigen::Vector3d>> per_frame;
  per_frame.reserve(scene.motions.size() + 1);
  per_frame.push_back(scene.landmarks);
  for (const auto& m : scene.motions) {
    const Eigen::Matrix3d R = rotation_from_euler(m.r);
    std::vector<Eigen::Vector3d> next;
    next.reserve(scene.landmarks.size());
    for (const auto& X : per_frame.back()) next.push_back(R * X + m.t);
    per_frame.push_back(std::move(next));
  }
  for (std::size_t f = 0; f < per_frame.size(); ++f)
    for (const auto& X : per_frame[f])
      if (X.z() <= 0.0)
        throw std::invalid_argument("scene construction: landmark behind camera at frame " +
                                    std::to_string(f));
  return per_frame;
}

}  // namespace detail

/// Projects every landmark through the scripted motions, adding Gaussian
/// pixel noise and replacing an outlier_rate fraction of observations with
/// uniform random pixels. Deterministic for a given seed.
inline std::vector<TrackFrame> generate_tracks(const SyntheticScene& scene,
                                               const StereoCalib& calib) {
  if (scene.outlier_rate < 0.0 || scene.outlier_rate >= 1.0)
    throw std::invalid_argument("outlier_rate must lie in [0, 1)");
  const auto positions = detail::landmark_positions(scene);
  std::mt19937_64 gen(scene.seed);

  std::vector<TrackFrame> frames;
  frames.reserve(scene.motions.size());
  for (std::size_t k = 0; k < scene.motions.size(); ++k) {
    TrackFrame tf;
    tf.true_motion = scene.motions[k];
    tf.obs.reserve(scene.landmarks.size());
    for (const auto& X_prev : positions[k]) {
      const auto pl = project(X_prev, scene.motions[k], calib, CameraSide::left);
      const auto pr = project(X_prev, scene.motions[k], calib, CameraSide::right);
      if (!pl || !pr)
        throw std::invalid_argument("scene construction: landmark behind camera at frame " +
                                    std::to_string(k + 1));
      Observation ob;
      ob.landmark = X_prev;
      if (detail::uniform01(gen) < scene.outlier_rate) {
        ob.x_l = {detail::uniform_range(gen, 0.0, 2.0 * calib.cu),
                  detail::uniform_range(gen, 0.0, 2.0 * calib.cv)};
        ob.x_r = {detail::uniform_range(gen, 0.0, 2.0 * calib.cu),
                  detail::uniform_range(gen, 0.0, 2.0 * calib.cv)};
      } else {
        ob.x_l = *pl + scene.noise_sigma * Eigen::Vector2d(detail::gaussian(gen),
                                                           detail::gaussian(gen));
        ob.x_r = *pr + scene.noise_sigma * Eigen::Vector2d(detail::gaussian(gen),
                                                           detail::gaussian(gen));
      }
      tf.obs.push_back(ob);
    }
    frames.push_back(std::move(tf));
  }
  return frames;
}

namespace detail {

// Sprite geometry: a 9x9 cell pattern, 3x3 pixels per cell. The white core
// sits inside a black ring so the segment test fires at the center; the two
// middle rings carry the landmark's identity bits; the outer ring's
// east-white/west-black split keys the patch orientation.
inline constexpr double kSpriteHalfCells = 4.5;
inline constexpr int kCellPx = 3;
inline constexpr double kSpriteHalfPx = kSpriteHalfCells * kCellPx;  // 13.5
inline constexpr int kSpriteReach = 20;  // ceil(13.5 * sqrt(2)) + rounding slack

inline const std::array<int, 81>& sprite_identity_slot() {
  static const std::array<int, 81> table = [] {
    std::array<int, 81> t{};
    t.fill(-1);
    int next = 0;
    for (int cy = 0; cy < 9; ++cy)
      for (int cx = 0; cx < 9; ++cx) {
        const int d = std::max(std::abs(cx - 4), std::abs(cy - 4));
        if (d == 2 || d == 3) t[cy * 9 + cx] = next++;
      }
    return t;
  }();
  return table;
}

inline std::uint8_t sprite_cell_value(std::uint64_t identity_bits, int cx, int cy) {
  const int d = std::max(std::abs(cx - 4), std::abs(cy - 4));
  if (d == 0) return 255;
  if (d == 1) return 0;
  if (d == 2 || d == 3) {
    const int slot = sprite_identity_slot()[cy * 9 + cx];
    return ((identity_bits >> slot) & 1u) ? 176 : 80;
  }
  if (cx == 8) return 255;
  if (cx == 0) return 0;
  return 128;
}

inline void draw_sprite(GrayImage& img, double ucenter, double vcenter,
                        std::uint64_t identity_bits, double roll) {
  const double c = std::cos(roll), s = std::sin(roll);
  const int x0 = std::max(0, static_cast<int>(std::floor(ucenter - kSpriteReach)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(ucenter + kSpriteReach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(vcenter - kSpriteReach)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(vcenter + kSpriteReach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double ox = x - ucenter, oy = y - vcenter;
      // Inverse rotation back into pattern space (pattern appears rotated by
      // +roll in the image).
      const double sx = c * ox + s * oy;
      const double sy = -s * ox + c * oy;
      if (std::abs(sx) >= kSpriteHalfPx || std::abs(sy) >= kSpriteHalfPx) continue;
      const int cx = std::min(8, static_cast<int>((sx + kSpriteHalfPx) / kCellPx));
      const int cy = std::min(8, static_cast<int>((sy + kSpriteHalfPx) / kCellPx));
      img.at(x, y) = sprite_cell_value(identity_bits, cx, cy);
    }
  }
}

}  // namespace detail

/// Renders the requested frame of a scene as a stereo pair: each landmark
/// becomes an identity-coded high-contrast sprite at its exact projected
/// position over a mid-gray background; patterns are rotated in-plane by
/// `roll`. Two sprites whose footprints could touch raise an error — the
/// scene generator is expected to space landmarks out.
inline std::pair<GrayImage, GrayImage> render_sprites(const SyntheticScene& scene,
                                                      std::size_t frame,
                                                      const StereoCalib& calib, int width,
                                                      int height, double roll = 0.0) {
  if (frame > scene.motions.size())
    throw std::invalid_argument("render_sprites: frame out of range");
  const auto positions = detail::landmark_positions(scene);
  const auto& pts = positions[frame];

  GrayImage left(width, height, std::uint8_t{128});
  GrayImage right(width, height, std::uint8_t{128});

  std::vector<Eigen::Vector2d> lcenters, rcenters;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& X = pts[i];
    const double u_l = calib.f * X.x() / X.z() + calib.cu;
    const double u_r = calib.f * (X.x() - calib.baseline) / X.z() + calib.cu;
    const double v = calib.f * X.y() / X.z() + calib.cv;

    for (const auto* centers : {&lcenters, &rcenters}) {
      const double u = (centers == &lcenters) ? u_l : u_r;
      for (const auto& prev : *centers)
        if (std::abs(prev.x() - u) < 2.0 * detail::kSpriteReach &&
            std::abs(prev.y() - v) < 2.0 * detail::kSpriteReach)
          throw std::invalid_argument(
              "render_sprites: overlapping sprites; re-seed or respace the scene");
    }
    lcenters.emplace_back(u_l, v);
    rcenters.emplace_back(u_r, v);

    const std::uint64_t id = detail::splitmix64(static_cast<std::uint64_t>(i));
    detail::draw_sprite(left, u_l, v, id, roll);
    detail::draw_sprite(right, u_r, v, id, roll);
  }
  return {std::move(left), std::move(right)};
}

/// Scene-construction recipe for make_scene.
struct SceneSpec {
  int frames = 2;
  int landmarks = 30;
  double noise_sigma = 0.0;
  double outlier_rate = 0.0;
  std::uint64_t seed = 1;
  int width = 640;
  int height = 480;
  double min_depth = 8.0;
  double max_depth = 18.0;
  double border_margin = 34.0;   // keeps sprites and descriptor discs inside
  double min_spacing = 52.0;     // Chebyshev, in every frame of both cameras
};

/// Builds a scene whose landmarks stay visible, deep enough, and mutually
/// spaced in both cameras across every scripted frame. Placement is rejection
/// sampling from the seeded generator; an impossible recipe (too many
/// landmarks for the spacing) raises an error.
inline SyntheticScene make_scene(const SceneSpec& spec, const StereoCalib& calib,
                                 const std::vector<MotionParams>& motions) {
  if (spec.frames < 1) throw std::invalid_argument("make_scene: frames must be >= 1");
  if (static_cast<int>(motions.size()) != spec.frames - 1)
    throw std::invalid_argument("make_scene: need exactly frames-1 motions");

  SyntheticScene scene;
  scene.motions = motions;
  scene.noise_sigma = spec.noise_sigma;
  scene.outlier_rate = spec.outlier_rate;
  scene.seed = spec.seed;

  std::vector<Eigen::Matrix3d> R_acc;
  std::vector<Eigen::Vector3d> t_acc;
  R_acc.push_back(Eigen::Matrix3d::Identity());
  t_acc.push_back(Eigen::Vector3d::Zero());
  for (const auto& m : motions) {
    R_acc.push_back(rotation_from_euler(m.r) * R_acc.back());
    t_acc.push_back(rotation_from_euler(m.r) * t_acc.back() + m.t);
  }

  std::mt19937_64 gen(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<Eigen::Vector2d>> lproj(spec.frames), rproj(spec.frames);

  const long max_attempts = 2000L * std::max(1, spec.landmarks);
  for (long attempt = 0; attempt < max_attempts &&
                          static_cast<int>(scene.landmarks.size()) < spec.landmarks;
       ++attempt) {
    const double u = detail::uniform_range(gen, spec.border_margin,
                                           spec.width - 1 - spec.border_margin);
    const double v = detail::uniform_range(gen, spec.border_margin,
                                           spec.height - 1 - spec.border_margin);
    const double z = detail::uniform_range(gen, spec.min_depth, spec.max_depth);
    const Eigen::Vector3d X0((u - calib.cu) * z / calib.f, (v - calib.cv) * z / calib.f, z);

    bool ok = true;
    std::vector<Eigen::Vector2d> lc(spec.frames), rc(spec.frames);
    for (int f = 0; f < spec.frames && ok; ++f) {
      const Eigen::Vector3d X = R_acc[f] * X0 + t_acc[f];
      if (X.z() < spec.min_depth * 0.25) {
        ok = false;
        break;
      }
      const double ul = calib.f * X.x() / X.z() + calib.cu;
      const double ur = calib.f * (X.x() - calib.baseline) / X.z() + calib.cu;
      const double vv = calib.f * X.y() / X.z() + calib.cv;
      const double disparity = ul - ur;
      if (disparity < 1.0) ok = false;
      for (const double uu : {ul, ur})
        if (uu < spec.border_margin || uu > spec.width - 1 - spec.border_margin) ok = false;
      if (vv < spec.border_margin || vv > spec.height - 1 - spec.border_margin) ok = false;
      if (!ok) break;
      for (std::size_t j = 0; j < scene.landmarks.size() && ok; ++j) {
        if ((std::abs(lproj[f][j].x() - ul) < spec.min_spacing &&
             std::abs(lproj[f][j].y() - vv) < spec.min_spacing) ||
            (std::abs(rproj[f][j].x() - ur) < spec.min_spacing &&
             std::abs(rproj[f][j].y() - vv) < spec.min_spacing))
          ok = false;
      }
      lc[f] = {ul, vv};
      rc[f] = {ur, vv};
    }
    if (!ok) continue;
    scene.landmarks.push_back(X0);
    for (int f = 0; f < spec.frames; ++f) {
      lproj[f].push_back(lc[f]);
      rproj[f].push_back(rc[f]);
    }
  }
  if (static_cast<int>(scene.landmarks.size()) < spec.landmarks)
    throw std::invalid_argument("make_scene: could not place the requested landmark count; "
                                "reduce landmarks or spacing");
  return scene;
}

/// Ground-truth camera-to-world poses implied by the scene's motion script;
/// frame 0 is the identity.
inline std::vector<Pose> scene_ground_truth(const SyntheticScene& scene) {
  std::vector<Pose> poses;
  poses.reserve(scene.motions.size() + 1);
  poses.push_back(Pose{});
  for (const auto& m : scene.motions)
    poses.push_back(compose(poses.back(), inverse(motion_to_transform(m))));
  return poses;
}

/// Writes a paired-directory dataset: calib.txt, poses.txt, times.txt (10
/// fps), plus either rendered sprite imagery (left/, right/) or the projected
/// track table. Byte-deterministic for a given scene.
inline void write_dataset(const SyntheticScene& scene, const StereoCalib& calib, int width,
                          int height, const std::string& out_dir, bool render) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create directory: " + out_dir);

  {
    std::ofstream out(out_dir + "/calib.txt");
    if (!out) throw IoError("cannot create " + out_dir + "/calib.txt");
    out << "# f cu cv baseline\n"
        << std::setprecision(12) << calib.f << ' ' << calib.cu << ' ' << calib.cv << ' '
        << calib.baseline << '\n';
  }
  write_trajectory(scene_ground_truth(scene), out_dir + "/poses.txt");
  {
    std::ofstream out(out_dir + "/times.txt");
    if (!out) throw IoError("cannot create " + out_dir + "/times.txt");
    for (std::size_t k = 0; k <= scene.motions.size(); ++k)
      out << std::setprecision(12) << 0.1 * static_cast<double>(k) << '\n';
  }

  if (render) {
    fs::create_directories(out_dir + "/left", ec);
    fs::create_directories(out_dir + "/right", ec);
    for (std::size_t k = 0; k <= scene.motions.size(); ++k) {
      auto [left, right] = render_sprites(scene, k, calib, width, height);
      char name[32];
      std::snprintf(name, sizeof(name), "/%06zu.pgm", k);
      write_pgm(left, out_dir + "/left" + name);
      write_pgm(right, out_dir + "/right" + name);
    }
  } else {
    std::ofstream out(out_dir + "/tracks.csv");
    if (!out) throw IoError("cannot create " + out_dir + "/tracks.csv");
    out << "frame,landmark,X,Y,Z,xl_u,xl_v,xr_u,xr_v\n" << std::setprecision(12);
    const auto tracks = generate_tracks(scene, calib);
    for (std::size_t k = 0; k < tracks.size(); ++k)
      for (std::size_t i = 0; i < tracks[k].obs.size(); ++i) {
        const auto& ob = tracks[k].obs[i];
        out << (k + 1) << ',' << i << ',' << ob.landmark.x() << ',' << ob.landmark.y() << ','
            << ob.landmark.z() << ',' << ob.x_l.x() << ',' << ob.x_l.y() << ',' << ob.x_r.x()
            << ',' << ob.x_r.y() << '\n';
      }
  }
}

}  // namespace cforb
