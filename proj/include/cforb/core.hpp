#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cforb {

/// 8-bit intensity raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;

  // Validates before the vector is sized: a negative dimension must surface
  // as invalid_argument, not as a length_error from a wrapped-around product.
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(checked_area(w, h), fill) {}

  GrayImage(int w, int h, std::vector<std::uint8_t> pixels)
      : width(w), height(h), data(std::move(pixels)) {
    if (data.size() != checked_area(w, h))
      throw std::invalid_argument("GrayImage: data length != width*height");
  }

  static std::size_t checked_area(int w, int h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("GrayImage: non-positive dimensions");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

/// Image pyramid, level 0 = original, levels ordered largest first.
struct Pyramid {
  std::vector<GrayImage> levels;
  double scale_factor = 1.2;
};

/// Rectified stereo rig: identical intrinsics in both cameras.
struct StereoCalib {
  double f = 0.0;         // focal length, px
  double cu = 0.0;        // principal point u, px
  double cv = 0.0;        // principal point v, px
  double baseline = 0.0;  // meters

  void validate() const {
    if (!(f > 0.0)) throw std::invalid_argument("StereoCalib: f must be > 0");
    if (!(baseline > 0.0)) throw std::invalid_argument("StereoCalib: baseline must be > 0");
  }
};

/// Frame-to-frame 6-DoF motion, Euler angles (rx, ry, rz) in radians, translation in meters.
struct MotionParams {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

/// Rigid transform [R|t]; used as camera-to-world for trajectory poses.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

inline Pose compose(const Pose& parent, const Pose& child) {
  return Pose{parent.R * child.R, parent.R * child.t + parent.t};
}

inline Pose inverse(const Pose& p) {
  Eigen::Matrix3d rt = p.R.transpose();
  return Pose{rt, -(rt * p.t)};
}

inline Eigen::Matrix3d rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return m;
}

inline Eigen::Matrix3d rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s,
       0, 1, 0,
      -s, 0, c;
  return m;
}

inline Eigen::Matrix3d rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return m;
}

/// Euler convention R = Rx(rx) * Ry(ry) * Rz(rz).
inline Eigen::Matrix3d rotation_from_euler(const Eigen::Vector3d& r) {
  return rotation_x(r.x()) * rotation_y(r.y()) * rotation_z(r.z());
}

/// Motion as a rigid transform mapping previous-frame coordinates to current-frame coordinates.
inline Pose motion_to_transform(const MotionParams& m) {
  return Pose{rotation_from_euler(m.r), m.t};
}

/// Per-frame pipeline record; `flagged` marks frames where estimation fell back
/// to the previous motion.
struct FrameStats {
  std::size_t frame_index = 0;
  std::size_t stereo_matches = 0;
  std::size_t circular_matches = 0;
  std::size_t inlier_count = 0;
  double inlier_pct = 0.0;
  bool flagged = false;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset and filesystem failures; the CLI maps these to the data-error exit code.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// All pipeline tunables in one place. Defaults are conventional values; the
/// RANSAC iteration count of 50 is fixed by the method description.
struct PipelineConfig {
  int fast_threshold = 20;           // intensity units
  std::size_t max_features = 2000;
  int pyramid_levels = 8;
  double scale_factor = 1.2;
  int patch_radius = 15;             // moments disc radius, px
  int coarse_hamming_max = 40;       // first-16-byte cascade threshold, bits
  int full_hamming_max = 128;        // full-descriptor acceptance threshold, bits
  double vertical_max_px = 3.0;
  double horizontal_max_px = 128.0;
  double min_disparity_px = 0.5;
  double circular_window_px = 100.0;  // half-size of the square search window
  int ransac_iterations = 50;
  int ransac_sample_size = 3;
  double inlier_threshold = 4.0;      // square-pixels
  int gn_max_iters = 50;
  double gn_step_tol = 1e-9;
  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(fast_threshold, "fast_threshold");
    positive(static_cast<double>(max_features), "max_features");
    positive(pyramid_levels, "pyramid_levels");
    if (!(scale_factor > 1.0)) throw ConfigError("config: scale_factor must be > 1");
    positive(patch_radius, "patch_radius");
    positive(coarse_hamming_max, "coarse_hamming_max");
    positive(full_hamming_max, "full_hamming_max");
    positive(vertical_max_px, "vertical_max_px");
    positive(horizontal_max_px, "horizontal_max_px");
    positive(min_disparity_px, "min_disparity_px");
    positive(circular_window_px, "circular_window_px");
    positive(ransac_iterations, "ransac_iterations");
    positive(gn_max_iters, "gn_max_iters");
    positive(gn_step_tol, "gn_step_tol");
    positive(inlier_threshold, "inlier_threshold");
    if (ransac_sample_size < 3) throw ConfigError("config: ransac_sample_size must be >= 3");
    if (coarse_hamming_max > 128) throw ConfigError("config: coarse_hamming_max must be <= 128");
    if (full_hamming_max > 512) throw ConfigError("config: full_hamming_max must be <= 512");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  T out{};
  in >> out;
  std::string rest;
  if (in.fail() || (in >> rest && !rest.empty()))
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  return out;
}

}  // namespace detail

/// Parses `key = value` lines; '#' starts a comment; unknown keys are an error.
inline PipelineConfig parse_config(std::istream& in, PipelineConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));

    if (key == "fast_threshold") cfg.fast_threshold = detail::parse_number<int>(value, key);
    else if (key == "max_features") cfg.max_features = detail::parse_number<std::size_t>(value, key);
    else if (key == "pyramid_levels") cfg.pyramid_levels = detail::parse_number<int>(value, key);
    else if (key == "scale_factor") cfg.scale_factor = detail::parse_number<double>(value, key);
    else if (key == "patch_radius") cfg.patch_radius = detail::parse_number<int>(value, key);
    else if (key == "coarse_hamming_max") cfg.coarse_hamming_max = detail::parse_number<int>(value, key);
    else if (key == "full_hamming_max") cfg.full_hamming_max = detail::parse_number<int>(value, key);
    else if (key == "vertical_max_px") cfg.vertical_max_px = detail::parse_number<double>(value, key);
    else if (key == "horizontal_max_px") cfg.horizontal_max_px = detail::parse_number<double>(value, key);
    else if (key == "min_disparity_px") cfg.min_disparity_px = detail::parse_number<double>(value, key);
    else if (key == "circular_window_px") cfg.circular_window_px = detail::parse_number<double>(value, key);
    else if (key == "ransac_iterations") cfg.ransac_iterations = detail::parse_number<int>(value, key);
    else if (key == "ransac_sample_size") cfg.ransac_sample_size = detail::parse_number<int>(value, key);
    else if (key == "inlier_threshold") cfg.inlier_threshold = detail::parse_number<double>(value, key);
    else if (key == "gn_max_iters") cfg.gn_max_iters = detail::parse_number<int>(value, key);
    else if (key == "gn_step_tol") cfg.gn_step_tol = detail::parse_number<double>(value, key);
    else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(value, key);
    else throw ConfigError("config: unknown key '" + key + "' (line " + std::to_string(lineno) + ")");
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_config(in);
}

}  // namespace cforb
