#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cforb/core.hpp"

namespace cforb {

namespace detail {

/// Next integer token in a PNM header, skipping whitespace and '#' comments.
/// Consumes the single whitespace byte that terminates the token.
inline int pnm_next_int(std::istream& in, const std::string& path) {
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) throw IoError("truncated PGM header: " + path);
  if (!std::isdigit(c)) throw IoError("malformed PGM header: " + path);
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1000000000L) throw IoError("oversized PGM header field: " + path);
    c = in.get();
  }
  return static_cast<int>(value);
}

}  // namespace detail

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw IoError("not a binary PGM: " + path);
  const int width = detail::pnm_next_int(in, path);
  const int height = detail::pnm_next_int(in, path);
  const int maxval = detail::pnm_next_int(in, path);
  if (width <= 0 || height <= 0) throw IoError("bad PGM dimensions: " + path);
  if (maxval <= 0 || maxval > 255) throw IoError("unsupported PGM maxval: " + path);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size())
    throw IoError("truncated PGM pixel data: " + path);
  return GrayImage(width, height, std::move(data));
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("write failure: " + path);
}

namespace detail {

struct PngReadState {
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
};

}  // namespace detail

/// Decodes an 8-bit PNG to grayscale. Palette and 16-bit inputs are expanded
/// or narrowed by libpng; color pixels collapse through the BT.601 luma
/// weights 0.299/0.587/0.114.
inline GrayImage read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("libpng initialization failure: " + path);
  }

  // All C++ state lives on the heap behind a pointer fixed before setjmp, so
  // a longjmp from libpng never touches an automatic object mid-lifetime.
  auto state = std::make_unique<detail::PngReadState>();

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("PNG decode failure: " + path);
  }

  png_init_io(png, fp);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  state->width = png_get_image_width(png, info);
  state->height = png_get_image_height(png, info);
  state->channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (state->width == 0 || state->height == 0 ||
      (state->channels != 1 && state->channels != 3) ||
      rowbytes != static_cast<std::size_t>(state->width) * state->channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("unsupported PNG layout: " + path);
  }

  state->pixels.resize(rowbytes * state->height);
  state->rows.resize(state->height);
  for (std::uint32_t y = 0; y < state->height; ++y)
    state->rows[y] = state->pixels.data() + static_cast<std::size_t>(y) * rowbytes;
  png_read_image(png, state->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  const int w = static_cast<int>(state->width);
  const int h = static_cast<int>(state->height);
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
  if (state->channels == 1) {
    std::copy(state->pixels.begin(), state->pixels.end(), gray.begin());
  } else {
    for (std::size_t i = 0; i < gray.size(); ++i) {
      const png_byte* p = state->pixels.data() + 3 * i;
      const double luma = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
      gray[i] = static_cast<std::uint8_t>(std::lround(std::min(luma, 255.0)));
    }
  }
  return GrayImage(w, h, std::move(gray));
}

/// Reads a PGM or PNG image, dispatching on the file's magic bytes.
inline GrayImage read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
  if (magic[0] == 0x89 && magic[1] == 'P') return read_png(path);
  throw IoError("unrecognized image format: " + path);
}

inline std::vector<Pose> load_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v[12];
    for (auto& x : v)
      if (!(ls >> x))
        throw IoError("pose line " + std::to_string(poses.size() + 1) +
                      " does not hold 12 numbers: " + path);
    Pose p;
    p.R << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    p.t << v[3], v[7], v[11];
    poses.push_back(p);
  }
  return poses;
}

inline void write_trajectory(const std::vector<Pose>& trajectory, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path);
  out << std::setprecision(12);
  for (const auto& p : trajectory) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (r != 0 || c != 0) out << ' ';
        out << (c == 3 ? p.t(r) : p.R(r, c));
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure: " + path);
}

inline std::vector<double> load_times(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<double> times;
  double v;
  while (in >> v) times.push_back(v);
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1])
      throw IoError("timestamps not strictly increasing at line " + std::to_string(i + 1) +
                    ": " + path);
  return times;
}

/// f, cu, cv from the P0 projection row; baseline from P1's -P1[0][3]/P1[0][0].
inline StereoCalib parse_kitti_calib(std::istream& in, const std::string& path) {
  std::optional<std::array<double, 12>> p0, p1;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag != "P0:" && tag != "P1:") continue;
    std::array<double, 12> v{};
    for (auto& x : v)
      if (!(ls >> x)) throw IoError("garbled " + tag.substr(0, 2) + " line: " + path);
    (tag == "P0:" ? p0 : p1) = v;
  }
  if (!p0 || !p1) throw IoError("calibration missing P0/P1 rows: " + path);
  StereoCalib calib;
  calib.f = (*p0)[0];
  calib.cu = (*p0)[2];
  calib.cv = (*p0)[6];
  if ((*p1)[0] == 0.0) throw IoError("P1 focal length is zero: " + path);
  calib.baseline = -(*p1)[3] / (*p1)[0];
  if (calib.f <= 0.0) throw IoError("non-positive focal length: " + path);
  if (calib.baseline <= 0.0) throw IoError("non-positive derived baseline: " + path);
  return calib;
}

inline StereoCalib load_kitti_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_kitti_calib(in, path);
}

/// Plain-text calibration for the paired-directory layout: one line holding
/// `f cu cv baseline`; '#' comments and blank lines are skipped.
inline StereoCalib load_dirs_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    StereoCalib calib;
    if (ls >> calib.f >> calib.cu >> calib.cv >> calib.baseline) {
      if (calib.f <= 0.0) throw IoError("non-positive focal length: " + path);
      if (calib.baseline <= 0.0) throw IoError("non-positive baseline: " + path);
      return calib;
    }
  }
  throw IoError("no `f cu cv baseline` line found: " + path);
}

namespace detail {

inline std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png" || ext == ".pgm") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw IoError("no images in " + dir);
  return paths;
}

}  // namespace detail

/// A loaded stereo sequence: parallel image lists, calibration, and optional
/// ground truth / timestamps.
struct SequenceSource {
  std::vector<std::string> left_paths;
  std::vector<std::string> right_paths;
  StereoCalib calib;
  std::optional<std::vector<Pose>> ground_truth;
  std::optional<std::vector<double>> timestamps;

  std::size_t size() const { return left_paths.size(); }

  std::pair<GrayImage, GrayImage> load_pair(std::size_t i) const {
    GrayImage left = read_image(left_paths.at(i));
    GrayImage right = read_image(right_paths.at(i));
    if (left.width != right.width || left.height != right.height)
      throw IoError("stereo dimension mismatch: " + left_paths[i]);
    return {std::move(left), std::move(right)};
  }
};

namespace detail {

inline void finish_source(SequenceSource& src, const std::string& left_dir,
                          const std::string& right_dir,
                          const std::optional<std::string>& poses_path,
                          const std::string& times_path) {
  src.left_paths = list_images(left_dir);
  src.right_paths = list_images(right_dir);
  if (src.left_paths.size() != src.right_paths.size())
    throw IoError("image count mismatch: " + left_dir + " vs " + right_dir);
  if (poses_path) {
    auto poses = load_poses(*poses_path);
    if (poses.size() != src.left_paths.size())
      throw IoError("ground-truth pose count mismatch: " + *poses_path);
    src.ground_truth = std::move(poses);
  }
  if (std::filesystem::exists(times_path)) {
    auto times = load_times(times_path);
    if (times.size() != src.left_paths.size())
      throw IoError("timestamp count mismatch: " + times_path);
    src.timestamps = std::move(times);
  }
}

}  // namespace detail

/// KITTI odometry layout: image_0/ and image_1/ under the sequence directory,
/// P0/P1 calibration, optional ground-truth poses, times.txt when present.
inline SequenceSource load_kitti(const std::string& sequence_dir, const std::string& calib_file,
                                 const std::optional<std::string>& poses_file = std::nullopt) {
  SequenceSource src;
  src.calib = load_kitti_calib(calib_file);
  detail::finish_source(src, sequence_dir + "/image_0", sequence_dir + "/image_1", poses_file,
                        sequence_dir + "/times.txt");
  return src;
}

/// Paired-directory layout: left/, right/, calib.txt (`f cu cv baseline`),
/// optional poses.txt and times.txt beside them.
inline SequenceSource load_dirs(const std::string& dataset_dir) {
  SequenceSource src;
  src.calib = load_dirs_calib(dataset_dir + "/calib.txt");
  std::optional<std::string> poses;
  if (std::filesystem::exists(dataset_dir + "/poses.txt")) poses = dataset_dir + "/poses.txt";
  detail::finish_source(src, dataset_dir + "/left", dataset_dir + "/right", poses,
                        dataset_dir + "/times.txt");
  return src;
}

}  // namespace cforb
