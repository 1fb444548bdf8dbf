#pragma once

// Readers and writers for every on-disk format. Binary formats are little
// endian; malformed input raises FormatError with the byte offset.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "adaptvo/adaptloop.hpp"
#include "adaptvo/geom.hpp"
#include "adaptvo/losses.hpp"
#include "adaptvo/metrics.hpp"
#include "adaptvo/refinernet.hpp"
#include "adaptvo/sparsedepth.hpp"

namespace adaptvo::io {

// "DPF1": u32 width, u32 height, f32 row-major, 0 = invalid.
void write_depth(std::ostream& out, const DepthMap& depth);
DepthMap read_depth(std::istream& in);
// "MSK1": u32 width, u32 height, f32 row-major.
void write_mask(std::ostream& out, const MaskMap& mask);
MaskMap read_mask(std::istream& in);
// "SEG1": u32 width, u32 height, u16 row-major.
void write_labels(std::ostream& out, const LabelRaster& labels);
LabelRaster read_labels(std::istream& in);
// Binary PGM (P5, maxval 255); intensities are v / 255.
void write_pgm(std::ostream& out, const Image& image);
Image read_pgm(std::istream& in);
// "NET1": u32 layers; per layer u32 d, u32 k, u32 r, u8 flags, then f64
// W0 (row-major), bias, A, B.
void write_net(std::ostream& out, const ToyDepthNet& net);
ToyDepthNet read_net(std::istream& in);

inline constexpr std::uint8_t kFlagBaseFrozen = 0x01;
inline constexpr std::uint8_t kFlagRefinerTrainable = 0x02;
inline constexpr std::uint8_t kFlagIdentityActivation = 0x10;

// "# frame <id>" followed by "u v depth" lines.
void write_sparse(std::ostream& out, const SparseDepth& sparse);
SparseDepth read_sparse(std::istream& in);
// "# frames <a> <b>" followed by "ua va ub vb" lines.
void write_correspondences(std::ostream& out, const CorrespondenceSet& set);
CorrespondenceSet read_correspondences(std::istream& in);
// TUM: "timestamp tx ty tz qx qy qz qw" per line, '#' comments allowed.
void write_tum(std::ostream& out, const Trajectory& trajectory);
Trajectory read_tum(std::istream& in);

void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, int step, const LossBreakdown& loss);

void write_camera(std::ostream& out, const CameraIntrinsics& K);
CameraIntrinsics read_camera(std::istream& in);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);
/// Nine significant digits for human-facing output.
std::string format_report(double x);

// Path helpers; errors name the file.
void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

DepthMap load_depth(const std::filesystem::path& path);
MaskMap load_mask(const std::filesystem::path& path);
LabelRaster load_labels(const std::filesystem::path& path);
Image load_pgm(const std::filesystem::path& path);
ToyDepthNet load_net(const std::filesystem::path& path);
SparseDepth load_sparse(const std::filesystem::path& path);
CorrespondenceSet load_correspondences(const std::filesystem::path& path);
Trajectory load_tum(const std::filesystem::path& path);
CameraIntrinsics load_camera(const std::filesystem::path& path);

// Frame directory:
//   camera.json
//   frames.txt           "id timestamp" per frame, in stream order
//   frame_<id>.pgm       intensities
//   frame_<id>.seg       SEG1 categories; frame_<id>.inst instance ids (optional)
//   frame_<id>.dpf       ground-truth depth (optional)
//   matches_<id>.txt     correspondences from frame <id> to the next frame
//   truth.tum            ground-truth world_from_camera (optional)
struct FrameDirectory {
  FrameStream stream;
  std::vector<DepthMap> depths;  // empty without ground truth
  Trajectory truth;
};

std::string frame_stem(int id);
void write_frame_dir(const std::filesystem::path& dir, const FrameDirectory& frames);
FrameDirectory load_frame_dir(const std::filesystem::path& dir);

}  // namespace adaptvo::io
