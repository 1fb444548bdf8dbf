#pragma once

// Ray-cast synthetic scenes with exact depth, labels, correspondences and a
// controllable appearance/geometry shift. All outputs are a pure function of
// the spec and its seed.

#include <cstdint>
#include <optional>
#include <vector>

#include "adaptvo/adaptloop.hpp"
#include "adaptvo/geom.hpp"
#include "adaptvo/refinernet.hpp"
#include "adaptvo/sparsedepth.hpp"

namespace adaptvo {

struct PlaneSpec {
  Vec3 normal = Vec3::UnitZ();  // unit length
  double offset = 0.0;          // points satisfy normal . p = offset
  std::uint16_t category = 1;
  std::uint16_t instance = 0;   // 0 = background stuff
};

struct BoxSpec {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
  std::uint16_t category = 1;
  std::uint16_t instance = 0;
  Vec3 velocity = Vec3::Zero();  // meters per frame, world frame
};

struct DomainShift {
  double gamma = 1.0;        // intensity -> intensity^(1/gamma)
  double depth_scale = 1.0;  // world geometry and camera path scaled
  std::vector<double> palette;  // per-category albedo factors, empty = source palette
};

/// Default target-domain shift used by the fixtures.
DomainShift default_shift();

struct SceneSpec {
  std::uint64_t seed = 1;
  CameraIntrinsics camera;
  std::vector<PlaneSpec> planes;
  std::vector<BoxSpec> boxes;
  std::vector<Pose> trajectory;  // world_from_camera per frame
  double texture_amplitude = 0.08;
  double min_wavelength = 0.8;  // meters
  double max_wavelength = 2.0;
  // Shading is baked into the surfaces: it falls off with the distance of a
  // world point from the plane shade_axis . p = shade_reference, so it does
  // not change with the viewpoint.
  Vec3 shade_axis = Vec3::UnitZ();
  double shade_reference = 0.0;
  double shade_length = 5.0;  // meters for the falloff to drop by e
  DomainShift shift;
};

struct FrameTruth {
  int id = 0;
  Image image;     // quantized to 1/255
  DepthMap depth;  // exact ray depth, 0 where nothing is hit
  SegMap seg;      // categories + instances
  Pose world_from_camera;
  LabelRaster primitive;  // hit primitive index + 1, 0 = none
  // Ground-truth flow to the previous frame, valid where the surface point
  // is visible there (never valid for frame 0).
  ScalarMap flow_u;
  ScalarMap flow_v;
  ValidityMap flow_valid;
};

/// Shading as a function of the (scaled) distance from the shade plane. For
/// cameras near that plane and facing along its axis this tracks depth and
/// is the main monocular depth cue.
double shade(double distance, double length = 5.0);

std::vector<FrameTruth> generate(const SceneSpec& spec);

/// Relative motion b_from_a = inverse(T_w_b) * T_w_a.
Pose relative_pose(const FrameTruth& a, const FrameTruth& b);

enum class CorrespondenceMode { kStaticOnly, kAllPixels };

/// `n` integer pixels of frame b paired with their exact location in frame
/// a; Gaussian noise of `sigma` pixels is added to the frame-a location.
/// Throws EmptyInputError when fewer than `n` pixels are covisible.
CorrespondenceSet sample_correspondences(const SceneSpec& spec, const std::vector<FrameTruth>& frames, int a, int b,
                                         std::size_t n, std::uint64_t seed,
                                         CorrespondenceMode mode = CorrespondenceMode::kStaticOnly,
                                         double sigma = 0.0);

struct StreamOptions {
  std::size_t matches = 600;  // correspondences per consecutive pair
  double sigma = 0.0;         // pixel noise on the earlier frame
  std::uint64_t seed = 5;
  CorrespondenceMode mode = CorrespondenceMode::kStaticOnly;
  double frame_interval = 0.1;  // seconds between timestamps
};

/// Images, labels and sampled matches of rendered frames, as the online loop
/// consumes them.
FrameStream make_stream(const SceneSpec& spec, const std::vector<FrameTruth>& frames, const StreamOptions& options);

struct RoomOptions {
  std::uint64_t seed = 1;
  int width = 60;  // multiples of the 20-cell densification grid
  int height = 40;
  double focal = 0.5;  // fx = fy = focal * width
  double size = 0.4;   // multiplies every length of the room, its texture and the path
  int frames = 40;
  int boxes = 4;
  double step = 3.0;  // scales the camera path speed
  DomainShift shift;
};

/// Room with floor, ceiling, side and back walls, textured boxes and a smooth
/// camera path that mixes lateral, forward and yaw motion.
SceneSpec make_room_scene(const RoomOptions& options);

struct MovingBoxOptions {
  std::uint64_t seed = 7;
  int width = 64;
  int height = 48;
  int frames = 3;
  Vec3 velocity = Vec3(0.6, 0.0, -0.4);
};

/// Static camera facing a wall with one large box moving across it.
SceneSpec make_moving_box_scene(const MovingBoxOptions& options);

struct PretrainOptions {
  NetConfig net;
  int epochs = 0;            // Adam passes over the pixels after the ridge fit
  double learning_rate = 1e-3;
  double ridge = 1e-3;
  int frame_stride = 2;
  std::size_t batch = 4096;
  std::uint64_t seed = 11;
};

struct PretrainResult {
  ToyDepthNet net;
  std::vector<double> loss_curve;  // mean squared raw-output error per epoch
};

/// Direct supervision on rendered depth: a ridge fit of the output layer on
/// the random hidden features, then optional Adam epochs on all frozen-block
/// weights. Refiners keep their initial state (B = 0).
PretrainResult pretrain_toy_net(const std::vector<SceneSpec>& scenes, const PretrainOptions& options);

struct DepthSupervision {
  Image image;
  DepthMap depth;
};

/// Same fit on given frames; `frame_stride` is not applied.
PretrainResult pretrain_toy_net(const std::vector<DepthSupervision>& samples, const PretrainOptions& options);

struct ShiftFixtureOptions {
  int width = 60;
  int height = 40;
  int target_frames = 301;  // 300 pairs, one learning step each
  int source_scenes = 4;
  double texture_amplitude = 0.08;
  StreamOptions stream;
};

/// Source-domain room scenes for pre-training and one shifted target room
/// with its stream. The adaptation config uses a larger learning rate and
/// depth-consistency weight than the defaults; with those defaults the toy
/// net moves too little in 300 steps to show a domain-shift correction.
struct ShiftFixture {
  std::vector<SceneSpec> source;
  SceneSpec target;
  std::vector<FrameTruth> target_frames;
  FrameStream stream;
  AdaptConfig config;
};

ShiftFixture make_shift_fixture(const ShiftFixtureOptions& options = {});

/// Mean aligned AbsRel of the net's predictions over frames with depth.
double mean_abs_rel(const ToyDepthNet& net, const std::vector<FrameTruth>& frames);

}  // namespace adaptvo
