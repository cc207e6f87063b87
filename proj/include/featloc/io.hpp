#pragma once

#include "featloc/detector.hpp"
#include "featloc/scene.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace featloc {

/// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileNotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary scene: "FGS1", u32 version, u64 count, u32 D, then per Gaussian
// float32 center[3], quat[4] (w,x,y,z), scale[3], opacity, color[3], feature[D].
inline constexpr std::uint32_t kSceneVersion = 1;
void write_scene(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene read_scene(const std::filesystem::path& path);

/// Binary little-endian PLY with x y z rot_0..3 scale_0..2 opacity red green
/// blue f_0..f_{D-1} as raw float values, tagged by a
/// "comment featloc-raw-attributes" header line.
void write_ply(const std::filesystem::path& path, const GaussianScene& scene);

/// Reads files from write_ply, and untagged 3D Gaussian splatting exports
/// (f_dc_0..2 degree-0 SH color, log scales, logit opacity).
GaussianScene read_ply(const std::filesystem::path& path);

struct NamedPose {
  std::string name;
  SE3Pose pose;
};

/// Text lines "name qw qx qy qz tx ty tz", world to camera. Blank lines and
/// lines starting with '#' are skipped.
void write_poses(const std::filesystem::path& path, const std::vector<NamedPose>& poses);
std::vector<NamedPose> read_poses(const std::filesystem::path& path);
std::vector<NamedPose> parse_poses(const std::string& text);

struct NamedIntrinsics {
  std::string name;
  CameraIntrinsics intr;
};

/// Text lines "name fx fy cx cy w h".
void write_intrinsics(const std::filesystem::path& path, const std::vector<NamedIntrinsics>& cams);
std::vector<NamedIntrinsics> read_intrinsics(const std::filesystem::path& path);
std::vector<NamedIntrinsics> parse_intrinsics(const std::string& text);

/// "FMP1", u32 D, H, W, float32 data channel-major.
void write_featmap(const std::filesystem::path& path, const FeatureMap& fm);
FeatureMap read_featmap(const std::filesystem::path& path);

/// Color images use the feature-map container with three channels.
void write_image(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_image(const std::filesystem::path& path);

/// Binary PPM for viewing.
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);

/// One Gaussian index per line.
void write_landmarks(const std::filesystem::path& path, const std::vector<int>& indices);
std::vector<int> read_landmarks(const std::filesystem::path& path);

// "DET1", u32 version, u32 D, u32 layer count, u32 channel plan, u32 kernel
// size per layer, then per layer float32 weights (row-major out x in*k*k)
// followed by float32 biases.
inline constexpr std::uint32_t kDetectorVersion = 1;
void write_detector(const std::filesystem::path& path, const DetectorParams& params);
DetectorParams read_detector(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace featloc
