#pragma once

#include "featloc/field_optimizer.hpp"
#include "featloc/landmark_sampler.hpp"
#include "featloc/rasterizer.hpp"
#include "featloc/scene.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace featloc {

/// k x k (k odd), stride 1, zero padding k / 2. Weight columns are ordered
/// (in_channel, ky, kx).
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  Eigen::MatrixXd weight;  // out x (in * k * k)
  Eigen::VectorXd bias;
};

/// Convolution stack D -> hidden... -> 1. SiLU after every layer but the
/// last, which ends in a sigmoid.
struct DetectorParams {
  int feature_dim = 0;
  std::vector<ConvLayer> layers;

  /// PyTorch-style uniform(+-1/sqrt(fan_in)) initialization under `seed`.
  /// `kernels` has one odd size per layer (hidden.size() + 1); empty means all 3.
  static DetectorParams create(int feature_dim, const std::vector<int>& hidden = {64, 64, 64},
                               std::uint64_t seed = 0, const std::vector<int>& kernels = {});

  std::vector<int> channel_plan() const;
  std::vector<int> kernel_plan() const;
  std::size_t parameter_count() const;
  void validate() const;
};

/// Scene-specific detector: a 1x1 template layer with one unit per landmark,
/// SiLU(gain * (<f, l_j> - cut)), then a 1x1 layer to hidden[0], 3x3 layers
/// through the rest of `hidden`, and a 3x3 output. Non-template layers are
/// initialized as in create().
DetectorParams create_template_detector(const LandmarkSet& landmarks, const std::vector<int>& hidden = {16, 16},
                                        std::uint64_t seed = 0);

inline constexpr double kTemplateGain = 10.0;
inline constexpr double kTemplateCut = 0.5;

/// 1 x H' x W' landmark probabilities.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int y, int x) const { return data[std::size_t(y) * width + x]; }
};

struct BinaryGrid {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryGrid() = default;
  BinaryGrid(int h, int w) : height(h), width(w), data(std::size_t(h) * w, 0) {}
  std::uint8_t at(int y, int x) const { return data[std::size_t(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[std::size_t(y) * width + x]; }
  std::size_t count() const;
};

struct Keypoint {
  double u = 0.0;  // feature-map pixels
  double v = 0.0;
  double score = 0.0;
  VecX feature;
};

Heatmap forward(const DetectorParams& params, const FeatureMap& fm);

/// Ground truth for one view: texels nearest to the projections of the
/// landmarks visible in it are 1, all others 0.
BinaryGrid build_gt_heatmap(const LandmarkSet& landmarks, const GaussianScene& scene, const CameraView& view,
                            int fm_width, int fm_height);

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
double bce_loss(const Heatmap& pred, const BinaryGrid& gt);

struct DetectorGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

/// BCE of forward(params, fm) against gt, with the full parameter gradient.
double detector_loss_and_gradient(const DetectorParams& params, const FeatureMap& fm, const BinaryGrid& gt,
                                  DetectorGradients& grads);

struct DetectorTrainConfig {
  double lr = 0.001;
  int steps = 2000;
  /// Side of the square training crop; 0 trains on whole maps.
  int crop = 64;
  std::uint64_t seed = 0;
};

struct DetectorTrainResult {
  DetectorParams params;
  std::vector<double> loss_trace;
};

/// Adam with lr * (1 + cos(pi * step / steps)) / 2, views visited round-robin
/// in a seeded order.
DetectorTrainResult train_detector(const DetectorParams& params, const GaussianScene& scene,
                                   const LandmarkSet& landmarks, std::span<const TrainView> views,
                                   const DetectorTrainConfig& cfg);

/// Same, on precomputed (feature map, ground truth) pairs.
DetectorTrainResult train_detector_on(const DetectorParams& params, std::span<const FeatureMap> maps,
                                      std::span<const BinaryGrid> targets, const DetectorTrainConfig& cfg);

/// Strict local maxima within Chebyshev radius `nms_radius` (equal scores:
/// lowest row-major index wins), at least `min_score`, best `max_keypoints`
/// by score.
std::vector<Keypoint> extract_keypoints(const Heatmap& hm, const FeatureMap& fm, int nms_radius = 4,
                                        int max_keypoints = 2048, double min_score = 0.1);

}  // namespace featloc
