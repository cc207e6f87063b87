#include "featloc/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace featloc {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Output pixels processed per im2col block.
constexpr int kChunkPixels = 128;

RowMat sigmoid(const RowMat& z) { return (1.0 + (-z).array().exp()).inverse().matrix(); }

// cols(c*k*k + ky*k + kx, j) = act(c, pixel j of rows [y0, y1) shifted by (ky-r, kx-r)), r = k/2.
void im2col(const RowMat& act, int h, int w, int k, int y0, int y1, RowMat& cols) {
  const int channels = int(act.rows());
  const int n = (y1 - y0) * w;
  const int r = k / 2;
  cols.setZero(channels * k * k, n);
  for (int c = 0; c < channels; ++c) {
    const double* src = act.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols.row((c * k + ky) * k + kx).data();
        const int dx = kx - r;
        const int xs = std::max(0, -dx), xe = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const int yy = y + ky - r;
          if (yy < 0 || yy >= h) continue;
          double* d = dst + std::size_t(y - y0) * w;
          const double* s = src + std::size_t(yy) * w + dx;
          for (int x = xs; x < xe; ++x) d[x] = s[x];
        }
      }
  }
}

// Adjoint of im2col: scatter-add block gradients back onto the activation grid.
void col2im_add(const RowMat& cols, int h, int w, int k, int y0, int y1, RowMat& grad_act) {
  const int channels = int(grad_act.rows());
  const int r = k / 2;
  for (int c = 0; c < channels; ++c) {
    double* dst = grad_act.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols.row((c * k + ky) * k + kx).data();
        const int dx = kx - r;
        const int xs = std::max(0, -dx), xe = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const int yy = y + ky - r;
          if (yy < 0 || yy >= h) continue;
          const double* s = src + std::size_t(y - y0) * w;
          double* d = dst + std::size_t(yy) * w + dx;
          for (int x = xs; x < xe; ++x) d[x] += s[x];
        }
      }
  }
}

int chunk_rows(int w) { return std::max(1, kChunkPixels / std::max(1, w)); }

RowMat conv(const ConvLayer& layer, const RowMat& act, int h, int w) {
  RowMat out(layer.out_channels, std::size_t(h) * w);
  if (layer.kernel == 1) {
    out.noalias() = layer.weight * act;
  } else {
    RowMat cols;
    const int step = chunk_rows(w);
    for (int y0 = 0; y0 < h; y0 += step) {
      const int y1 = std::min(h, y0 + step);
      im2col(act, h, w, layer.kernel, y0, y1, cols);
      out.middleCols(std::size_t(y0) * w, std::size_t(y1 - y0) * w).noalias() = layer.weight * cols;
    }
  }
  out.colwise() += layer.bias;
  return out;
}

RowMat as_matrix(const FeatureMap& fm) {
  return Eigen::Map<const RowMat>(fm.data.data(), fm.channels, Eigen::Index(fm.plane()));
}

struct ForwardCache {
  std::vector<RowMat> pre;   // pre-activation of each layer
  std::vector<RowMat> post;  // input followed by each layer's activation
};

ForwardCache run_forward(const DetectorParams& params, const FeatureMap& fm, bool keep) {
  if (fm.channels != params.feature_dim) throw DimensionMismatchError("detector: feature map channel mismatch");
  ForwardCache cache;
  RowMat act = as_matrix(fm);
  const int last = int(params.layers.size()) - 1;
  for (int l = 0; l <= last; ++l) {
    RowMat z = conv(params.layers[l], act, fm.height, fm.width);
    RowMat a = sigmoid(z);
    if (l < last) a.array() *= z.array();
    if (keep) {
      cache.post.push_back(std::move(act));
      cache.pre.push_back(std::move(z));
    }
    act = std::move(a);
  }
  cache.post.push_back(std::move(act));
  return cache;
}

Heatmap to_heatmap(const RowMat& out, int h, int w) {
  Heatmap hm{h, w, std::vector<double>(out.data(), out.data() + out.size())};
  // Keep the open-interval invariant when the sigmoid saturates in double.
  const double lo = std::numeric_limits<double>::min(), hi = std::nextafter(1.0, 0.0);
  for (double& v : hm.data) v = std::clamp(v, lo, hi);
  return hm;
}

template <class T>
T crop(const T& src, int x0, int y0, int size);

template <>
FeatureMap crop(const FeatureMap& src, int x0, int y0, int size) {
  FeatureMap out(src.channels, size, size);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = src.at(c, y0 + y, x0 + x);
  return out;
}

template <>
BinaryGrid crop(const BinaryGrid& src, int x0, int y0, int size) {
  BinaryGrid out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.at(y, x) = src.at(y0 + y, x0 + x);
  return out;
}

}  // namespace

std::size_t BinaryGrid::count() const { return std::size_t(std::count(data.begin(), data.end(), 1)); }

DetectorParams DetectorParams::create(int feature_dim, const std::vector<int>& hidden, std::uint64_t seed,
                                      const std::vector<int>& kernels) {
  if (feature_dim < 1) throw std::invalid_argument("DetectorParams: feature_dim must be positive");
  if (!kernels.empty() && kernels.size() != hidden.size() + 1)
    throw std::invalid_argument("DetectorParams: need one kernel size per layer");
  for (int k : kernels)
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("DetectorParams: kernel sizes must be odd and positive");
  DetectorParams p;
  p.feature_dim = feature_dim;
  std::mt19937_64 rng(seed);
  std::vector<int> plan{feature_dim};
  plan.insert(plan.end(), hidden.begin(), hidden.end());
  plan.push_back(1);
  for (std::size_t l = 0; l + 1 < plan.size(); ++l) {
    ConvLayer layer;
    layer.in_channels = plan[l];
    layer.out_channels = plan[l + 1];
    layer.kernel = kernels.empty() ? 3 : kernels[l];
    const int taps = layer.kernel * layer.kernel;
    const double bound = 1.0 / std::sqrt(double(layer.in_channels * taps));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weight.resize(layer.out_channels, layer.in_channels * taps);
    layer.bias.resize(layer.out_channels);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

std::vector<int> DetectorParams::channel_plan() const {
  std::vector<int> plan{feature_dim};
  for (const auto& l : layers) plan.push_back(l.out_channels);
  return plan;
}

DetectorParams create_template_detector(const LandmarkSet& landmarks, const std::vector<int>& hidden,
                                        std::uint64_t seed) {
  if (landmarks.empty()) throw std::invalid_argument("create_template_detector: no landmarks");
  if (hidden.empty()) throw std::invalid_argument("create_template_detector: need at least one hidden layer");
  const int n = int(landmarks.size());
  std::vector<int> plan{n};
  plan.insert(plan.end(), hidden.begin(), hidden.end());
  std::vector<int> kernels(plan.size() + 1, 3);
  kernels[0] = kernels[1] = 1;
  DetectorParams p = DetectorParams::create(int(landmarks.features.cols()), plan, seed, kernels);
  ConvLayer& t = p.layers.front();
  t.weight = kTemplateGain * landmarks.features;
  t.bias.setConstant(-kTemplateGain * kTemplateCut);
  return p;
}

std::vector<int> DetectorParams::kernel_plan() const {
  std::vector<int> plan;
  for (const auto& l : layers) plan.push_back(l.kernel);
  return plan;
}

std::size_t DetectorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += std::size_t(l.weight.size() + l.bias.size());
  return n;
}

void DetectorParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("DetectorParams: no layers");
  int in = feature_dim;
  for (const auto& l : layers) {
    if (l.kernel < 1 || l.kernel % 2 == 0) throw std::invalid_argument("DetectorParams: bad kernel size");
    if (l.in_channels != in || l.weight.rows() != l.out_channels ||
        l.weight.cols() != l.in_channels * l.kernel * l.kernel ||
        l.bias.size() != l.out_channels)
      throw std::invalid_argument("DetectorParams: inconsistent layer shapes");
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw std::invalid_argument("DetectorParams: non-finite parameter");
    in = l.out_channels;
  }
  if (in != 1) throw std::invalid_argument("DetectorParams: last layer must have one output channel");
}

Heatmap forward(const DetectorParams& params, const FeatureMap& fm) {
  const ForwardCache cache = run_forward(params, fm, false);
  return to_heatmap(cache.post.back(), fm.height, fm.width);
}

BinaryGrid build_gt_heatmap(const LandmarkSet& landmarks, const GaussianScene& scene, const CameraView& view,
                            int fm_width, int fm_height) {
  BinaryGrid gt(fm_height, fm_width);
  if (landmarks.empty()) return gt;
  const BlendPlan plan(scene, view.pose, view.intr);
  const Vec2 s = grid_scale(view.intr.width, view.intr.height, fm_width, fm_height);
  for (const int idx : landmarks.indices) {
    if (own_pixel_weight(plan, scene, idx, view.pose, view.intr) < kVisibilityWeight) continue;
    const auto p = project(scene[std::size_t(idx)].center, view.pose, view.intr);
    const int x = int(std::lround(p->u * s.x()));
    const int y = int(std::lround(p->v * s.y()));
    if (x >= 0 && y >= 0 && x < fm_width && y < fm_height) gt.at(y, x) = 1;
  }
  return gt;
}

double bce_loss(const Heatmap& pred, const BinaryGrid& gt) {
  if (pred.height != gt.height || pred.width != gt.width) throw DimensionMismatchError("bce_loss: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double p = std::clamp(pred.data[i], kBceClamp, 1.0 - kBceClamp);
    sum -= gt.data[i] ? std::log(p) : std::log(1.0 - p);
  }
  return sum / double(pred.data.size());
}

double detector_loss_and_gradient(const DetectorParams& params, const FeatureMap& fm, const BinaryGrid& gt,
                                  DetectorGradients& grads) {
  if (fm.height != gt.height || fm.width != gt.width) throw DimensionMismatchError("detector: target shape mismatch");
  const ForwardCache cache = run_forward(params, fm, true);
  const int h = fm.height, w = fm.width;
  const std::size_t n = fm.plane();
  const RowMat& out = cache.post.back();

  grads.weight.resize(params.layers.size());
  grads.bias.resize(params.layers.size());
  double loss = 0.0;
  RowMat dz(1, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = out(0, Eigen::Index(i));
    const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
    loss -= gt.data[i] ? std::log(p) : std::log(1.0 - p);
    // d/dz of the clamped BCE through the sigmoid; zero where the clamp is active.
    dz(0, Eigen::Index(i)) = (raw > kBceClamp && raw < 1.0 - kBceClamp) ? (raw - double(gt.data[i])) / double(n) : 0.0;
  }
  loss /= double(n);

  const int step = chunk_rows(w);
  RowMat cols, dcols;
  for (int l = int(params.layers.size()) - 1; l >= 0; --l) {
    const ConvLayer& layer = params.layers[l];
    const RowMat& input = cache.post[l];
    grads.bias[l] = dz.rowwise().sum();
    RowMat dinput;
    if (layer.kernel == 1) {
      grads.weight[l].noalias() = dz * input.transpose();
      if (l > 0) dinput.noalias() = layer.weight.transpose() * dz;
    } else {
      grads.weight[l].setZero(layer.out_channels, layer.weight.cols());
      if (l > 0) dinput.setZero(layer.in_channels, n);
      for (int y0 = 0; y0 < h; y0 += step) {
        const int y1 = std::min(h, y0 + step);
        const auto block = dz.middleCols(std::size_t(y0) * w, std::size_t(y1 - y0) * w);
        im2col(input, h, w, layer.kernel, y0, y1, cols);
        grads.weight[l].noalias() += block * cols.transpose();
        if (l > 0) {
          dcols.noalias() = layer.weight.transpose() * block;
          col2im_add(dcols, h, w, layer.kernel, y0, y1, dinput);
        }
      }
    }
    if (l > 0) {
      const RowMat& z = cache.pre[l - 1];
      const RowMat sz = sigmoid(z);
      dz = dinput.array() * sz.array() * (1.0 + z.array() * (1.0 - sz.array()));
    }
  }
  return loss;
}

DetectorTrainResult train_detector_on(const DetectorParams& params, std::span<const FeatureMap> maps,
                                      std::span<const BinaryGrid> targets, const DetectorTrainConfig& cfg) {
  params.validate();
  if (maps.empty() || maps.size() != targets.size()) throw std::invalid_argument("train_detector: need matching views");
  DetectorTrainResult result{params, {}};
  DetectorParams& p = result.params;
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(maps.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const std::size_t nl = p.layers.size();
  std::vector<Eigen::MatrixXd> mw(nl), vw(nl);
  std::vector<Eigen::VectorXd> mb(nl), vb(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    mw[l].setZero(p.layers[l].weight.rows(), p.layers[l].weight.cols());
    vw[l] = mw[l];
    mb[l].setZero(p.layers[l].bias.size());
    vb[l] = mb[l];
  }
  DetectorGradients grads;
  for (int step = 0; step < cfg.steps; ++step) {
    const int v = order[std::size_t(step) % order.size()];
    const FeatureMap& fm = maps[std::size_t(v)];
    const BinaryGrid& gt = targets[std::size_t(v)];
    double loss;
    const int side = std::min({cfg.crop, fm.width, fm.height});
    if (cfg.crop > 0 && (side < fm.width || side < fm.height)) {
      const int x0 = int(rng() % std::uint64_t(fm.width - side + 1));
      const int y0 = int(rng() % std::uint64_t(fm.height - side + 1));
      loss = detector_loss_and_gradient(p, crop(fm, x0, y0, side), crop(gt, x0, y0, side), grads);
    } else {
      loss = detector_loss_and_gradient(p, fm, gt, grads);
    }
    result.loss_trace.push_back(loss);
    const double lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * step / cfg.steps));
    const double bc1 = 1.0 - std::pow(beta1, step + 1), bc2 = 1.0 - std::pow(beta2, step + 1);
    for (std::size_t l = 0; l < nl; ++l) {
      mw[l] = beta1 * mw[l] + (1 - beta1) * grads.weight[l];
      vw[l] = beta2 * vw[l] + (1 - beta2) * grads.weight[l].cwiseAbs2();
      p.layers[l].weight.array() -= lr * (mw[l].array() / bc1) / ((vw[l].array() / bc2).sqrt() + eps);
      mb[l] = beta1 * mb[l] + (1 - beta1) * grads.bias[l];
      vb[l] = beta2 * vb[l] + (1 - beta2) * grads.bias[l].cwiseAbs2();
      p.layers[l].bias.array() -= lr * (mb[l].array() / bc1) / ((vb[l].array() / bc2).sqrt() + eps);
    }
  }
  return result;
}

DetectorTrainResult train_detector(const DetectorParams& params, const GaussianScene& scene,
                                   const LandmarkSet& landmarks, std::span<const TrainView> views,
                                   const DetectorTrainConfig& cfg) {
  if (views.empty()) throw std::invalid_argument("train_detector: no views");
  std::vector<FeatureMap> maps;
  std::vector<BinaryGrid> targets;
  for (const auto& v : views) {
    maps.push_back(v.feat);
    targets.push_back(build_gt_heatmap(landmarks, scene, v.camera(), v.feat.width, v.feat.height));
  }
  return train_detector_on(params, maps, targets, cfg);
}

std::vector<Keypoint> extract_keypoints(const Heatmap& hm, const FeatureMap& fm, int nms_radius, int max_keypoints,
                                        double min_score) {
  if (hm.height != fm.height || hm.width != fm.width) throw DimensionMismatchError("extract_keypoints: shape mismatch");
  std::vector<int> survivors;
  for (int y = 0; y < hm.height; ++y)
    for (int x = 0; x < hm.width; ++x) {
      const double s = hm.at(y, x);
      if (s < min_score) continue;
      bool keep = true;
      for (int yy = std::max(0, y - nms_radius); keep && yy <= std::min(hm.height - 1, y + nms_radius); ++yy)
        for (int xx = std::max(0, x - nms_radius); xx <= std::min(hm.width - 1, x + nms_radius); ++xx) {
          if (yy == y && xx == x) continue;
          const double o = hm.at(yy, xx);
          if (o > s || (o == s && yy * hm.width + xx < y * hm.width + x)) {
            keep = false;
            break;
          }
        }
      if (keep) survivors.push_back(y * hm.width + x);
    }
  std::stable_sort(survivors.begin(), survivors.end(),
                   [&](int a, int b) { return hm.data[std::size_t(a)] > hm.data[std::size_t(b)]; });
  if (int(survivors.size()) > max_keypoints) survivors.resize(std::size_t(max_keypoints));
  std::vector<Keypoint> out;
  out.reserve(survivors.size());
  for (const int idx : survivors) {
    const int y = idx / hm.width, x = idx % hm.width;
    out.push_back({double(x), double(y), hm.at(y, x), fm.pixel(y, x)});
  }
  return out;
}

}  // namespace featloc
