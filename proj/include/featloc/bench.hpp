#pragma once

#include "featloc/detector.hpp"
#include "featloc/evaluate.hpp"
#include "featloc/field_optimizer.hpp"
#include "featloc/landmark_sampler.hpp"
#include "featloc/pipeline.hpp"
#include "featloc/synthetic.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace featloc {

enum class Selection { matching_oriented, random };

std::string to_string(Selection s);

struct BenchConfig {
  SyntheticConfig synth;
  int n_scenes = 10;
  /// Scene i is generated with seed + i.
  std::uint64_t seed = 0;
  /// When false the ground-truth appearance is used instead of a fitted one.
  bool fit_field = true;
  TrainConfig fit{0.2, 1.0, 1.0, 0.02, 0.02, 0.1, 300, 1};
  /// About 2% of the Gaussians as anchors.
  SamplerConfig sampler{64, 32, AnchorMode::random, 0};
  Selection selection = Selection::matching_oriented;
  /// Layers after the template layer (see create_template_detector).
  std::vector<int> detector_hidden{16, 16};
  DetectorTrainConfig detector{0.01, 3000, 64, 0};
  /// A colder temperature than the matcher default suits 16-dimensional features.
  LocalizeConfig localize = [] {
    LocalizeConfig c;
    c.dense_iterations = 4;
    c.matcher.tau = 0.02;
    return c;
  }();
  /// Translation as a fraction of the scene diameter.
  std::vector<Threshold> thresholds{{0.01, 2.0, true}, {0.005, 1.0, true}, {0.05, 5.0, true}};
  /// Landmark counts of the recall sweep; empty disables it.
  std::vector<int> sweep_counts;
  /// Neighborhood size of the sweep's selection; small enough that the
  /// largest count is reachable.
  int sweep_k = 8;
  DetectorTrainConfig sweep_detector{0.01, 2000, 32, 0};

  void validate() const;
};

/// Everything derived from one synthetic scene before localization.
struct SceneAssets {
  std::string name;
  SyntheticDataset data;
  GaussianScene model;  // fitted appearance on the true geometry
  std::vector<std::vector<int>> visibility;
  std::vector<ScoredGaussian> scores;
  double diameter = 0.0;
};

/// Wall-clock seconds per stage, summed over scenes.
using Timings = std::map<std::string, double>;

SceneAssets prepare_scene(const BenchConfig& cfg, int scene_index, Timings* timings = nullptr);

LandmarkSet sample_landmarks(const SceneAssets& assets, const SamplerConfig& sampler, Selection selection);

DetectorParams train_scene_detector(const SceneAssets& assets, const LandmarkSet& landmarks,
                                    const std::vector<int>& hidden, const DetectorTrainConfig& cfg);

/// Localizes every query of the scene, in query order.
std::vector<LocalizeTrace> localize_queries(const SceneAssets& assets, const LandmarkSet& landmarks,
                                            const DetectorParams& detector, const LocalizeConfig& cfg);

std::vector<QueryRecord> records_for(const SceneAssets& assets, const std::vector<LocalizeTrace>& traces);

struct SweepRow {
  std::string scene;
  Selection selection = Selection::matching_oriented;
  int target = 0;
  int landmarks = 0;
  double sparse_recall = 0.0;  // at the first threshold
  double median_sparse_translation_error = 0.0;
  double median_sparse_rotation_error_deg = 0.0;
};

/// Sparse-stage recall for both selections at every sweep count. The random
/// baseline gets as many landmarks as the matching-oriented set reached.
std::vector<SweepRow> landmark_sweep(const SceneAssets& assets, const BenchConfig& cfg, Timings* timings = nullptr);

struct BenchResult {
  BenchmarkReport report;
  std::vector<BenchmarkReport> per_scene;
  std::vector<SweepRow> sweep;
  Timings timings;
};

BenchResult run_bench(const BenchConfig& cfg);

/// Report with per-scene summaries appended.
nlohmann::ordered_json bench_json(const BenchResult& result);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string timings_json(const Timings& timings);

}  // namespace featloc
