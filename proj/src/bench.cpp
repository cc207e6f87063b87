#include "featloc/bench.hpp"

#include "featloc/kdtree.hpp"
#include "featloc/parallel.hpp"
#include "featloc/rasterizer.hpp"

#include <chrono>
#include <stdexcept>

namespace featloc {
namespace {

class Stopwatch {
 public:
  Stopwatch(Timings* t, std::string key) : t_(t), key_(std::move(key)), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    if (t_) (*t_)[key_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  Timings* t_;
  std::string key_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

std::string to_string(Selection s) { return s == Selection::random ? "random" : "matching_oriented"; }

void BenchConfig::validate() const {
  synth.validate();
  if (n_scenes < 1) throw std::invalid_argument("BenchConfig: n_scenes must be >= 1");
  fit.validate();
  sampler.validate();
  localize.validate();
  for (int c : sweep_counts)
    if (c < 1) throw std::invalid_argument("BenchConfig: sweep counts must be positive");
  if (sweep_k < 1) throw std::invalid_argument("BenchConfig: sweep_k must be >= 1");
  if (thresholds.empty()) throw std::invalid_argument("BenchConfig: at least one recall threshold required");
}

SceneAssets prepare_scene(const BenchConfig& cfg, int scene_index, Timings* timings) {
  SyntheticConfig sc = cfg.synth;
  sc.seed = cfg.seed + std::uint64_t(scene_index);
  SyntheticDataset data = [&] {
    Stopwatch w(timings, "synthesize");
    return generate_synthetic(sc);
  }();
  GaussianScene model = [&] {
    if (!cfg.fit_field) return data.scene;
    Stopwatch w(timings, "fit_field");
    return fit_field(reset_appearance(data.scene, sc.seed), data.train, cfg.fit).scene;
  }();
  SceneAssets a{"scene_" + std::to_string(scene_index), std::move(data), std::move(model), {}, {}, 0.0};
  a.diameter = a.data.scene.bounds().diameter();
  Stopwatch w(timings, "score");
  std::vector<CameraView> cams;
  for (const auto& v : a.data.train) cams.push_back(v.camera());
  a.visibility = compute_visibility(a.model, cams);
  a.scores = score_gaussians(a.model, a.data.train, a.visibility);
  return a;
}

LandmarkSet sample_landmarks(const SceneAssets& assets, const SamplerConfig& sampler, Selection selection) {
  if (selection == Selection::random) {
    return random_landmarks(assets.model, sampler.n_anchors, sampler.seed);
  }
  const KdTree index(assets.model.centers());
  const auto anchors = sample_anchors(assets.model, sampler);
  return select_landmarks(assets.model, assets.scores, anchors, sampler, index);
}

DetectorParams train_scene_detector(const SceneAssets& assets, const LandmarkSet& landmarks,
                                    const std::vector<int>& hidden, const DetectorTrainConfig& cfg) {
  const DetectorParams init = create_template_detector(landmarks, hidden, cfg.seed);
  return train_detector(init, assets.model, landmarks, assets.data.train, cfg).params;
}

std::vector<LocalizeTrace> localize_queries(const SceneAssets& assets, const LandmarkSet& landmarks,
                                            const DetectorParams& detector, const LocalizeConfig& cfg) {
  const auto& qs = assets.data.queries;
  std::vector<LocalizeTrace> out(qs.size());
  parallel_for(int(qs.size()), [&](int i) {
    LocalizeConfig c = cfg;
    c.ransac.seed = cfg.ransac.seed + 1000 * std::uint64_t(i);
    out[std::size_t(i)] = localize(qs[std::size_t(i)].feat, qs[std::size_t(i)].intr, assets.model, landmarks, detector, c);
  });
  return out;
}

std::vector<QueryRecord> records_for(const SceneAssets& assets, const std::vector<LocalizeTrace>& traces) {
  std::vector<QueryRecord> out;
  for (std::size_t i = 0; i < traces.size(); ++i)
    out.push_back(make_record(assets.name, assets.data.queries[i].name, traces[i], assets.data.queries[i].pose,
                              assets.diameter));
  return out;
}

std::vector<SweepRow> landmark_sweep(const SceneAssets& assets, const BenchConfig& cfg, Timings* timings) {
  std::vector<SweepRow> rows;
  const KdTree index(assets.model.centers());
  LocalizeConfig sparse_only = cfg.localize;
  sparse_only.dense_iterations = 0;
  for (const int target : cfg.sweep_counts) {
    LandmarkSet mo;
    {
      Stopwatch w(timings, "sample");
      mo = select_landmarks_count(assets.model, assets.scores, target, cfg.sweep_k, cfg.sampler.seed, index);
    }
    const LandmarkSet rnd = random_landmarks(assets.model, int(mo.size()), cfg.sampler.seed);
    for (const Selection sel : {Selection::matching_oriented, Selection::random}) {
      const LandmarkSet& set = sel == Selection::random ? rnd : mo;
      DetectorParams det;
      {
        Stopwatch w(timings, "train_detector");
        det = train_scene_detector(assets, set, cfg.detector_hidden, cfg.sweep_detector);
      }
      std::vector<LocalizeTrace> traces;
      {
        Stopwatch w(timings, "localize");
        traces = localize_queries(assets, set, det, sparse_only);
      }
      const BenchmarkReport rep = summarize(records_for(assets, traces), cfg.thresholds);
      rows.push_back({assets.name, sel, target, int(set.size()), rep.recalls.front().sparse_recall,
                      rep.median_sparse_translation_error, rep.median_sparse_rotation_error_deg});
    }
  }
  return rows;
}

BenchResult run_bench(const BenchConfig& cfg) {
  cfg.validate();
  BenchResult res;
  std::vector<QueryRecord> all;
  for (int s = 0; s < cfg.n_scenes; ++s) {
    const SceneAssets assets = prepare_scene(cfg, s, &res.timings);
    LandmarkSet landmarks;
    {
      Stopwatch w(&res.timings, "sample");
      landmarks = sample_landmarks(assets, cfg.sampler, cfg.selection);
    }
    DetectorParams det;
    {
      Stopwatch w(&res.timings, "train_detector");
      det = train_scene_detector(assets, landmarks, cfg.detector_hidden, cfg.detector);
    }
    std::vector<LocalizeTrace> traces;
    {
      Stopwatch w(&res.timings, "localize");
      traces = localize_queries(assets, landmarks, det, cfg.localize);
    }
    auto recs = records_for(assets, traces);
    all.insert(all.end(), recs.begin(), recs.end());
    res.per_scene.push_back(summarize(std::move(recs), cfg.thresholds));
    if (!cfg.sweep_counts.empty()) {
      auto rows = landmark_sweep(assets, cfg, &res.timings);
      res.sweep.insert(res.sweep.end(), rows.begin(), rows.end());
    }
  }
  res.report = summarize(std::move(all), cfg.thresholds);
  return res;
}

nlohmann::ordered_json bench_json(const BenchResult& result) {
  nlohmann::ordered_json j = report_json(result.report);
  nlohmann::ordered_json scenes = nlohmann::ordered_json::array();
  for (const auto& r : result.per_scene) {
    nlohmann::ordered_json s = report_json(r)["summary"];
    s["scene"] = r.queries.empty() ? "" : r.queries.front().scene;
    scenes.push_back(s);
  }
  j["scenes"] = scenes;
  return j;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s =
      "scene,selection,target_landmarks,landmarks,sparse_recall,median_sparse_translation_error,"
      "median_sparse_rotation_error_deg\n";
  for (const auto& r : rows)
    s += r.scene + "," + to_string(r.selection) + "," + std::to_string(r.target) + "," + std::to_string(r.landmarks) +
         "," + format_number(r.sparse_recall) + "," + format_number(r.median_sparse_translation_error) + "," +
         format_number(r.median_sparse_rotation_error_deg) + "\n";
  return s;
}

std::string timings_json(const Timings& timings) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : timings) j[k] = v;
  return j.dump(2) + "\n";
}

}  // namespace featloc
