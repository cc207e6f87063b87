// featloc command-line driver.

#include "featloc/bench.hpp"
#include "featloc/dataset.hpp"
#include "featloc/detector.hpp"
#include "featloc/evaluate.hpp"
#include "featloc/field_optimizer.hpp"
#include "featloc/io.hpp"
#include "featloc/kdtree.hpp"
#include "featloc/landmark_sampler.hpp"
#include "featloc/pipeline.hpp"
#include "featloc/rasterizer.hpp"
#include "featloc/synthetic.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

using namespace featloc;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kNotFound = 3, kBadFormat = 4, kBadArgument = 5, kFailure = 6 };

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw FileNotFoundError(what + " file not found: " + path);
}

std::string pose_text(const SE3Pose& p) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", p.rotation.w(), p.rotation.x(),
                p.rotation.y(), p.rotation.z(), p.translation.x(), p.translation.y(), p.translation.z());
  return buf;
}

const std::map<std::string, SceneLayout> kLayouts{{"surface", SceneLayout::surface}, {"volume", SceneLayout::volume}};
const std::map<std::string, AnchorMode> kModes{{"random", AnchorMode::random}, {"fps", AnchorMode::fps}};
const std::map<std::string, bool> kOnOff{{"on", true}, {"off", false}};

void add_synth_options(CLI::App* app, SyntheticConfig& s) {
  app->add_option("--seed", s.seed, "Dataset seed")->capture_default_str();
  app->add_option("--gaussians", s.n_gaussians, "Number of Gaussians")->capture_default_str();
  app->add_option("--dim", s.feature_dim, "Feature dimension")->capture_default_str();
  app->add_option("--extent", s.extent, "Half side of the scene box")->capture_default_str();
  app->add_option("--layout", s.layout, "surface or volume")->transform(CLI::CheckedTransformer(kLayouts));
  app->add_option("--train-views", s.n_train_views, "Training views")->capture_default_str();
  app->add_option("--query-views", s.n_query_views, "Query views")->capture_default_str();
  app->add_option("--width", s.image_width, "Image width")->capture_default_str();
  app->add_option("--height", s.image_height, "Image height")->capture_default_str();
  app->add_option("--fov", s.fov_deg, "Horizontal field of view, degrees")->capture_default_str();
  app->add_option("--stride", s.feature_stride, "Image pixels per feature texel")->capture_default_str();
  app->add_option("--noise", s.feature_noise_sigma, "Feature noise sigma")->capture_default_str();
  app->add_option("--scale-min", s.scale_min)->capture_default_str();
  app->add_option("--scale-max", s.scale_max)->capture_default_str();
  app->add_option("--opacity-min", s.opacity_min)->capture_default_str();
  app->add_option("--opacity-max", s.opacity_max)->capture_default_str();
  app->add_option("--radius-min", s.orbit_radius_min)->capture_default_str();
  app->add_option("--radius-max", s.orbit_radius_max)->capture_default_str();
}

void add_fit_options(CLI::App* app, TrainConfig& t) {
  app->add_option("--fit-steps", t.steps, "Field fitting steps")->capture_default_str();
  app->add_option("--lambda", t.lambda_dssim, "D-SSIM weight")->capture_default_str();
  app->add_option("--lr-feature", t.lr_feature)->capture_default_str();
  app->add_option("--lr-color", t.lr_color)->capture_default_str();
  app->add_option("--lr-final-ratio", t.lr_final_ratio)->capture_default_str();
  app->add_option("--batch", t.batch, "Views per step")->capture_default_str();
}

void add_detector_options(CLI::App* app, DetectorTrainConfig& d, std::vector<int>& hidden) {
  app->add_option("--detector-steps", d.steps)->capture_default_str();
  app->add_option("--detector-lr", d.lr)->capture_default_str();
  app->add_option("--detector-crop", d.crop, "Training crop side, 0 for whole maps")->capture_default_str();
  app->add_option("--detector-seed", d.seed)->capture_default_str();
  app->add_option("--detector-hidden", hidden, "Channel counts after the landmark template layer")
      ->delimiter(',')
      ->capture_default_str();
}

void add_localize_options(CLI::App* app, LocalizeConfig& l) {
  app->add_option("--dense-iterations", l.dense_iterations)->capture_default_str();
  app->add_option("--tau", l.matcher.tau)->capture_default_str();
  app->add_option("--sparse-min-sim", l.matcher.sparse_min_sim)->capture_default_str();
  app->add_option("--mnn-min-prob", l.matcher.mnn_min_prob)->capture_default_str();
  app->add_option("--fine-long-side", l.matcher.fine_long_side, "Dense matching resolution (coarse is 1/8)")
      ->capture_default_str();
  app->add_option("--ransac-threshold", l.ransac.reproj_threshold_px)->capture_default_str();
  app->add_option("--ransac-iters", l.ransac.max_iters)->capture_default_str();
  app->add_option("--ransac-seed", l.ransac.seed)->capture_default_str();
  app->add_option("--max-keypoints", l.max_keypoints)->capture_default_str();
  app->add_option("--nms-radius", l.nms_radius)->capture_default_str();
  app->add_option("--min-keypoint-score", l.min_keypoint_score)->capture_default_str();
}

void finalize_matcher(LocalizeConfig& l) { l.matcher.coarse_long_side = l.matcher.fine_long_side / 8; }

void print_trace(std::ostream& os, const std::string& name, const LocalizeTrace& t, const SE3Pose* gt,
                 double diameter) {
  os << "query: " << name << "\n";
  os << "status: " << to_string(t.status) << "\n";
  os << "keypoints: " << t.keypoints << "\n";
  os << "sparse_matches: " << t.sparse_matches << "\n";
  if (t.pose_sparse) {
    os << "sparse_inliers: " << t.pose_sparse->n_inliers << "\n";
    os << "sparse_mean_reproj_px: " << format_number(t.pose_sparse->mean_reproj_err_px) << "\n";
    os << "sparse_pose: " << pose_text(t.pose_sparse->pose) << "\n";
  }
  for (std::size_t i = 0; i < t.dense_stats.size(); ++i) {
    const auto& s = t.dense_stats[i];
    os << "dense_iteration_" << i << ": coarse=" << s.coarse_matches << " fine=" << s.fine_matches
       << " lifted=" << s.lifted_matches << " dropped=" << s.dropped_matches
       << " solved=" << (s.solved ? "true" : "false") << " accepted=" << (s.accepted ? "true" : "false");
    if (i < t.pose_dense_per_iter.size()) os << " inliers=" << t.pose_dense_per_iter[i].n_inliers;
    os << "\n";
  }
  if (t.has_pose()) os << "final_pose: " << pose_text(t.final_pose) << "\n";
  if (gt && t.has_pose()) {
    os << "sparse_translation_error: " << format_number(translation_error(t.pose_sparse->pose, *gt)) << "\n";
    os << "sparse_rotation_error_deg: " << format_number(rotation_error_deg(t.pose_sparse->pose, *gt)) << "\n";
    os << "translation_error: " << format_number(translation_error(t.final_pose, *gt)) << "\n";
    os << "translation_error_rel_diameter: " << format_number(translation_error(t.final_pose, *gt) / diameter)
       << "\n";
    os << "rotation_error_deg: " << format_number(rotation_error_deg(t.final_pose, *gt)) << "\n";
  }
}

double mean_score(const std::vector<ScoredGaussian>& scores, const std::vector<int>& idx) {
  double sum = 0.0;
  int n = 0;
  for (int i : idx) {
    if (scores[std::size_t(i)].score == kUnscored) continue;
    sum += scores[std::size_t(i)].score;
    ++n;
  }
  return n > 0 ? sum / n : std::nan("");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-to-dense camera relocalization over feature Gaussian scenes"};
  app.set_config("--config", "", "Key-value config file (TOML/INI); flags given on the command line win");
  app.require_subcommand(1);

  // synth
  SyntheticConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  add_synth_options(synth, synth_cfg);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // fit-field
  std::string fit_data, fit_out;
  TrainConfig fit_cfg = BenchConfig{}.fit;
  std::uint64_t fit_seed = 0;
  auto* fit = app.add_subcommand("fit-field", "Fit colors and features to the training views");
  fit->add_option("--data", fit_data, "Dataset directory")->required();
  fit->add_option("--out", fit_out, "Output scene file")->required();
  fit->add_option("--init-seed", fit_seed, "Seed of the random initial features")->capture_default_str();
  add_fit_options(fit, fit_cfg);

  // sample
  std::string sample_data, sample_scene, sample_out;
  SamplerConfig sample_cfg = BenchConfig{}.sampler;
  std::string sample_mo = "on";
  auto* sample = app.add_subcommand("sample", "Score Gaussians and select landmarks");
  sample->add_option("--data", sample_data, "Dataset directory")->required();
  sample->add_option("--scene", sample_scene, "Fitted scene file")->required();
  sample->add_option("--out", sample_out, "Landmark index file")->required();
  sample->add_option("--anchors", sample_cfg.n_anchors)->capture_default_str();
  sample->add_option("--k", sample_cfg.k_neighbors)->capture_default_str();
  sample->add_option("--mode", sample_cfg.anchor_mode, "random or fps")->transform(CLI::CheckedTransformer(kModes));
  sample->add_option("--mo", sample_mo, "Matching-oriented selection: on or off")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  sample->add_option("--seed", sample_cfg.seed)->capture_default_str();

  // train-detector
  std::string det_data, det_scene, det_landmarks, det_out;
  DetectorTrainConfig det_cfg = BenchConfig{}.detector;
  std::vector<int> det_hidden = BenchConfig{}.detector_hidden;
  auto* det = app.add_subcommand("train-detector", "Train the scene-specific keypoint detector");
  det->add_option("--data", det_data, "Dataset directory")->required();
  det->add_option("--scene", det_scene, "Fitted scene file")->required();
  det->add_option("--landmarks", det_landmarks, "Landmark index file")->required();
  det->add_option("--out", det_out, "Detector checkpoint")->required();
  add_detector_options(det, det_cfg, det_hidden);

  // localize
  std::string loc_data, loc_scene, loc_landmarks, loc_detector, loc_query;
  LocalizeConfig loc_cfg = BenchConfig{}.localize;
  auto* loc = app.add_subcommand("localize", "Localize one query and print its trace");
  loc->add_option("--data", loc_data, "Dataset directory")->required();
  loc->add_option("--scene", loc_scene, "Fitted scene file")->required();
  loc->add_option("--landmarks", loc_landmarks, "Landmark index file")->required();
  loc->add_option("--detector", loc_detector, "Detector checkpoint")->required();
  loc->add_option("--query", loc_query, "Query view name")->required();
  add_localize_options(loc, loc_cfg);

  // bench
  BenchConfig bench_cfg;
  std::string bench_out = "bench_out";
  std::string bench_fit = "on", bench_mo = "on";
  auto* bench = app.add_subcommand("bench", "Run the full synthetic benchmark");
  add_synth_options(bench, bench_cfg.synth);
  add_fit_options(bench, bench_cfg.fit);
  add_detector_options(bench, bench_cfg.detector, bench_cfg.detector_hidden);
  add_localize_options(bench, bench_cfg.localize);
  bench->add_option("--scenes", bench_cfg.n_scenes)->capture_default_str();
  bench->add_option("--fit", bench_fit, "Fit the field (off uses true appearance)")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  bench->add_option("--anchors", bench_cfg.sampler.n_anchors)->capture_default_str();
  bench->add_option("--k", bench_cfg.sampler.k_neighbors)->capture_default_str();
  bench->add_option("--mode", bench_cfg.sampler.anchor_mode, "random or fps")
      ->transform(CLI::CheckedTransformer(kModes));
  bench->add_option("--mo", bench_mo, "Matching-oriented selection: on or off")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  bench->add_option("--sampler-seed", bench_cfg.sampler.seed)->capture_default_str();
  bench->add_option("--sweep", bench_cfg.sweep_counts, "Landmark counts for the recall sweep")->delimiter(',');
  bench->add_option("--sweep-k", bench_cfg.sweep_k, "Neighborhood size used by the sweep")->capture_default_str();
  bench->add_option("--sweep-detector-steps", bench_cfg.sweep_detector.steps)->capture_default_str();
  bench->add_option("--sweep-detector-crop", bench_cfg.sweep_detector.crop)->capture_default_str();
  bench->add_option("--out-dir", bench_out, "Directory for report.csv, report.json, sweep.csv, timings.json")
      ->capture_default_str();

  // render
  std::string render_scene, render_intr_file, render_pose_file, render_view, render_out;
  int render_width = 0;
  auto* rend = app.add_subcommand("render", "Render color, feature, depth and opacity for debugging");
  rend->add_option("--scene", render_scene, "Scene file (.fgs or .ply)")->required();
  rend->add_option("--intrinsics", render_intr_file, "Intrinsics file")->required();
  rend->add_option("--poses", render_pose_file, "Pose file")->required();
  rend->add_option("--view", render_view, "View name in both files")->required();
  rend->add_option("--out", render_out, "Output prefix")->required();
  rend->add_option("--width", render_width, "Render width (keeps aspect); default is the camera's");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "featloc: error [usage]: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (*synth) {
      const SyntheticDataset ds = generate_synthetic(synth_cfg);
      write_dataset(synth_out, ds);
      write_ply(fs::path(synth_out) / "scene_gt.ply", ds.scene);
      std::cout << "gaussians: " << ds.scene.size() << "\ntrain_views: " << ds.train.size()
                << "\nquery_views: " << ds.queries.size() << "\nscene_diameter: "
                << format_number(ds.scene.bounds().diameter()) << "\n";
    } else if (*fit) {
      const SyntheticDataset ds = read_dataset(fit_data);
      const FitResult r = fit_field(reset_appearance(ds.scene, fit_seed), ds.train, fit_cfg);
      write_scene(fit_out, r.scene);
      std::cout << "steps: " << r.loss_trace.size() << "\n";
      if (!r.loss_trace.empty())
        std::cout << "first_loss: " << format_number(r.loss_trace.front())
                  << "\nfinal_loss: " << format_number(r.loss_trace.back()) << "\n";
    } else if (*sample) {
      require_file(sample_scene, "scene");
      const SyntheticDataset ds = read_dataset(sample_data);
      const GaussianScene scene = read_scene(sample_scene);
      std::vector<CameraView> cams;
      for (const auto& v : ds.train) cams.push_back(v.camera());
      const auto vis = compute_visibility(scene, cams);
      const auto scores = score_gaussians(scene, ds.train, vis);
      const auto anchors = sample_anchors(scene, sample_cfg);
      const KdTree index(scene.centers());
      const LandmarkSet mo = select_landmarks(scene, scores, anchors, sample_cfg, index);
      const std::vector<int>& chosen = kOnOff.at(sample_mo) ? mo.indices : anchors;
      write_landmarks(sample_out, chosen);
      std::cout << "anchors: " << anchors.size() << "\nlandmarks_mo_on: " << mo.size()
                << "\nlandmarks_mo_off: " << anchors.size()
                << "\nmean_score_mo_on: " << format_number(mean_score(scores, mo.indices))
                << "\nmean_score_mo_off: " << format_number(mean_score(scores, anchors))
                << "\nwritten: " << chosen.size() << " (mo=" << sample_mo << ")\n";
    } else if (*det) {
      require_file(det_scene, "scene");
      require_file(det_landmarks, "landmarks");
      const SyntheticDataset ds = read_dataset(det_data);
      const GaussianScene scene = read_scene(det_scene);
      const LandmarkSet lm = LandmarkSet::from_indices(scene, read_landmarks(det_landmarks));
      for (int i : lm.indices)
        if (i >= int(scene.size())) throw FormatError("landmark index " + std::to_string(i) + " exceeds scene size");
      if (lm.empty()) throw std::invalid_argument("landmark file is empty");
      const auto init = create_template_detector(lm, det_hidden, det_cfg.seed);
      const auto r = train_detector(init, scene, lm, ds.train, det_cfg);
      write_detector(det_out, r.params);
      std::cout << "parameters: " << r.params.parameter_count() << "\nsteps: " << r.loss_trace.size() << "\n";
      if (!r.loss_trace.empty()) std::cout << "final_loss: " << format_number(r.loss_trace.back()) << "\n";
    } else if (*loc) {
      require_file(loc_scene, "scene");
      require_file(loc_landmarks, "landmarks");
      require_file(loc_detector, "detector");
      finalize_matcher(loc_cfg);
      const GaussianScene scene = read_scene(loc_scene);
      const SyntheticDataset ds = read_dataset(loc_data);
      const LandmarkSet lm = LandmarkSet::from_indices(scene, read_landmarks(loc_landmarks));
      const DetectorParams params = read_detector(loc_detector);
      const QueryView* q = nullptr;
      for (const auto& v : ds.queries)
        if (v.name == loc_query) q = &v;
      if (!q) throw FileNotFoundError("query " + loc_query + " not found in " + loc_data);
      const LocalizeTrace t = localize(q->feat, q->intr, scene, lm, params, loc_cfg);
      print_trace(std::cout, q->name, t, &q->pose, ds.scene.bounds().diameter());
    } else if (*bench) {
      finalize_matcher(bench_cfg.localize);
      bench_cfg.fit_field = kOnOff.at(bench_fit);
      bench_cfg.selection = kOnOff.at(bench_mo) ? Selection::matching_oriented : Selection::random;
      const BenchResult r = run_bench(bench_cfg);
      const fs::path out(bench_out);
      write_text(out / "report.csv", report_csv(r.report));
      write_text(out / "report.json", bench_json(r).dump(2) + "\n");
      if (!r.sweep.empty()) write_text(out / "sweep.csv", sweep_csv(r.sweep));
      write_text(out / "timings.json", timings_json(r.timings));
      std::cout << "queries: " << r.report.queries.size() << "\nok_fraction: " << format_number(r.report.ok_fraction)
                << "\nmedian_translation_error: " << format_number(r.report.median_translation_error)
                << "\nmedian_rotation_error_deg: " << format_number(r.report.median_rotation_error_deg)
                << "\nmedian_sparse_translation_error: " << format_number(r.report.median_sparse_translation_error)
                << "\nmedian_sparse_rotation_error_deg: "
                << format_number(r.report.median_sparse_rotation_error_deg) << "\n";
      for (const auto& rc : r.report.recalls)
        std::cout << "recall(" << format_number(rc.threshold.translation) << (rc.threshold.relative ? "*diam" : "")
                  << "," << format_number(rc.threshold.rotation_deg) << "deg): " << format_number(rc.recall)
                  << " sparse " << format_number(rc.sparse_recall) << "\n";
    } else if (*rend) {
      require_file(render_scene, "scene");
      const GaussianScene scene =
          fs::path(render_scene).extension() == ".ply" ? read_ply(render_scene) : read_scene(render_scene);
      const SE3Pose* pose = nullptr;
      const auto poses = read_poses(render_pose_file);
      for (const auto& p : poses)
        if (p.name == render_view) pose = &p.pose;
      const auto cams = read_intrinsics(render_intr_file);
      const CameraIntrinsics* intr = nullptr;
      for (const auto& c : cams)
        if (c.name == render_view) intr = &c.intr;
      if (!pose || !intr) throw FileNotFoundError("view " + render_view + " missing from pose or intrinsics file");
      CameraIntrinsics k = *intr;
      if (render_width > 0)
        k = k.scaled_to(render_width, std::max(2, int(std::lround(double(k.height) * render_width / k.width))));
      const RenderOutput r = render(scene, *pose, k);
      write_ppm(render_out + ".ppm", r.color);
      write_featmap(render_out + "_feature.fmp", r.feature);
      FeatureMap depth(1, r.depth.height, r.depth.width);
      depth.data = r.depth.data;
      write_featmap(render_out + "_depth.fmp", depth);
      FeatureMap acc(1, r.acc_alpha.height, r.acc_alpha.width);
      acc.data = r.acc_alpha.data;
      write_featmap(render_out + "_alpha.fmp", acc);
      std::cout << "rendered: " << k.width << "x" << k.height << "\n";
    }
  } catch (const FileNotFoundError& e) {
    std::cerr << "featloc: error [not-found]: " << e.what() << "\n";
    return kNotFound;
  } catch (const FormatError& e) {
    std::cerr << "featloc: error [format]: " << e.what() << "\n";
    return kBadFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "featloc: error [invalid-argument]: " << e.what() << "\n";
    return kBadArgument;
  } catch (const std::exception& e) {
    std::cerr << "featloc: error [failure]: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
