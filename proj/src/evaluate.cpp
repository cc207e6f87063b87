#include "featloc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace featloc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double translation_error(const SE3Pose& est, const SE3Pose& gt) {
  return (est.camera_center() - gt.camera_center()).norm();
}

double rotation_error_deg(const SE3Pose& est, const SE3Pose& gt) {
  // Same angle as arccos((trace(R_gt^T R_est) - 1) / 2), evaluated through
  // the relative quaternion to stay accurate near zero.
  const Quat d = gt.rotation.conjugate() * est.rotation;
  const double angle = 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
  return angle * 180.0 / std::numbers::pi;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  return 0.5 * (a + b);
}

double recall(std::span<const QueryRecord> records, const Threshold& th, bool sparse) {
  if (records.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& q : records) {
    const double limit = th.relative ? th.translation * q.scene_diameter : th.translation;
    const double t = sparse ? q.sparse_translation_error : q.translation_error;
    const double r = sparse ? q.sparse_rotation_error_deg : q.rotation_error_deg;
    hit += t < limit && r < th.rotation_deg;
  }
  return double(hit) / double(records.size());
}

QueryRecord make_record(const std::string& scene, const std::string& query, const LocalizeTrace& trace,
                        const SE3Pose& gt, double scene_diameter) {
  QueryRecord r;
  r.scene = scene;
  r.query = query;
  r.scene_diameter = scene_diameter;
  r.status = trace.status;
  r.keypoints = trace.keypoints;
  r.sparse_matches = trace.sparse_matches;
  r.dense_iterations = int(trace.dense_stats.size());
  if (!trace.dense_stats.empty()) {
    const auto& s = trace.dense_stats.back();
    r.coarse_matches = s.coarse_matches;
    r.fine_matches = s.fine_matches;
    r.lifted_matches = s.lifted_matches;
  }
  if (!trace.pose_dense_per_iter.empty()) r.dense_inliers = trace.pose_dense_per_iter.back().n_inliers;
  if (trace.has_pose()) {
    r.sparse_inliers = trace.pose_sparse->n_inliers;
    r.sparse_translation_error = translation_error(trace.pose_sparse->pose, gt);
    r.sparse_rotation_error_deg = rotation_error_deg(trace.pose_sparse->pose, gt);
    r.translation_error = translation_error(trace.final_pose, gt);
    r.rotation_error_deg = rotation_error_deg(trace.final_pose, gt);
  } else {
    r.sparse_translation_error = r.sparse_rotation_error_deg = kInf;
    r.translation_error = r.rotation_error_deg = kInf;
  }
  return r;
}

BenchmarkReport summarize(std::vector<QueryRecord> records, std::span<const Threshold> thresholds,
                          double units_to_cm) {
  BenchmarkReport rep;
  rep.units_to_cm = units_to_cm;
  std::vector<double> t, r, st, sr;
  std::size_t ok = 0;
  for (const auto& q : records) {
    t.push_back(q.translation_error);
    r.push_back(q.rotation_error_deg);
    st.push_back(q.sparse_translation_error);
    sr.push_back(q.sparse_rotation_error_deg);
    ok += q.status == LocalizeStatus::ok;
  }
  rep.queries = std::move(records);
  rep.median_translation_error = median(t);
  rep.median_rotation_error_deg = median(r);
  rep.median_sparse_translation_error = median(st);
  rep.median_sparse_rotation_error_deg = median(sr);
  rep.ok_fraction = rep.queries.empty() ? 0.0 : double(ok) / double(rep.queries.size());
  for (const auto& th : thresholds) rep.recalls.push_back({th, recall(rep.queries, th), recall(rep.queries, th, true)});
  return rep;
}

BenchmarkReport evaluate(std::span<const LocalizeTrace> estimates, std::span<const SE3Pose> gt,
                         std::span<const Threshold> thresholds, const std::string& scene, double scene_diameter,
                         double units_to_cm) {
  if (estimates.size() != gt.size()) throw std::invalid_argument("evaluate: estimates and ground truth differ in length");
  std::vector<QueryRecord> records;
  for (std::size_t i = 0; i < gt.size(); ++i)
    records.push_back(make_record(scene, "query_" + std::to_string(i), estimates[i], gt[i], scene_diameter));
  return summarize(std::move(records), thresholds, units_to_cm);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string report_csv(const BenchmarkReport& report) {
  std::string s =
      "scene,query,scene_diameter,status,keypoints,sparse_matches,sparse_inliers,dense_iterations,coarse_matches,fine_matches,"
      "lifted_matches,dense_inliers,sparse_translation_error,sparse_rotation_error_deg,translation_error,"
      "rotation_error_deg\n";
  for (const auto& q : report.queries) {
    s += q.scene + "," + q.query + "," + format_number(q.scene_diameter) + "," + to_string(q.status) + "," + std::to_string(q.keypoints) + "," +
         std::to_string(q.sparse_matches) + "," + std::to_string(q.sparse_inliers) + "," +
         std::to_string(q.dense_iterations) + "," + std::to_string(q.coarse_matches) + "," +
         std::to_string(q.fine_matches) + "," + std::to_string(q.lifted_matches) + "," +
         std::to_string(q.dense_inliers) + "," + format_number(q.sparse_translation_error) + "," +
         format_number(q.sparse_rotation_error_deg) + "," + format_number(q.translation_error) + "," +
         format_number(q.rotation_error_deg) + "\n";
  }
  return s;
}

namespace {
nlohmann::ordered_json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}
}  // namespace

nlohmann::ordered_json report_json(const BenchmarkReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json summary;
  summary["queries"] = report.queries.size();
  summary["ok_fraction"] = number(report.ok_fraction);
  summary["median_translation_error"] = number(report.median_translation_error);
  summary["median_rotation_error_deg"] = number(report.median_rotation_error_deg);
  summary["median_sparse_translation_error"] = number(report.median_sparse_translation_error);
  summary["median_sparse_rotation_error_deg"] = number(report.median_sparse_rotation_error_deg);
  if (report.units_to_cm > 0.0) summary["median_translation_error_cm"] = number(report.median_translation_error * report.units_to_cm);
  nlohmann::ordered_json recalls = nlohmann::ordered_json::array();
  for (const auto& r : report.recalls)
    recalls.push_back({{"translation", number(r.threshold.translation)},
                       {"rotation_deg", number(r.threshold.rotation_deg)},
                       {"relative", r.threshold.relative},
                       {"recall", r.recall},
                       {"sparse_recall", r.sparse_recall}});
  summary["recalls"] = recalls;
  j["summary"] = summary;
  nlohmann::ordered_json qs = nlohmann::ordered_json::array();
  for (const auto& q : report.queries) {
    qs.push_back({{"scene", q.scene},
                  {"query", q.query},
                  {"scene_diameter", number(q.scene_diameter)},
                  {"status", to_string(q.status)},
                  {"keypoints", q.keypoints},
                  {"sparse_matches", q.sparse_matches},
                  {"sparse_inliers", q.sparse_inliers},
                  {"dense_iterations", q.dense_iterations},
                  {"coarse_matches", q.coarse_matches},
                  {"fine_matches", q.fine_matches},
                  {"lifted_matches", q.lifted_matches},
                  {"dense_inliers", q.dense_inliers},
                  {"sparse_translation_error", number(q.sparse_translation_error)},
                  {"sparse_rotation_error_deg", number(q.sparse_rotation_error_deg)},
                  {"translation_error", number(q.translation_error)},
                  {"rotation_error_deg", number(q.rotation_error_deg)}});
  }
  j["queries"] = qs;
  return j;
}

}  // namespace featloc
