#pragma once

#include "featloc/pipeline.hpp"
#include "featloc/scene.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace featloc {

/// Distance between camera centers -R^T t.
double translation_error(const SE3Pose& est, const SE3Pose& gt);

/// Angle of R_gt^T R_est in degrees.
double rotation_error_deg(const SE3Pose& est, const SE3Pose& gt);

/// Recall threshold in degrees and in scene units, or as a fraction of each
/// query's scene diameter when `relative` is set.
struct Threshold {
  double translation = 0.0;
  double rotation_deg = 0.0;
  bool relative = false;
};

struct QueryRecord {
  std::string scene;
  std::string query;
  double scene_diameter = 0.0;
  LocalizeStatus status = LocalizeStatus::sparse_failed;
  int keypoints = 0;
  int sparse_matches = 0;
  int sparse_inliers = 0;
  int dense_iterations = 0;  // iterations run
  int coarse_matches = 0;    // of the last iteration run
  int fine_matches = 0;
  int lifted_matches = 0;
  int dense_inliers = 0;
  // Infinite when the stage produced no pose.
  double sparse_translation_error = 0.0;
  double sparse_rotation_error_deg = 0.0;
  double translation_error = 0.0;
  double rotation_error_deg = 0.0;
};

struct RecallEntry {
  Threshold threshold;
  double recall = 0.0;         // final pose
  double sparse_recall = 0.0;  // sparse pose
};

struct BenchmarkReport {
  std::vector<QueryRecord> queries;
  /// Multiplier from scene units to centimeters; 0 when unknown.
  double units_to_cm = 0.0;
  double median_translation_error = 0.0;
  double median_rotation_error_deg = 0.0;
  double median_sparse_translation_error = 0.0;
  double median_sparse_rotation_error_deg = 0.0;
  double ok_fraction = 0.0;
  std::vector<RecallEntry> recalls;
};

/// Median (mean of the two middle values for even counts); infinities sort
/// last. NaN for an empty input.
double median(std::vector<double> v);

/// Fraction of records whose final (or sparse) pose is within the threshold.
double recall(std::span<const QueryRecord> records, const Threshold& th, bool sparse = false);

QueryRecord make_record(const std::string& scene, const std::string& query, const LocalizeTrace& trace,
                        const SE3Pose& gt, double scene_diameter = 0.0);

/// Summary statistics over the records; failed stages count as infinite error.
BenchmarkReport summarize(std::vector<QueryRecord> records, std::span<const Threshold> thresholds,
                          double units_to_cm = 0.0);

BenchmarkReport evaluate(std::span<const LocalizeTrace> estimates, std::span<const SE3Pose> gt,
                         std::span<const Threshold> thresholds, const std::string& scene = "scene",
                         double scene_diameter = 0.0, double units_to_cm = 0.0);

/// One row per query; the column set is fixed (see README).
std::string report_csv(const BenchmarkReport& report);
nlohmann::ordered_json report_json(const BenchmarkReport& report);

/// Fixed-precision decimal text used in every report ("inf" for infinity).
std::string format_number(double v);

}  // namespace featloc
