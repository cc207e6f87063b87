#pragma once

#include "featloc/synthetic.hpp"

#include <filesystem>

namespace featloc {

/// Dataset directory layout:
///   scene_gt.fgs               ground-truth scene
///   intrinsics.txt             one line per train and query view
///   train_poses.txt            world-to-camera poses of the training views
///   query_poses.txt            ground-truth query poses
///   train/<name>.image         color image (3-channel FMP1)
///   train/<name>.fmp           training feature map
///   query/<name>.fmp           query feature map
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds);
SyntheticDataset read_dataset(const std::filesystem::path& dir);

}  // namespace featloc
