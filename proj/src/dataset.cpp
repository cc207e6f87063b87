#include "featloc/dataset.hpp"

#include "featloc/io.hpp"

#include <map>

namespace featloc {

namespace fs = std::filesystem;

void write_dataset(const fs::path& dir, const SyntheticDataset& ds) {
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "query");
  write_scene(dir / "scene_gt.fgs", ds.scene);
  std::vector<NamedIntrinsics> cams;
  std::vector<NamedPose> train_poses, query_poses;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const auto& name = ds.train_names[i];
    cams.push_back({name, ds.train[i].intr});
    train_poses.push_back({name, ds.train[i].pose});
    write_image(dir / "train" / (name + ".image"), ds.train[i].image);
    write_featmap(dir / "train" / (name + ".fmp"), ds.train[i].feat);
  }
  for (const auto& q : ds.queries) {
    cams.push_back({q.name, q.intr});
    query_poses.push_back({q.name, q.pose});
    write_featmap(dir / "query" / (q.name + ".fmp"), q.feat);
  }
  write_intrinsics(dir / "intrinsics.txt", cams);
  write_poses(dir / "train_poses.txt", train_poses);
  write_poses(dir / "query_poses.txt", query_poses);
}

SyntheticDataset read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FileNotFoundError("dataset directory not found: " + dir.string());
  SyntheticDataset ds{read_scene(dir / "scene_gt.fgs"), {}, {}, {}};
  std::map<std::string, CameraIntrinsics> cams;
  for (const auto& c : read_intrinsics(dir / "intrinsics.txt")) cams[c.name] = c.intr;
  auto camera = [&](const std::string& name) {
    auto it = cams.find(name);
    if (it == cams.end()) throw FormatError("intrinsics.txt: no entry for view " + name);
    return it->second;
  };
  for (const auto& p : read_poses(dir / "train_poses.txt")) {
    TrainView v;
    v.pose = p.pose;
    v.intr = camera(p.name);
    v.image = read_image(dir / "train" / (p.name + ".image"));
    v.feat = read_featmap(dir / "train" / (p.name + ".fmp"));
    if (v.image.width != v.intr.width || v.image.height != v.intr.height)
      throw FormatError("train view " + p.name + ": image size differs from its intrinsics");
    ds.train_names.push_back(p.name);
    ds.train.push_back(std::move(v));
  }
  const fs::path qp = dir / "query_poses.txt";
  if (fs::exists(qp)) {
    for (const auto& p : read_poses(qp)) {
      QueryView q;
      q.name = p.name;
      q.pose = p.pose;
      q.intr = camera(p.name);
      q.feat = read_featmap(dir / "query" / (p.name + ".fmp"));
      ds.queries.push_back(std::move(q));
    }
  }
  return ds;
}

}  // namespace featloc
