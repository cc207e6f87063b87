#pragma once

#include "featloc/scene.hpp"

#include <vector>

namespace featloc {

/// Static 3D kd-tree with exact k-nearest-neighbor queries. Equal distances
/// are ordered by point index.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(int i) const { return points_[i]; }

  /// Indices of the k nearest points, closest first. Throws
  /// std::invalid_argument when k exceeds the indexed size.
  std::vector<int> knn(const Vec3& query, int k) const;

 private:
  struct Node {
    int begin, end;  // range in order_
    int axis = -1;   // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace featloc
