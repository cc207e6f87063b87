#include "featloc/kdtree.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>
#include <utility>

namespace featloc {
namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)), order_(points_.size()) {
  for (int i = 0; i < int(order_.size()); ++i) order_[i] = i;
  if (!points_.empty()) build(0, int(order_.size()), 0);
}

int KdTree::build(int begin, int end, int depth) {
  const int id = int(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  (void)depth;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<int> KdTree::knn(const Vec3& query, int k) const {
  if (k < 1 || k > int(points_.size())) throw std::invalid_argument("KdTree::knn: k out of range");
  using Entry = std::pair<double, int>;  // (squared distance, index); max-heap on the pair
  std::priority_queue<Entry> best;
  auto consider = [&](int idx) {
    const Entry e{(points_[idx] - query).squaredNorm(), idx};
    if (int(best.size()) < k) {
      best.push(e);
    } else if (e < best.top()) {
      best.pop();
      best.push(e);
    }
  };
  auto search = [&](auto&& self, int node_id) -> void {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) consider(order_[i]);
      return;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    self(self, near);
    // Points with coordinate equal to the split may sit on either side, so
    // only a strictly larger plane distance prunes.
    if (int(best.size()) < k || diff * diff <= best.top().first) self(self, far);
  };
  search(search, 0);
  std::vector<int> out(best.size());
  for (int i = int(best.size()) - 1; i >= 0; --i) {
    out[i] = best.top().second;
    best.pop();
  }
  return out;
}

}  // namespace featloc
