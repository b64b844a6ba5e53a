#include "infill/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace infill {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= kLeafSize) return id;
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t s = begin; s < end; ++s) {
    lo = lo.cwiseMin(points_[order_[s]]);
    hi = hi.cwiseMax(points_[order_[s]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  // ties broken by index so the tree is a pure function of the input
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  // left holds [begin, mid) with coordinate <= split, right holds [mid, end) with >= split
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<std::size_t> KdTree::within(const Vec3& q, double radius) const {
  std::vector<std::size_t> out;
  if (nodes_.empty()) return out;
  const double r2 = radius * radius;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (n.axis < 0) {
      for (std::size_t s = n.begin; s < n.end; ++s) {
        if ((points_[order_[s]] - q).squaredNorm() <= r2) out.push_back(order_[s]);
      }
      continue;
    }
    const double d = q[n.axis] - n.split;
    if (d <= radius) stack.push_back(n.left);
    if (d >= -radius) stack.push_back(n.right);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t KdTree::nearest(const Vec3& q, double* distance) const {
  std::size_t best = SIZE_MAX;
  double best2 = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  // recursive descent, near side first
  auto visit = [&](auto&& self, int id) -> void {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t s = n.begin; s < n.end; ++s) {
        const std::size_t idx = order_[s];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best2 || (d2 == best2 && idx < best)) {
          best2 = d2;
          best = idx;
        }
      }
      return;
    }
    const double d = q[n.axis] - n.split;
    const int near = d <= 0.0 ? n.left : n.right;
    const int far = d <= 0.0 ? n.right : n.left;
    self(self, near);
    if (d * d <= best2) self(self, far);
  };
  visit(visit, 0);
  if (distance) *distance = std::sqrt(best2);
  return best;
}

}  // namespace infill
