#pragma once

#include "infill/common.hpp"

#include <cstddef>
#include <vector>

namespace infill {

/// Static 3D kd-tree over a point snapshot (median splits on the widest axis).
/// Queries are read-only and safe to run concurrently.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// Indices of points with |p - q| <= radius, ascending.
  std::vector<std::size_t> within(const Vec3& q, double radius) const;
  /// Calls visit(index, squared distance) for every point with |p - q| < radius;
  /// stops early when visit returns true, and reports whether it did.
  template <typename Visit>
  bool any_within(const Vec3& q, double radius, Visit&& visit) const;
  /// Index of the nearest point (ties broken by lower index); SIZE_MAX when empty.
  std::size_t nearest(const Vec3& q, double* distance = nullptr) const;

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis;                // -1 for leaves
    double split;
    int left, right;
  };
  static constexpr std::size_t kLeafSize = 8;

  int build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

template <typename Visit>
bool KdTree::any_within(const Vec3& q, double radius, Visit&& visit) const {
  if (nodes_.empty()) return false;
  const double r2 = radius * radius;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (n.axis < 0) {
      for (std::size_t s = n.begin; s < n.end; ++s) {
        const std::size_t idx = order_[s];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < r2 && visit(idx, d2)) return true;
      }
      continue;
    }
    const double d = q[n.axis] - n.split;
    if (d <= radius) stack[top++] = n.left;
    if (d >= -radius) stack[top++] = n.right;
  }
  return false;
}

}  // namespace infill
