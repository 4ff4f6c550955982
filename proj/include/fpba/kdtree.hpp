#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fpba/geometry.hpp"

namespace fpba {

/// Static 3D k-d tree with exact queries. Equal distances resolve to the
/// lowest point index.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double sq_dist = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 12);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Vec3& query) const;

  /// Up to k neighbors ordered by (distance, index).
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

  /// Indices of all points with distance <= radius, ascending index order.
  void radius_search(const Vec3& query, double radius,
                     std::vector<std::size_t>& out) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end, std::size_t leaf_size);
  void nearest_rec(std::size_t node, const Vec3& q, Neighbor& best) const;
  void knn_rec(std::size_t node, const Vec3& q, std::size_t k,
               std::vector<Neighbor>& heap) const;
  void radius_rec(std::size_t node, const Vec3& q, double r2,
                  std::vector<std::size_t>& out) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace fpba
