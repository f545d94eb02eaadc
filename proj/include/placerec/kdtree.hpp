#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "placerec/embedding.hpp"
#include "placerec/errors.hpp"

namespace placerec {

struct QueryStats {
  std::size_t nodes_visited = 0;
};

// Exact KD-tree over embedded descriptors. Results are always identical to a
// brute-force scan; the tree only changes how much of the point set a query
// touches. Insertion is incremental with a full median rebuild whenever the
// touched depth exceeds 2*log2(size)+8, which keeps the tree balanced without
// per-insert rebalancing.
class KdIndex {
 public:
  explicit KdIndex(int dimension) : dim_(dimension) {
    if (dimension < 1) {
      throw ConfigError("KdIndex: dimension must be >= 1");
    }
  }

  int dimension() const { return dim_; }
  std::size_t size() const { return points_.size(); }

  void insert(const EmbeddedDescriptor& e) { insert(e.keyframe_id, e.phi); }

  void insert(int id, const Eigen::VectorXd& phi) {
    if (phi.size() != dim_) {
      throw DataError("KdIndex: point dim " + std::to_string(phi.size()) +
                      " does not match index dim " + std::to_string(dim_));
    }
    if (!ids_.insert(id).second) {
      throw DataError("KdIndex: duplicate keyframe id " + std::to_string(id));
    }
    const int point = static_cast<int>(points_.size());
    points_.push_back({id, phi});

    if (root_ < 0) {
      root_ = new_node(point, 0);
      return;
    }
    int depth = 1;
    int cur = root_;
    while (true) {
      ++depth;
      const Node& node = nodes_[static_cast<std::size_t>(cur)];
      const double split = points_[static_cast<std::size_t>(node.point)]
                               .phi[node.axis];
      int& child = phi[node.axis] < split
                       ? nodes_[static_cast<std::size_t>(cur)].left
                       : nodes_[static_cast<std::size_t>(cur)].right;
      if (child < 0) {
        child = new_node(point, (node.axis + 1) % dim_);
        break;
      }
      cur = child;
    }
    if (depth > depth_limit()) {
      rebuild();
    }
  }

  // All stored points with ||phi - q|| <= eps, ascending distance, ties by
  // ascending keyframe id.
  std::vector<std::pair<int, double>> query_radius(
      const Eigen::VectorXd& q, double eps, QueryStats* stats = nullptr) const {
    check_query(q);
    if (eps < 0.0) {
      throw ConfigError("query_radius: eps must be >= 0");
    }
    std::vector<std::pair<int, double>> hits;
    QueryStats local;
    radius_walk(root_, q, eps, hits, local);
    if (stats) *stats = local;
    std::sort(hits.begin(), hits.end(), by_distance_then_id);
    return hits;
  }

  // min(k, size) closest points, ascending distance, ties by ascending id.
  std::vector<std::pair<int, double>> query_knn(
      const Eigen::VectorXd& q, int k, QueryStats* stats = nullptr) const {
    check_query(q);
    if (k < 1) {
      throw ConfigError("query_knn: k must be >= 1");
    }
    std::vector<std::pair<double, int>> heap;  // (dist, id), worst on front
    heap.reserve(static_cast<std::size_t>(k));
    QueryStats local;
    knn_walk(root_, q, static_cast<std::size_t>(k), heap, local);
    if (stats) *stats = local;
    std::vector<std::pair<int, double>> out;
    out.reserve(heap.size());
    for (const auto& [d, id] : heap) out.emplace_back(id, d);
    std::sort(out.begin(), out.end(), by_distance_then_id);
    return out;
  }

 private:
  struct Entry {
    int id;
    Eigen::VectorXd phi;
  };
  struct Node {
    int point;
    int axis;
    int left = -1;
    int right = -1;
  };

  static bool by_distance_then_id(const std::pair<int, double>& a,
                                  const std::pair<int, double>& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  }

  void check_query(const Eigen::VectorXd& q) const {
    if (q.size() != dim_) {
      throw DataError("KdIndex: query dim " + std::to_string(q.size()) +
                      " does not match index dim " + std::to_string(dim_));
    }
  }

  int new_node(int point, int axis) {
    nodes_.push_back({point, axis, -1, -1});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int depth_limit() const {
    const auto width =
        std::bit_width(static_cast<std::uint64_t>(points_.size()));
    return 2 * static_cast<int>(width) + 8;
  }

  void rebuild() {
    nodes_.clear();
    std::vector<int> order(points_.size());
    std::iota(order.begin(), order.end(), 0);
    root_ = build_range(order, 0, static_cast<int>(order.size()));
  }

  // Median build; split axis is the dimension of maximum spread in the range.
  int build_range(std::vector<int>& order, int begin, int end) {
    if (begin >= end) return -1;
    int axis = 0;
    double best_spread = -1.0;
    for (int a = 0; a < dim_; ++a) {
      double lo = points_[static_cast<std::size_t>(order[begin])].phi[a];
      double hi = lo;
      for (int i = begin + 1; i < end; ++i) {
        const double v = points_[static_cast<std::size_t>(order[i])].phi[a];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        axis = a;
      }
    }
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid,
                     order.begin() + end, [&](int a, int b) {
                       const double va = points_[std::size_t(a)].phi[axis];
                       const double vb = points_[std::size_t(b)].phi[axis];
                       if (va != vb) return va < vb;
                       return points_[std::size_t(a)].id <
                              points_[std::size_t(b)].id;
                     });
    const int node = new_node(order[mid], axis);
    const int left = build_range(order, begin, mid);
    const int right = build_range(order, mid + 1, end);
    nodes_[static_cast<std::size_t>(node)].left = left;
    nodes_[static_cast<std::size_t>(node)].right = right;
    return node;
  }

  void radius_walk(int node_idx, const Eigen::VectorXd& q, double eps,
                   std::vector<std::pair<int, double>>& hits,
                   QueryStats& stats) const {
    if (node_idx < 0) return;
    ++stats.nodes_visited;
    const Node& node = nodes_[static_cast<std::size_t>(node_idx)];
    const Entry& entry = points_[static_cast<std::size_t>(node.point)];
    const double dist = (entry.phi - q).norm();
    if (dist <= eps) {
      hits.emplace_back(entry.id, dist);
    }
    const double gap = q[node.axis] - entry.phi[node.axis];
    const int near = gap < 0.0 ? node.left : node.right;
    const int far = gap < 0.0 ? node.right : node.left;
    radius_walk(near, q, eps, hits, stats);
    if (std::abs(gap) <= eps) {
      radius_walk(far, q, eps, hits, stats);
    }
  }

  static bool heap_order(const std::pair<double, int>& a,
                         const std::pair<double, int>& b) {
    return a < b;  // max-heap on (dist, id): front is the current worst
  }

  void knn_walk(int node_idx, const Eigen::VectorXd& q, std::size_t k,
                std::vector<std::pair<double, int>>& heap,
                QueryStats& stats) const {
    if (node_idx < 0) return;
    ++stats.nodes_visited;
    const Node& node = nodes_[static_cast<std::size_t>(node_idx)];
    const Entry& entry = points_[static_cast<std::size_t>(node.point)];
    const double dist = (entry.phi - q).norm();
    const std::pair<double, int> cand{dist, entry.id};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), heap_order);
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end(), heap_order);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), heap_order);
    }
    const double gap = q[node.axis] - entry.phi[node.axis];
    const int near = gap < 0.0 ? node.left : node.right;
    const int far = gap < 0.0 ? node.right : node.left;
    knn_walk(near, q, k, heap, stats);
    // The far side can still hold a winner when the heap is short, or when a
    // point at exactly the worst distance would win its id tie-break.
    if (heap.size() < k || std::abs(gap) <= heap.front().first) {
      knn_walk(far, q, k, heap, stats);
    }
  }

  int dim_;
  std::vector<Entry> points_;
  std::vector<Node> nodes_;
  std::unordered_set<int> ids_;
  int root_ = -1;
};

}  // namespace placerec
