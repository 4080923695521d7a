#include "dsc/knn.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

using Candidate = std::pair<double, std::size_t>;  // (distance^2, index), lexicographic

// Max-heap of the best k candidates seen so far.
class BestK {
 public:
  explicit BestK(std::size_t k) : k_(k) {}

  void offer(const Candidate& c) {
    if (heap_.size() < k_) {
      heap_.push(c);
    } else if (c < heap_.top()) {
      heap_.pop();
      heap_.push(c);
    }
  }

  bool full() const { return heap_.size() >= k_; }
  double worst() const { return heap_.top().first; }

  std::vector<std::size_t> sorted_indices() {
    std::vector<Candidate> all;
    all.reserve(heap_.size());
    while (!heap_.empty()) {
      all.push_back(heap_.top());
      heap_.pop();
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> out;
    out.reserve(all.size());
    for (const auto& c : all) out.push_back(c.second);
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<Candidate> heap_;
};

}  // namespace

double row_distance_sq(const Matrix& points, Eigen::Index a, const Eigen::Ref<const Eigen::RowVectorXd>& query) {
  double sum = 0.0;
  for (Eigen::Index d = 0; d < points.cols(); ++d) {
    const double diff = points(a, d) - query(d);
    sum += diff * diff;
  }
  return sum;
}

std::vector<std::size_t> knn_linear_scan(const Matrix& points, const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                         std::size_t k) {
  if (query.size() != points.cols()) throw InvalidArgument("knn: query dimension mismatch");
  k = std::min<std::size_t>(k, static_cast<std::size_t>(points.rows()));
  BestK best(k);
  if (k == 0) return {};
  for (Eigen::Index i = 0; i < points.rows(); ++i) best.offer({row_distance_sq(points, i, query), static_cast<std::size_t>(i)});
  return best.sorted_indices();
}

KdTree::KdTree(Matrix points, std::size_t leaf_size) : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  perm_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  if (!perm_.empty()) build(0, perm_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const Eigen::Index dims = points_.cols();
  Node node;
  node.begin = begin;
  node.end = end;
  node.lower = Eigen::VectorXd::Constant(dims, std::numeric_limits<double>::infinity());
  node.upper = Eigen::VectorXd::Constant(dims, -std::numeric_limits<double>::infinity());
  for (std::size_t p = begin; p < end; ++p) {
    const auto row = static_cast<Eigen::Index>(perm_[p]);
    for (Eigen::Index d = 0; d < dims; ++d) {
      node.lower(d) = std::min(node.lower(d), points_(row, d));
      node.upper(d) = std::max(node.upper(d), points_(row, d));
    }
  }
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  Eigen::Index split_dim = 0;
  (node.upper - node.lower).maxCoeff(&split_dim);
  if (!(node.upper(split_dim) > node.lower(split_dim))) return id;  // all points identical

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin), perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                   perm_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     const double va = points_(static_cast<Eigen::Index>(a), split_dim);
                     const double vb = points_(static_cast<Eigen::Index>(b), split_dim);
                     return va < vb || (va == vb && a < b);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

std::vector<std::size_t> KdTree::knn(const Eigen::Ref<const Eigen::RowVectorXd>& query, std::size_t k) const {
  if (query.size() != points_.cols()) throw InvalidArgument("knn: query dimension mismatch");
  k = std::min<std::size_t>(k, perm_.size());
  if (k == 0) return {};
  BestK best(k);

  // Lower bound on the squared distance from the query to any point in the
  // node's box, accumulated in column order like row_distance_sq. Each term
  // is no larger than the matching term for any contained point, and rounded
  // sums are monotone, so the bound never exceeds a computed distance.
  auto box_bound = [&](const Node& node) {
    double sum = 0.0;
    for (Eigen::Index d = 0; d < points_.cols(); ++d) {
      double gap = 0.0;
      if (query(d) < node.lower(d)) {
        gap = node.lower(d) - query(d);
      } else if (query(d) > node.upper(d)) {
        gap = query(d) - node.upper(d);
      }
      sum += gap * gap;
    }
    return sum;
  };

  auto visit = [&](auto&& self, int id) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (best.full() && box_bound(node) > best.worst()) return;
    if (node.left < 0) {
      for (std::size_t p = node.begin; p < node.end; ++p) {
        const std::size_t idx = perm_[p];
        best.offer({row_distance_sq(points_, static_cast<Eigen::Index>(idx), query), idx});
      }
      return;
    }
    const double bl = box_bound(nodes_[static_cast<std::size_t>(node.left)]);
    const double br = box_bound(nodes_[static_cast<std::size_t>(node.right)]);
    if (bl <= br) {
      self(self, node.left);
      self(self, node.right);
    } else {
      self(self, node.right);
      self(self, node.left);
    }
  };
  visit(visit, 0);
  return best.sorted_indices();
}

}  // namespace dsc
