#pragma once

#include <cstddef>
#include <vector>

#include "dsc/consistency.hpp"

namespace dsc {

/// Squared Euclidean distance between two rows, summed in column order.
/// Both search paths below use this exact routine so their results agree bit
/// for bit.
double row_distance_sq(const Matrix& points, Eigen::Index a, const Eigen::Ref<const Eigen::RowVectorXd>& query);

/// The k rows nearest to `query`, ordered by (distance, index).
std::vector<std::size_t> knn_linear_scan(const Matrix& points, const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                         std::size_t k);

/// Exact k-d tree over the rows of a matrix. Pruning only discards a node
/// whose box lower bound is strictly worse than the current k-th candidate,
/// so ties resolve to the lower index exactly as the linear scan does.
class KdTree {
 public:
  explicit KdTree(Matrix points, std::size_t leaf_size = 16);

  std::vector<std::size_t> knn(const Eigen::Ref<const Eigen::RowVectorXd>& query, std::size_t k) const;

  const Matrix& points() const { return points_; }

 private:
  struct Node {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::size_t begin = 0;
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);

  Matrix points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> perm_;
  std::vector<Node> nodes_;
};

/// Linear scan up to `kLinearScanLimit` rows, k-d tree beyond.
inline constexpr std::size_t kLinearScanLimit = 512;

}  // namespace dsc
