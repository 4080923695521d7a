#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

#include "dsc/geom.hpp"

namespace dsc {

/// Dense row-major matrix used for pairwise terms and feature rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConsistencyParams {
  double sigma_d = 0.10;  ///< length-difference sensitivity, scene units
  double sigma_f = 1.0;   ///< feature-difference sensitivity

  /// Throws InvalidArgument unless both are finite and > 0.
  void validate() const;
};

/// Pairwise compatibility M_ij = beta_ij * gamma_ij with a zero diagonal.
struct CompatibilityMatrix {
  Matrix entries;
  /// Some feature row had (near) zero norm and was treated as the zero vector.
  bool zero_norm_feature = false;

  Eigen::Index dim() const { return entries.rows(); }
};

/// | ||x_i - x_j|| - ||y_i - y_j|| |
double length_difference(const Correspondence& ci, const Correspondence& cj);

/// max(0, 1 - d_ij^2 / sigma_d^2)
double spatial_consistency(const Correspondence& ci, const Correspondence& cj, double sigma_d);

/// Rows are L2-normalised first; a row with norm < 1e-12 becomes the zero
/// vector and `zero_norm` (when given) is set.
double feature_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& fi, const Eigen::Ref<const Eigen::RowVectorXd>& fj,
                          double sigma_f, bool* zero_norm = nullptr);

/// Row-wise L2 normalisation; rows below 1e-12 become zero and set the flag.
Matrix normalize_rows(const Matrix& feats, bool* zero_norm = nullptr);

/// Beta for every pair, diagonal set to 1 (self-consistent).
Matrix spatial_consistency_matrix(std::span<const Correspondence> corrs, double sigma_d);

/// gamma for every ordered pair (including i == j) from already normalised rows.
Matrix feature_similarity_matrix(const Matrix& normalized_feats, double sigma_f);

/// M over `corrs`. Without features gamma is taken as 1 (spatial-only).
CompatibilityMatrix compatibility_matrix(std::span<const Correspondence> corrs, const Matrix* feats,
                                         const ConsistencyParams& params);

}  // namespace dsc
