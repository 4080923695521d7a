#include "dsc/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

constexpr double kZeroNorm = 1e-12;

double hinge(double x) { return x > 0.0 ? x : 0.0; }

double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double diff = a(k) - b(k);
    sum += diff * diff;
  }
  return sum;
}

}  // namespace

void ConsistencyParams::validate() const {
  if (!(std::isfinite(sigma_d) && sigma_d > 0.0)) throw InvalidArgument("sigma_d must be finite and > 0");
  if (!(std::isfinite(sigma_f) && sigma_f > 0.0)) throw InvalidArgument("sigma_f must be finite and > 0");
}

double length_difference(const Correspondence& ci, const Correspondence& cj) {
  return std::abs((ci.src - cj.src).norm() - (ci.dst - cj.dst).norm());
}

double spatial_consistency(const Correspondence& ci, const Correspondence& cj, double sigma_d) {
  const double d = length_difference(ci, cj);
  return hinge(1.0 - (d * d) / (sigma_d * sigma_d));
}

Matrix normalize_rows(const Matrix& feats, bool* zero_norm) {
  Matrix out(feats.rows(), feats.cols());
  for (Eigen::Index i = 0; i < feats.rows(); ++i) {
    const double norm = feats.row(i).norm();
    if (norm < kZeroNorm) {
      out.row(i).setZero();
      if (zero_norm) *zero_norm = true;
    } else {
      out.row(i) = feats.row(i) / norm;
    }
  }
  return out;
}

double feature_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& fi, const Eigen::Ref<const Eigen::RowVectorXd>& fj,
                          double sigma_f, bool* zero_norm) {
  if (fi.size() != fj.size()) throw InvalidArgument("feature_similarity: rows differ in dimension");
  Matrix pair(2, fi.size());
  pair.row(0) = fi;
  pair.row(1) = fj;
  const Matrix unit = normalize_rows(pair, zero_norm);
  return hinge(1.0 - squared_distance(unit.row(0), unit.row(1)) / (sigma_f * sigma_f));
}

Matrix spatial_consistency_matrix(std::span<const Correspondence> corrs, double sigma_d) {
  const auto n = static_cast<Eigen::Index>(corrs.size());
  Matrix beta(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    beta(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double b = spatial_consistency(corrs[i], corrs[j], sigma_d);
      beta(i, j) = b;
      beta(j, i) = b;
    }
  }
  return beta;
}

Matrix feature_similarity_matrix(const Matrix& normalized_feats, double sigma_f) {
  const Eigen::Index n = normalized_feats.rows();
  const double inv_sq = 1.0 / (sigma_f * sigma_f);
  Matrix gamma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gamma(i, i) = hinge(1.0 - squared_distance(normalized_feats.row(i), normalized_feats.row(i)) * inv_sq);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double g = hinge(1.0 - squared_distance(normalized_feats.row(i), normalized_feats.row(j)) * inv_sq);
      gamma(i, j) = g;
      gamma(j, i) = g;
    }
  }
  return gamma;
}

CompatibilityMatrix compatibility_matrix(std::span<const Correspondence> corrs, const Matrix* feats,
                                         const ConsistencyParams& params) {
  params.validate();
  if (corrs.size() < 2) throw InvalidArgument("compatibility_matrix needs at least 2 correspondences");
  if (feats && feats->rows() != static_cast<Eigen::Index>(corrs.size())) {
    throw InvalidArgument("compatibility_matrix: " + std::to_string(feats->rows()) + " feature rows for " +
                          std::to_string(corrs.size()) + " correspondences");
  }
  CompatibilityMatrix out;
  out.entries = spatial_consistency_matrix(corrs, params.sigma_d);
  if (feats) {
    const Matrix unit = normalize_rows(*feats, &out.zero_norm_feature);
    out.entries.array() *= feature_similarity_matrix(unit, params.sigma_f).array();
  }
  out.entries.diagonal().setZero();
  return out;
}

}  // namespace dsc
