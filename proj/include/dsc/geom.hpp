#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace dsc {

using Point3 = Eigen::Vector3d;

/// Putative match between a source keypoint and a destination keypoint.
struct Correspondence {
  Point3 src = Point3::Zero();
  Point3 dst = Point3::Zero();
  std::optional<bool> gt_label;
  std::optional<double> confidence;

  Correspondence() = default;
  Correspondence(Point3 s, Point3 d) : src(std::move(s)), dst(std::move(d)) {}
};

/// Proper rigid motion p -> rotation * p + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  /// Rotation by `angle` radians about the unit `axis` (Rodrigues).
  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                        const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

  Point3 operator()(const Point3& p) const { return rotation * p + translation; }

  /// (*this) after `first`.
  RigidTransform compose(const RigidTransform& first) const;
  RigidTransform inverse() const;

  /// Orthonormality and det(+1) within `tol`; all entries finite.
  bool is_valid(double tol = 1e-9) const;
};

Point3 apply_transform(const RigidTransform& t, const Point3& p);

/// ||R src + t - dst||
double residual(const RigidTransform& t, const Correspondence& c);

/// Closed-form minimiser of sum_i w_i ||R x_i + t - y_i||^2 over proper
/// rotations. Throws DegenerateConfiguration for fewer than three positively
/// weighted points or collinear/coincident weighted sources, SumWeightsZero
/// when all weights vanish, InvalidArgument on size mismatch or bad weights.
RigidTransform weighted_kabsch(std::span<const Correspondence> corrs, std::span<const double> weights);

/// Uniform-weight convenience overload.
RigidTransform kabsch(std::span<const Correspondence> corrs);

/// Fit over the subset selected by `indices` with matching `weights`.
RigidTransform weighted_kabsch(std::span<const Correspondence> corrs, std::span<const std::size_t> indices,
                               std::span<const double> weights);

/// arccos(clamp((tr(R_est^T R_true) - 1) / 2, -1, 1)), radians in [0, pi].
double rotation_error(const RigidTransform& estimate, const RigidTransform& truth);

/// ||t_est - t_true||
double translation_error(const RigidTransform& estimate, const RigidTransform& truth);

double rad_to_deg(double rad);
double deg_to_rad(double deg);

/// Singular value decomposition of a 3x3 matrix, A = U diag(s) V^T, with
/// s sorted descending and U, V orthonormal. One-sided Jacobi.
struct Svd3 {
  Eigen::Matrix3d u;
  Eigen::Vector3d singular_values;
  Eigen::Matrix3d v;
};

Svd3 svd3(const Eigen::Matrix3d& a);

}  // namespace dsc
