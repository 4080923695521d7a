#include "dsc/geom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

// Relative orthogonality threshold between columns in the Jacobi sweeps.
constexpr double kJacobiTol = 1e-15;
constexpr int kMaxSweeps = 64;
// s2 / s1 below this marks a rank <= 1 covariance.
constexpr double kDegenerateRatio = 1e-12;

Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& u) {
  // Pick the axis least aligned with u.
  Eigen::Index axis = 0;
  u.cwiseAbs().minCoeff(&axis);
  Eigen::Vector3d e = Eigen::Vector3d::Unit(axis);
  Eigen::Vector3d w = e - u.dot(e) * u;
  return w.normalized();
}

}  // namespace

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                               const Eigen::Vector3d& translation) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  t.translation = translation;
  return t;
}

RigidTransform RigidTransform::compose(const RigidTransform& first) const {
  RigidTransform out;
  out.rotation = rotation * first.rotation;
  out.translation = rotation * first.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Point3 apply_transform(const RigidTransform& t, const Point3& p) { return t(p); }

double residual(const RigidTransform& t, const Correspondence& c) { return (t(c.src) - c.dst).norm(); }

Svd3 svd3(const Eigen::Matrix3d& a) {
  Eigen::Matrix3d work = a;
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  constexpr std::array<std::pair<int, int>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (auto [p, q] : kPairs) {
      const double alpha = work.col(p).squaredNorm();
      const double beta = work.col(q).squaredNorm();
      const double gamma = work.col(p).dot(work.col(q));
      if (gamma == 0.0 || std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
      rotated = true;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      for (int r = 0; r < 3; ++r) {
        const double wp = work(r, p);
        const double wq = work(r, q);
        work(r, p) = c * wp - s * wq;
        work(r, q) = s * wp + c * wq;
        const double vp = v(r, p);
        const double vq = v(r, q);
        v(r, p) = c * vp - s * vq;
        v(r, q) = s * vp + c * vq;
      }
    }
    if (!rotated) break;
  }

  std::array<int, 3> order{0, 1, 2};
  Eigen::Vector3d norms(work.col(0).norm(), work.col(1).norm(), work.col(2).norm());
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return norms(i) > norms(j); });

  Svd3 out;
  for (int k = 0; k < 3; ++k) {
    out.singular_values(k) = norms(order[k]);
    out.v.col(k) = v.col(order[k]);
  }
  const Eigen::Vector3d a0 = work.col(order[0]);
  const Eigen::Vector3d a1 = work.col(order[1]);
  const Eigen::Vector3d a2 = work.col(order[2]);
  const double s0 = out.singular_values(0);
  const double s1 = out.singular_values(1);

  Eigen::Vector3d u0 = s0 > 0.0 ? Eigen::Vector3d(a0 / s0) : Eigen::Vector3d::UnitX();
  Eigen::Vector3d u1 = Eigen::Vector3d::Zero();
  if (s1 > 0.0) {
    u1 = a1 / s1;
    u1 -= u0.dot(u1) * u0;
  }
  if (u1.norm() < 1e-8) {
    u1 = any_orthogonal(u0);
  } else {
    u1.normalize();
  }
  Eigen::Vector3d u2 = u0.cross(u1);
  if (a2.dot(u2) < 0.0) u2 = -u2;
  out.u.col(0) = u0;
  out.u.col(1) = u1;
  out.u.col(2) = u2;
  return out;
}

RigidTransform weighted_kabsch(std::span<const Correspondence> corrs, std::span<const double> weights) {
  if (corrs.size() != weights.size()) {
    throw InvalidArgument("weighted_kabsch: " + std::to_string(corrs.size()) + " correspondences but " +
                          std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  std::size_t positive = 0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("weighted_kabsch: weights must be finite and >= 0");
    total += w;
    if (w > 0.0) ++positive;
  }
  if (!(total > 0.0)) throw SumWeightsZero("weighted_kabsch: sum of weights is zero");
  if (positive < 3) {
    throw DegenerateConfiguration("weighted_kabsch: " + std::to_string(positive) +
                                  " positively weighted points, need 3");
  }

  Eigen::Vector3d src_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    src_mean += weights[i] * corrs[i].src;
    dst_mean += weights[i] * corrs[i].dst;
  }
  src_mean /= total;
  dst_mean /= total;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (weights[i] == 0.0) continue;
    h += weights[i] * (corrs[i].src - src_mean) * (corrs[i].dst - dst_mean).transpose();
  }

  const Svd3 svd = svd3(h);
  const double largest = svd.singular_values(0);
  if (!(largest > 0.0) || svd.singular_values(1) < kDegenerateRatio * largest) {
    throw DegenerateConfiguration("weighted_kabsch: weighted points are collinear or coincident");
  }

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.v * svd.u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform out;
  out.rotation = svd.v * d * svd.u.transpose();
  out.translation = dst_mean - out.rotation * src_mean;
  return out;
}

RigidTransform kabsch(std::span<const Correspondence> corrs) {
  const std::vector<double> uniform(corrs.size(), 1.0);
  return weighted_kabsch(corrs, uniform);
}

RigidTransform weighted_kabsch(std::span<const Correspondence> corrs, std::span<const std::size_t> indices,
                               std::span<const double> weights) {
  std::vector<Correspondence> subset;
  subset.reserve(indices.size());
  for (std::size_t i : indices) subset.push_back(corrs[i]);
  return weighted_kabsch(subset, weights);
}

double rotation_error(const RigidTransform& estimate, const RigidTransform& truth) {
  // Same angle as acos((tr(Q) - 1) / 2), but evaluated through atan2 of the
  // axial (sine) and trace (cosine) parts of Q, which stays accurate near 0
  // where acos can only resolve about 1.5e-8 rad.
  const Eigen::Matrix3d q = estimate.rotation.transpose() * truth.rotation;
  const double cosine = std::clamp((q.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d axial(q(2, 1) - q(1, 2), q(0, 2) - q(2, 0), q(1, 0) - q(0, 1));
  const double sine = std::min(axial.norm() / 2.0, 1.0);
  return std::atan2(sine, cosine);
}

double translation_error(const RigidTransform& estimate, const RigidTransform& truth) {
  return (estimate.translation - truth.translation).norm();
}

double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace dsc
