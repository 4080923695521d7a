#include "dsc/scene.hpp"

#include <cmath>
#include <numbers>

#include "dsc/errors.hpp"

namespace dsc {

void SceneSpec::validate() const {
  if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0)) throw InvalidArgument("outlier_ratio must lie in [0, 1)");
  if (!(noise_sigma >= 0.0 && std::isfinite(noise_sigma))) throw InvalidArgument("noise_sigma must be >= 0");
  if (!(extent > 0.0 && std::isfinite(extent))) throw InvalidArgument("extent must be > 0");
}

std::size_t SceneSpec::inlier_count() const {
  return static_cast<std::size_t>(std::llround((1.0 - outlier_ratio) * static_cast<double>(n_corrs)));
}

RigidTransform random_pose(Rng& rng) {
  const Eigen::Vector3d axis = rng.unit_vector();
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Eigen::Vector3d t;
  for (int k = 0; k < 3; ++k) t(k) = rng.uniform(-0.5, 0.5);
  return RigidTransform::from_axis_angle(axis, angle, t);
}

namespace {

Point3 point_in_cube(Rng& rng, double extent) {
  Point3 p;
  for (int k = 0; k < 3; ++k) p(k) = rng.uniform(-extent / 2.0, extent / 2.0);
  return p;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene scene;
  scene.truth = random_pose(rng);
  const std::size_t inliers = spec.inlier_count();
  const double margin = 3.0 * spec.noise_sigma + 0.05 * spec.extent;
  scene.corrs.reserve(spec.n_corrs);

  for (std::size_t i = 0; i < spec.n_corrs; ++i) {
    Correspondence c;
    c.src = point_in_cube(rng, spec.extent);
    if (i < inliers) {
      // Noise vectors are redrawn past 4.9 sigma so every inlier stays within
      // tau for any tau >= 5 sigma.
      Eigen::Vector3d noise = Eigen::Vector3d::Zero();
      if (spec.noise_sigma > 0.0) {
        do {
          for (int k = 0; k < 3; ++k) noise(k) = rng.normal(0.0, spec.noise_sigma);
        } while (noise.norm() >= 4.9 * spec.noise_sigma);
      }
      c.dst = scene.truth(c.src) + noise;
      c.gt_label = true;
    } else {
      do {
        c.dst = scene.truth(point_in_cube(rng, spec.extent));
      } while (residual(scene.truth, c) < margin);
      c.gt_label = false;
    }
    scene.corrs.push_back(std::move(c));
  }
  return scene;
}

std::vector<bool> ground_truth_labels(std::span<const Correspondence> corrs, const RigidTransform& truth, double tau) {
  std::vector<bool> labels(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) labels[i] = residual(truth, corrs[i]) < tau;
  return labels;
}

Scene augment_scene(const Scene& scene, Rng& rng, double noise_sigma) {
  const RigidTransform motion = random_pose(rng);
  Scene out;
  out.corrs.reserve(scene.corrs.size());
  for (const auto& c : scene.corrs) {
    Correspondence moved = c;
    moved.src = motion(c.src);
    for (int k = 0; k < 3; ++k) moved.src(k) += rng.normal(0.0, noise_sigma);
    out.corrs.push_back(std::move(moved));
  }
  // dst = truth(src) = truth(motion^-1(src'))
  out.truth = scene.truth.compose(motion.inverse());
  return out;
}

double bounding_diagonal(std::span<const Point3> points) {
  if (points.empty()) return 0.0;
  Eigen::Vector3d lo = points.front();
  Eigen::Vector3d hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

}  // namespace dsc
