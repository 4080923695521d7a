#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsc/geom.hpp"
#include "dsc/rng.hpp"

namespace dsc {

/// Synthetic correspondence-set parameters.
struct SceneSpec {
  std::size_t n_corrs = 1000;
  double outlier_ratio = 0.9;
  double noise_sigma = 0.005;
  double extent = 3.0;  ///< side of the source bounding cube
  std::uint64_t seed = 0;

  void validate() const;
  /// round((1 - outlier_ratio) * n_corrs)
  std::size_t inlier_count() const;
};

/// Correspondences with gt_label set, plus the true source->destination pose.
struct Scene {
  std::vector<Correspondence> corrs;
  RigidTransform truth;
};

/// Rotation about a uniform random axis by an angle uniform in [0, 2pi),
/// translation uniform in [-0.5, 0.5] per axis.
RigidTransform random_pose(Rng& rng);

/// Inliers come first: src uniform in the cube centred at the origin,
/// dst = truth(src) + N(0, noise^2) per axis. Outliers draw src in the cube and
/// dst in the transformed cube independently, rejecting any pair whose
/// residual under truth is below 3 * noise + 0.05 * extent.
Scene generate_scene(const SceneSpec& spec);

/// w*_i = [ ||R* x_i + t* - y_i|| < tau ]
std::vector<bool> ground_truth_labels(std::span<const Correspondence> corrs, const RigidTransform& truth, double tau);

/// Training-time perturbation: the source side receives a random pose and
/// N(0, noise^2) jitter; `truth` is updated so destination points are unchanged.
Scene augment_scene(const Scene& scene, Rng& rng, double noise_sigma = 0.005);

/// Diagonal of the axis-aligned bounding box of `points`.
double bounding_diagonal(std::span<const Point3> points);

}  // namespace dsc
