#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dsc/consistency.hpp"
#include "dsc/embed.hpp"
#include "dsc/geom.hpp"
#include "dsc/knn.hpp"
#include "dsc/spectral.hpp"

namespace dsc {

struct PipelineConfig {
  double tau = 0.10;  ///< inlier threshold, scene units
  std::size_t k_subset = 40;
  double seed_fraction = 0.10;
  std::size_t min_seeds = 4;
  /// NMS radius; unset means 0.03 x the source bounding-box diagonal.
  std::optional<double> nms_radius;
  /// Spatial sensitivity; unset means tau.
  std::optional<double> sigma_d;
  std::size_t refine_max_iter = 20;
  bool spatial_only = false;
  PowerIterationOptions power;

  void validate() const;
  double effective_sigma_d() const { return sigma_d.value_or(tau); }
  /// max(min_seeds, ceil(seed_fraction * n))
  std::size_t seed_count(std::size_t n) const;
};

struct Hypothesis {
  std::size_t seed_index = 0;
  std::vector<std::size_t> subset_indices;
  Eigen::VectorXd eigenvector;
  RigidTransform transform;
  std::size_t consensus = 0;
  bool degenerate = false;
};

struct StageTimings {
  double embed_ms = 0.0;
  double seeding_ms = 0.0;
  double hypotheses_ms = 0.0;
  double selection_ms = 0.0;
  double refine_ms = 0.0;
  double labeling_ms = 0.0;
  double total_ms = 0.0;
};

struct RegistrationReport {
  RigidTransform transform;
  std::vector<bool> labels;
  std::size_t best_seed = 0;
  std::size_t best_consensus = 0;
  std::size_t hypotheses_evaluated = 0;
  std::size_t degenerate_hypotheses = 0;
  std::size_t seeds_selected = 0;
  std::size_t refine_iterations = 0;
  std::size_t inlier_count = 0;
  /// Post-refinement or the final refit hit a degenerate fit and kept the prior transform.
  bool refine_degenerate = false;
  bool refit_degenerate = false;
  StageTimings timing;
};

/// Greedy non-maximum suppression over confidence. Picks the most confident
/// unsuppressed correspondence (ties to the lower index), suppresses every
/// correspondence whose source point lies strictly within `nms_radius`, until
/// `count` seeds are chosen or none remain. Returned in selection order.
std::vector<std::size_t> select_seeds(std::span<const Correspondence> corrs, std::span<const double> confidences,
                                      std::size_t count, double nms_radius);

/// Neighbour search space: each row is either a normalised feature or, in
/// spatial-only mode, the raw (x, y) 6-vector.
class NeighborIndex {
 public:
  explicit NeighborIndex(Matrix rows);

  /// The k nearest rows to row `seed` (itself included), ties to lower index.
  std::vector<std::size_t> knn(std::size_t seed, std::size_t k) const;

  const Matrix& rows() const { return rows_; }

 private:
  Matrix rows_;
  std::optional<KdTree> tree_;
};

Matrix correspondence_coordinates(std::span<const Correspondence> corrs);

/// kNN of the seed's row among L2-normalised feature rows.
std::vector<std::size_t> feature_knn(const Matrix& feats, std::size_t seed_index, std::size_t k);

/// Number of correspondences with residual strictly below tau.
std::size_t consensus_count(std::span<const Correspondence> corrs, const RigidTransform& t, double tau);

/// Spectral matching on one subset, weighted fit, consensus over all of corrs.
Hypothesis seed_hypothesis(std::span<const Correspondence> corrs, std::size_t seed_index,
                           std::span<const std::size_t> subset_indices, const Matrix* feats, const ConsistencyParams& params,
                           double tau, const PowerIterationOptions& power = {});

/// Maximum consensus, ties to the lower seed index. Throws AllHypothesesDegenerate.
const Hypothesis& select_hypothesis(std::span<const Hypothesis> hypotheses);

struct LabelResult {
  std::vector<bool> labels;
  RigidTransform transform;  ///< uniform refit on the labelled inliers
  bool degenerate = false;   ///< refit impossible; `transform` is the input
};

/// w_i = [res_i < tau] under `t`, then the uniform-weight refit over them.
LabelResult final_labels(std::span<const Correspondence> corrs, const RigidTransform& t, double tau);

struct RefineResult {
  RigidTransform transform;
  std::size_t iterations = 0;
  bool degenerate = false;
};

/// Iteratively reweighted refit with phi_i = 1 / (1 + (res_i / tau)^2) on the
/// current inliers, stopping once the inlier count repeats.
RefineResult post_refine(std::span<const Correspondence> corrs, const RigidTransform& t, double tau, std::size_t max_iter);

/// Full registration. `src_cloud`, when given, sets the scene diameter for
/// the default NMS radius.
RegistrationReport register_correspondences(std::span<const Correspondence> corrs, const EmbeddingNetwork* net,
                                            const PipelineConfig& cfg,
                                            std::span<const Point3> src_cloud = {});

/// Initial confidences used for seeding: network output, or all ones in
/// spatial-only mode / without a network.
Eigen::VectorXd seeding_confidences(std::span<const Correspondence> corrs, const EmbeddingNetwork* net,
                                    const PipelineConfig& cfg);

}  // namespace dsc
