#pragma once

#include <span>
#include <vector>

#include "dsc/consistency.hpp"
#include "dsc/geom.hpp"

namespace dsc {

struct EigenResult {
  Eigen::VectorXd vector;  ///< unit L2 norm, nonnegative
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  ///< M e vanished; `vector` is the uniform fallback
};

struct PowerIterationOptions {
  double tol = 1e-6;  ///< infinity-norm change between successive iterates
  int max_iter = 50;
};

/// Power iteration e <- M e / ||M e|| starting from the all-ones vector.
/// Each matrix-vector entry is a left-to-right dot product.
EigenResult leading_eigenvector(const Matrix& m, const PowerIterationOptions& opts = {});

struct SpectralMatchResult {
  std::vector<bool> labels;
  RigidTransform transform;
  EigenResult eigen;
};

/// Classical spectral matching: spatial-only M over every correspondence,
/// keep the top `keep_fraction` by eigenvector entry (ties to the lower
/// index), fit with uniform weights on the kept set.
SpectralMatchResult traditional_sm(std::span<const Correspondence> corrs, double sigma_d, double keep_fraction = 0.10);

}  // namespace dsc
