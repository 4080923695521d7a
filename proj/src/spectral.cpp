#include "dsc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dsc/errors.hpp"

namespace dsc {

namespace {
constexpr double kVanishingNorm = 1e-15;
}

EigenResult leading_eigenvector(const Matrix& m, const PowerIterationOptions& opts) {
  if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument("leading_eigenvector: matrix must be square, k >= 1");
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw InvalidArgument("leading_eigenvector: need tol > 0, max_iter >= 1");

  const Eigen::Index k = m.rows();
  EigenResult out;
  Eigen::VectorXd current = Eigen::VectorXd::Ones(k);
  Eigen::VectorXd next(k);

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    for (Eigen::Index i = 0; i < k; ++i) {
      double dot = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) dot += m(i, j) * current(j);
      next(i) = dot;
    }
    const double norm = next.norm();
    out.iterations = iter;
    if (!(norm >= kVanishingNorm)) {
      out.vector = Eigen::VectorXd::Constant(k, 1.0 / std::sqrt(static_cast<double>(k)));
      out.degenerate = true;
      return out;
    }
    next /= norm;
    const double change = (next - current).cwiseAbs().maxCoeff();
    current.swap(next);
    if (change < opts.tol) {
      out.converged = true;
      break;
    }
  }
  out.vector = std::move(current);
  return out;
}

SpectralMatchResult traditional_sm(std::span<const Correspondence> corrs, double sigma_d, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw InvalidArgument("keep_fraction must lie in (0, 1]");
  const std::size_t n = corrs.size();
  const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
  if (n < 3 || keep < 3) {
    throw TooFewCorrespondences("traditional_sm: " + std::to_string(n) + " correspondences keep only " +
                                std::to_string(keep) + " (< 3)");
  }

  ConsistencyParams params;
  params.sigma_d = sigma_d;
  SpectralMatchResult out;
  out.eigen = leading_eigenvector(compatibility_matrix(corrs, nullptr, params).entries);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.eigen.vector(a) > out.eigen.vector(b); });

  out.labels.assign(n, false);
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(kept.begin(), kept.end());
  for (std::size_t i : kept) out.labels[i] = true;
  const std::vector<double> uniform(kept.size(), 1.0);
  out.transform = weighted_kabsch(corrs, kept, uniform);
  return out;
}

}  // namespace dsc
