#include "dsc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "dsc/errors.hpp"
#include "dsc/parallel.hpp"
#include "dsc/scene.hpp"

namespace dsc {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::vector<double> residuals(std::span<const Correspondence> corrs, const RigidTransform& t) {
  std::vector<double> out(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) out[i] = residual(t, corrs[i]);
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(tau > 0.0 && std::isfinite(tau))) throw InvalidArgument("tau must be > 0");
  if (k_subset < 1) throw InvalidArgument("k_subset must be >= 1");
  if (!(seed_fraction > 0.0 && seed_fraction <= 1.0)) throw InvalidArgument("seed_fraction must lie in (0, 1]");
  if (nms_radius && !(*nms_radius >= 0.0)) throw InvalidArgument("nms_radius must be >= 0");
  if (sigma_d && !(*sigma_d > 0.0)) throw InvalidArgument("sigma_d must be > 0");
  if (refine_max_iter < 1) throw InvalidArgument("refine_max_iter must be >= 1");
}

std::size_t PipelineConfig::seed_count(std::size_t n) const {
  const auto by_fraction = static_cast<std::size_t>(std::ceil(seed_fraction * static_cast<double>(n) - 1e-9));
  return std::max(min_seeds, by_fraction);
}

std::vector<std::size_t> select_seeds(std::span<const Correspondence> corrs, std::span<const double> confidences,
                                      std::size_t count, double nms_radius) {
  if (corrs.size() != confidences.size()) throw InvalidArgument("select_seeds: confidence count mismatch");
  const std::size_t n = corrs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });

  std::vector<bool> suppressed(n, false);
  std::vector<std::size_t> seeds;
  for (std::size_t candidate : order) {
    if (seeds.size() >= count) break;
    if (suppressed[candidate]) continue;
    seeds.push_back(candidate);
    suppressed[candidate] = true;
    if (nms_radius <= 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!suppressed[j] && (corrs[j].src - corrs[candidate].src).norm() < nms_radius) suppressed[j] = true;
    }
  }
  return seeds;
}

NeighborIndex::NeighborIndex(Matrix rows) : rows_(std::move(rows)) {
  if (static_cast<std::size_t>(rows_.rows()) > kLinearScanLimit) tree_.emplace(rows_);
}

std::vector<std::size_t> NeighborIndex::knn(std::size_t seed, std::size_t k) const {
  if (seed >= static_cast<std::size_t>(rows_.rows())) throw InvalidArgument("knn: seed index out of range");
  const Eigen::RowVectorXd query = rows_.row(static_cast<Eigen::Index>(seed));
  std::vector<std::size_t> out = tree_ ? tree_->knn(query, k) : knn_linear_scan(rows_, query, k);
  // A duplicate row with a lower index can tie the seed at distance 0; the seed still goes in.
  if (!out.empty() && std::find(out.begin(), out.end(), seed) == out.end()) {
    out.pop_back();
    out.insert(out.begin(), seed);
  }
  return out;
}

Matrix correspondence_coordinates(std::span<const Correspondence> corrs) {
  Matrix out(static_cast<Eigen::Index>(corrs.size()), 6);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) << corrs[i].src.transpose(), corrs[i].dst.transpose();
  }
  return out;
}

std::vector<std::size_t> feature_knn(const Matrix& feats, std::size_t seed_index, std::size_t k) {
  if (k > static_cast<std::size_t>(feats.rows())) throw InvalidArgument("feature_knn: k exceeds row count");
  return NeighborIndex(normalize_rows(feats)).knn(seed_index, k);
}

std::size_t consensus_count(std::span<const Correspondence> corrs, const RigidTransform& t, double tau) {
  std::size_t count = 0;
  for (const auto& c : corrs) count += residual(t, c) < tau ? 1 : 0;
  return count;
}

Hypothesis seed_hypothesis(std::span<const Correspondence> corrs, std::size_t seed_index,
                           std::span<const std::size_t> subset_indices, const Matrix* feats, const ConsistencyParams& params,
                           double tau, const PowerIterationOptions& power) {
  Hypothesis h;
  h.seed_index = seed_index;
  h.subset_indices.assign(subset_indices.begin(), subset_indices.end());
  if (subset_indices.size() < 3) {
    h.degenerate = true;
    return h;
  }

  std::vector<Correspondence> subset;
  subset.reserve(subset_indices.size());
  for (std::size_t i : subset_indices) subset.push_back(corrs[i]);
  Matrix subset_feats;
  if (feats) {
    subset_feats.resize(static_cast<Eigen::Index>(subset_indices.size()), feats->cols());
    for (std::size_t r = 0; r < subset_indices.size(); ++r) {
      subset_feats.row(static_cast<Eigen::Index>(r)) = feats->row(static_cast<Eigen::Index>(subset_indices[r]));
    }
  }

  const CompatibilityMatrix m = compatibility_matrix(subset, feats ? &subset_feats : nullptr, params);
  const EigenResult eig = leading_eigenvector(m.entries, power);
  h.eigenvector = eig.vector;
  try {
    const std::vector<double> weights(eig.vector.data(), eig.vector.data() + eig.vector.size());
    h.transform = weighted_kabsch(subset, weights);
  } catch (const DegenerateConfiguration&) {
    h.degenerate = true;
  } catch (const SumWeightsZero&) {
    h.degenerate = true;
  }
  if (!h.degenerate) h.consensus = consensus_count(corrs, h.transform, tau);
  return h;
}

const Hypothesis& select_hypothesis(std::span<const Hypothesis> hypotheses) {
  const Hypothesis* best = nullptr;
  for (const auto& h : hypotheses) {
    if (h.degenerate) continue;
    if (!best || h.consensus > best->consensus || (h.consensus == best->consensus && h.seed_index < best->seed_index)) {
      best = &h;
    }
  }
  if (!best) throw AllHypothesesDegenerate("all " + std::to_string(hypotheses.size()) + " hypotheses are degenerate");
  return *best;
}

LabelResult final_labels(std::span<const Correspondence> corrs, const RigidTransform& t, double tau) {
  LabelResult out;
  out.transform = t;
  out.labels = ground_truth_labels(corrs, t, tau);
  std::vector<double> weights(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) weights[i] = out.labels[i] ? 1.0 : 0.0;
  try {
    out.transform = weighted_kabsch(corrs, weights);
  } catch (const DegenerateConfiguration&) {
    out.degenerate = true;
  } catch (const SumWeightsZero&) {
    out.degenerate = true;
  }
  return out;
}

RefineResult post_refine(std::span<const Correspondence> corrs, const RigidTransform& t, double tau, std::size_t max_iter) {
  if (max_iter < 1) throw InvalidArgument("post_refine: max_iter must be >= 1");
  RefineResult out;
  out.transform = t;
  std::optional<std::size_t> previous;
  std::vector<double> weights(corrs.size());

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const std::vector<double> res = residuals(corrs, out.transform);
    std::size_t count = 0;
    for (std::size_t i = 0; i < res.size(); ++i) {
      const bool inlier = res[i] < tau;
      count += inlier ? 1 : 0;
      const double ratio = res[i] / tau;
      weights[i] = inlier ? 1.0 / (1.0 + ratio * ratio) : 0.0;
    }
    if (count == 0 || (previous && *previous == count)) break;
    try {
      out.transform = weighted_kabsch(corrs, weights);
    } catch (const DegenerateConfiguration&) {
      out.degenerate = true;
      break;
    } catch (const SumWeightsZero&) {
      out.degenerate = true;
      break;
    }
    ++out.iterations;
    previous = count;
  }
  return out;
}

Eigen::VectorXd seeding_confidences(std::span<const Correspondence> corrs, const EmbeddingNetwork* net,
                                    const PipelineConfig& cfg) {
  if (net && !cfg.spatial_only) return forward(*net, corrs, cfg.effective_sigma_d()).confidences;
  return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(corrs.size()));
}

RegistrationReport register_correspondences(std::span<const Correspondence> corrs, const EmbeddingNetwork* net,
                                            const PipelineConfig& cfg, std::span<const Point3> src_cloud) {
  cfg.validate();
  if (corrs.size() < 3) {
    throw TooFewCorrespondences("register: " + std::to_string(corrs.size()) + " correspondences, need at least 3");
  }
  const auto start = Clock::now();
  RegistrationReport report;
  const std::size_t n = corrs.size();
  const bool learned = net && !cfg.spatial_only;

  auto stage = Clock::now();
  Matrix feats;
  Eigen::VectorXd confidences;
  if (learned) {
    EmbedOutput out = forward(*net, corrs, cfg.effective_sigma_d());
    feats = std::move(out.feats);
    confidences = std::move(out.confidences);
  } else {
    confidences = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  }
  report.timing.embed_ms = elapsed_ms(stage);

  stage = Clock::now();
  double radius = 0.0;
  if (cfg.nms_radius) {
    radius = *cfg.nms_radius;
  } else if (!src_cloud.empty()) {
    radius = 0.03 * bounding_diagonal(src_cloud);
  } else {
    std::vector<Point3> sources;
    sources.reserve(n);
    for (const auto& c : corrs) sources.push_back(c.src);
    radius = 0.03 * bounding_diagonal(sources);
  }
  const std::vector<double> conf(confidences.data(), confidences.data() + confidences.size());
  const std::vector<std::size_t> seeds = select_seeds(corrs, conf, std::min(cfg.seed_count(n), n), radius);
  report.seeds_selected = seeds.size();
  const NeighborIndex index(learned ? normalize_rows(feats) : correspondence_coordinates(corrs));
  report.timing.seeding_ms = elapsed_ms(stage);

  stage = Clock::now();
  ConsistencyParams params;
  params.sigma_d = cfg.effective_sigma_d();
  if (learned) params.sigma_f = net->sigma_f();
  const std::size_t k = std::min(cfg.k_subset, n);
  std::vector<Hypothesis> hypotheses(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t s) {
    const std::vector<std::size_t> subset = index.knn(seeds[s], k);
    hypotheses[s] = seed_hypothesis(corrs, seeds[s], subset, learned ? &feats : nullptr, params, cfg.tau, cfg.power);
  });
  report.hypotheses_evaluated = hypotheses.size();
  report.degenerate_hypotheses = static_cast<std::size_t>(
      std::count_if(hypotheses.begin(), hypotheses.end(), [](const Hypothesis& h) { return h.degenerate; }));
  report.timing.hypotheses_ms = elapsed_ms(stage);

  stage = Clock::now();
  const Hypothesis& best = select_hypothesis(hypotheses);
  report.best_seed = best.seed_index;
  report.best_consensus = best.consensus;
  report.timing.selection_ms = elapsed_ms(stage);

  stage = Clock::now();
  const RefineResult refined = post_refine(corrs, best.transform, cfg.tau, cfg.refine_max_iter);
  report.refine_iterations = refined.iterations;
  report.refine_degenerate = refined.degenerate;
  report.timing.refine_ms = elapsed_ms(stage);

  stage = Clock::now();
  const LabelResult labelled = final_labels(corrs, refined.transform, cfg.tau);
  report.transform = labelled.transform;
  report.refit_degenerate = labelled.degenerate;
  // Labels are reported against the transform actually returned.
  report.labels = ground_truth_labels(corrs, report.transform, cfg.tau);
  report.inlier_count = static_cast<std::size_t>(std::count(report.labels.begin(), report.labels.end(), true));
  report.timing.labeling_ms = elapsed_ms(stage);
  report.timing.total_ms = elapsed_ms(start);
  return report;
}

}  // namespace dsc
