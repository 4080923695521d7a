#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsc/embed.hpp"
#include "dsc/geom.hpp"
#include "dsc/pipeline.hpp"
#include "dsc/scene.hpp"

namespace dsc {

struct EstimateResult {
  RigidTransform transform;
  std::vector<bool> labels;
  std::size_t consensus = 0;       ///< of the winning minimal-sample hypothesis
  std::size_t best_iteration = 0;
  bool refit_degenerate = false;
};

/// Hypothesize-and-verify with uniformly drawn minimal samples of 3.
EstimateResult ransac(std::span<const Correspondence> corrs, std::size_t iterations, double tau, std::uint64_t rng_seed);

/// As ransac, but each sample is drawn without replacement with probability
/// proportional to `confidences`. Fewer than three positive entries fall back
/// to uniform sampling.
EstimateResult prioritized_ransac(std::span<const Correspondence> corrs, std::span<const double> confidences,
                                  std::size_t iterations, double tau, std::uint64_t rng_seed);

/// One registered pair: estimate and predicted labels against the truth.
struct EvalCase {
  RigidTransform estimate;
  std::vector<bool> predicted;
  std::vector<bool> truth_labels;
  RigidTransform truth;
};

struct MetricsSummary {
  std::size_t pairs = 0;
  std::size_t successes = 0;
  double registration_recall = 0.0;
  double inlier_precision = 0.0;
  double inlier_recall = 0.0;
  double f1 = 0.0;
  double mean_re = 0.0;  ///< radians, successes only
  double mean_te = 0.0;  ///< successes only
};

inline constexpr double kDefaultReThreshDeg = 15.0;
inline constexpr double kDefaultTeThresh = 0.30;

/// Success means RE < re_thresh (radians) and TE < te_thresh. IP and IR are
/// computed per pair and averaged; F1 is the harmonic mean of the averages.
MetricsSummary evaluate(std::span<const EvalCase> cases, double re_thresh = deg_to_rad(kDefaultReThreshDeg),
                        double te_thresh = kDefaultTeThresh);

struct MethodSpec {
  enum class Kind { pipeline, sm, ransac, pransac };
  Kind kind = Kind::pipeline;
  std::size_t iterations = 0;

  /// "pipeline", "sm", "ransac:ITERS" or "pransac:ITERS".
  static MethodSpec parse(const std::string& text);
  std::string name() const;
};

/// Comma-separated method list.
std::vector<MethodSpec> parse_methods(const std::string& text);

struct BenchmarkConfig {
  std::size_t scenes = 100;
  SceneSpec scene;       ///< seed is the first scene's; scene i uses seed + i
  PipelineConfig pipeline;
  std::vector<MethodSpec> methods;
  double sm_keep_fraction = 0.10;
  double re_thresh_deg = kDefaultReThreshDeg;
  double te_thresh = kDefaultTeThresh;

  void validate() const;
};

struct BenchmarkRow {
  std::uint64_t scene_seed = 0;
  std::string method;
  double re_deg = 0.0;
  double te = 0.0;
  std::size_t consensus = 0;  ///< inliers under the returned transform
  double runtime_ms = 0.0;
  bool failed = false;        ///< estimator raised (degenerate); counted as unsuccessful
};

struct MethodSummary {
  std::string method;
  MetricsSummary metrics;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;  ///< scene-major, methods in the given order
  std::vector<MethodSummary> summaries;
};

/// Confidences handed to prioritized RANSAC: network output when a network
/// is given, else the entries of the spatial compatibility eigenvector.
std::vector<double> pransac_confidences(std::span<const Correspondence> corrs, const EmbeddingNetwork* net,
                                        const PipelineConfig& cfg);

/// Scenes run in parallel; rows and summaries fold in scene order.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const EmbeddingNetwork* net = nullptr);

void write_results_csv(const BenchmarkResult& result, const std::filesystem::path& path);
void write_summary_json(const BenchmarkResult& result, const BenchmarkConfig& cfg, const std::filesystem::path& path);

}  // namespace dsc
