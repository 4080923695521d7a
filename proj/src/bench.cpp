#include "dsc/bench.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "dsc/errors.hpp"
#include "dsc/io.hpp"
#include "dsc/parallel.hpp"
#include "dsc/rng.hpp"
#include "dsc/spectral.hpp"

namespace dsc {

namespace {

// Three distinct indices, each drawn with probability proportional to the
// remaining weight.
std::array<std::size_t, 3> weighted_sample(Rng& rng, std::span<const double> weights, double total) {
  std::array<std::size_t, 3> picked{};
  double remaining = total;
  for (std::size_t s = 0; s < 3; ++s) {
    const double u = rng.uniform() * remaining;
    double acc = 0.0;
    std::size_t chosen = weights.size();
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0 || std::find(picked.begin(), picked.begin() + s, i) != picked.begin() + s) continue;
      last_positive = i;
      acc += weights[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    if (chosen == weights.size()) chosen = last_positive;  // rounding at the top end
    picked[s] = chosen;
    remaining -= weights[chosen];
  }
  return picked;
}

EstimateResult hypothesize_and_verify(std::span<const Correspondence> corrs, std::span<const double> weights,
                                      std::size_t iterations, double tau, std::uint64_t rng_seed) {
  if (corrs.size() < 3) {
    throw TooFewCorrespondences("ransac: " + std::to_string(corrs.size()) + " correspondences, need at least 3");
  }
  if (!(tau > 0.0)) throw InvalidArgument("ransac: tau must be > 0");
  if (iterations == 0) throw InvalidArgument("ransac: iterations must be >= 1");
  Rng rng(rng_seed);
  double total = 0.0;
  for (double w : weights) total += w;

  EstimateResult out;
  bool found = false;
  const std::array<double, 3> unit{1.0, 1.0, 1.0};
  for (std::size_t it = 0; it < iterations; ++it) {
    const std::array<std::size_t, 3> sample = weighted_sample(rng, weights, total);
    RigidTransform candidate;
    try {
      candidate = weighted_kabsch(corrs, sample, unit);
    } catch (const DegenerateConfiguration&) {
      continue;
    }
    const std::size_t consensus = consensus_count(corrs, candidate, tau);
    if (!found || consensus > out.consensus) {
      found = true;
      out.consensus = consensus;
      out.transform = candidate;
      out.best_iteration = it;
    }
  }
  if (!found) throw AllSamplesDegenerate("all " + std::to_string(iterations) + " minimal samples were degenerate");

  const LabelResult labelled = final_labels(corrs, out.transform, tau);
  out.transform = labelled.transform;
  out.refit_degenerate = labelled.degenerate;
  out.labels = ground_truth_labels(corrs, out.transform, tau);
  return out;
}

double harmonic_mean(double a, double b) { return a > 0.0 && b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

using Clock = std::chrono::steady_clock;

}  // namespace

EstimateResult ransac(std::span<const Correspondence> corrs, std::size_t iterations, double tau, std::uint64_t rng_seed) {
  const std::vector<double> weights(corrs.size(), 1.0);
  return hypothesize_and_verify(corrs, weights, iterations, tau, rng_seed);
}

EstimateResult prioritized_ransac(std::span<const Correspondence> corrs, std::span<const double> confidences,
                                  std::size_t iterations, double tau, std::uint64_t rng_seed) {
  if (confidences.size() != corrs.size()) throw InvalidArgument("prioritized_ransac: confidence count mismatch");
  std::vector<double> weights(confidences.begin(), confidences.end());
  std::size_t positive = 0;
  for (double& w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("prioritized_ransac: confidences must be finite and >= 0");
    positive += w > 0.0 ? 1 : 0;
  }
  if (positive < 3) std::fill(weights.begin(), weights.end(), 1.0);
  return hypothesize_and_verify(corrs, weights, iterations, tau, rng_seed);
}

MetricsSummary evaluate(std::span<const EvalCase> cases, double re_thresh, double te_thresh) {
  if (cases.empty()) throw InvalidArgument("evaluate: no results");
  MetricsSummary m;
  m.pairs = cases.size();
  double ip_sum = 0.0;
  double ir_sum = 0.0;
  double re_sum = 0.0;
  double te_sum = 0.0;
  for (const auto& c : cases) {
    if (c.predicted.size() != c.truth_labels.size()) throw InvalidArgument("evaluate: label length mismatch");
    const double re = rotation_error(c.estimate, c.truth);
    const double te = translation_error(c.estimate, c.truth);
    if (re < re_thresh && te < te_thresh) {
      ++m.successes;
      re_sum += re;
      te_sum += te;
    }
    std::size_t kept = 0;
    std::size_t kept_inliers = 0;
    std::size_t inliers = 0;
    for (std::size_t i = 0; i < c.predicted.size(); ++i) {
      kept += c.predicted[i] ? 1 : 0;
      inliers += c.truth_labels[i] ? 1 : 0;
      kept_inliers += (c.predicted[i] && c.truth_labels[i]) ? 1 : 0;
    }
    ip_sum += kept ? static_cast<double>(kept_inliers) / static_cast<double>(kept) : 0.0;
    ir_sum += inliers ? static_cast<double>(kept_inliers) / static_cast<double>(inliers) : 0.0;
  }
  const auto pairs = static_cast<double>(m.pairs);
  m.registration_recall = static_cast<double>(m.successes) / pairs;
  m.inlier_precision = ip_sum / pairs;
  m.inlier_recall = ir_sum / pairs;
  m.f1 = harmonic_mean(m.inlier_precision, m.inlier_recall);
  if (m.successes) {
    m.mean_re = re_sum / static_cast<double>(m.successes);
    m.mean_te = te_sum / static_cast<double>(m.successes);
  }
  return m;
}

MethodSpec MethodSpec::parse(const std::string& text) {
  MethodSpec spec;
  if (text == "pipeline") return spec;
  if (text == "sm") {
    spec.kind = Kind::sm;
    return spec;
  }
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  if (colon == std::string::npos || (head != "ransac" && head != "pransac")) {
    throw InvalidArgument("unknown method '" + text + "' (expected pipeline, sm, ransac:ITERS or pransac:ITERS)");
  }
  const std::string count = text.substr(colon + 1);
  if (count.empty() || !std::all_of(count.begin(), count.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
    throw InvalidArgument("method '" + text + "': iteration count must be a positive integer");
  }
  spec.kind = head == "ransac" ? Kind::ransac : Kind::pransac;
  spec.iterations = std::stoull(count);
  if (spec.iterations == 0) throw InvalidArgument("method '" + text + "': iteration count must be a positive integer");
  return spec;
}

std::string MethodSpec::name() const {
  switch (kind) {
    case Kind::pipeline: return "pipeline";
    case Kind::sm: return "sm";
    case Kind::ransac: return "ransac:" + std::to_string(iterations);
    case Kind::pransac: return "pransac:" + std::to_string(iterations);
  }
  return {};
}

std::vector<MethodSpec> parse_methods(const std::string& text) {
  std::vector<MethodSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(MethodSpec::parse(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void BenchmarkConfig::validate() const {
  if (scenes == 0) throw InvalidArgument("benchmark: scenes must be >= 1");
  if (methods.empty()) throw InvalidArgument("benchmark: no methods given");
  scene.validate();
  pipeline.validate();
}

std::vector<double> pransac_confidences(std::span<const Correspondence> corrs, const EmbeddingNetwork* net,
                                        const PipelineConfig& cfg) {
  if (net && !cfg.spatial_only) {
    const Eigen::VectorXd conf = forward(*net, corrs, cfg.effective_sigma_d()).confidences;
    return {conf.data(), conf.data() + conf.size()};
  }
  ConsistencyParams params;
  params.sigma_d = cfg.effective_sigma_d();
  const EigenResult eig = leading_eigenvector(compatibility_matrix(corrs, nullptr, params).entries, cfg.power);
  return {eig.vector.data(), eig.vector.data() + eig.vector.size()};
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const EmbeddingNetwork* net) {
  cfg.validate();
  const std::size_t m = cfg.methods.size();
  std::vector<BenchmarkRow> rows(cfg.scenes * m);
  std::vector<EvalCase> cases(cfg.scenes * m);

  parallel_for(cfg.scenes, [&](std::size_t s) {
    SceneSpec spec = cfg.scene;
    spec.seed = cfg.scene.seed + s;
    const Scene scene = generate_scene(spec);
    const std::vector<bool> truth_labels = ground_truth_labels(scene.corrs, scene.truth, cfg.pipeline.tau);
    std::vector<double> confidences;

    for (std::size_t j = 0; j < m; ++j) {
      const MethodSpec& method = cfg.methods[j];
      BenchmarkRow& row = rows[s * m + j];
      EvalCase& ec = cases[s * m + j];
      row.scene_seed = spec.seed;
      row.method = method.name();
      ec.truth = scene.truth;
      ec.truth_labels = truth_labels;
      const auto start = Clock::now();
      try {
        switch (method.kind) {
          case MethodSpec::Kind::pipeline: {
            const RegistrationReport r = register_correspondences(scene.corrs, net, cfg.pipeline);
            ec.estimate = r.transform;
            ec.predicted = r.labels;
            break;
          }
          case MethodSpec::Kind::sm: {
            const SpectralMatchResult r = traditional_sm(scene.corrs, cfg.pipeline.effective_sigma_d(), cfg.sm_keep_fraction);
            ec.estimate = r.transform;
            ec.predicted = r.labels;
            break;
          }
          case MethodSpec::Kind::ransac: {
            const EstimateResult r = ransac(scene.corrs, method.iterations, cfg.pipeline.tau, spec.seed);
            ec.estimate = r.transform;
            ec.predicted = r.labels;
            break;
          }
          case MethodSpec::Kind::pransac: {
            if (confidences.empty()) confidences = pransac_confidences(scene.corrs, net, cfg.pipeline);
            const EstimateResult r =
                prioritized_ransac(scene.corrs, confidences, method.iterations, cfg.pipeline.tau, spec.seed);
            ec.estimate = r.transform;
            ec.predicted = r.labels;
            break;
          }
        }
      } catch (const Error&) {
        row.failed = true;
        ec.estimate = RigidTransform::identity();
        ec.predicted.assign(scene.corrs.size(), false);
      }
      row.runtime_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      row.re_deg = rad_to_deg(rotation_error(ec.estimate, scene.truth));
      row.te = translation_error(ec.estimate, scene.truth);
      row.consensus = row.failed ? 0 : consensus_count(scene.corrs, ec.estimate, cfg.pipeline.tau);
    }
  });

  BenchmarkResult result;
  result.rows = std::move(rows);
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<EvalCase> per_method;
    per_method.reserve(cfg.scenes);
    for (std::size_t s = 0; s < cfg.scenes; ++s) per_method.push_back(std::move(cases[s * m + j]));
    result.summaries.push_back({cfg.methods[j].name(), evaluate(per_method, deg_to_rad(cfg.re_thresh_deg), cfg.te_thresh)});
  }
  return result;
}

void write_results_csv(const BenchmarkResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "scene_seed,method,re_deg,te,consensus,runtime_ms\n";
  for (const auto& r : result.rows) {
    out << r.scene_seed << ',' << r.method << ',' << format_real(r.re_deg) << ',' << format_real(r.te) << ','
        << r.consensus << ',' << format_real(r.runtime_ms) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_summary_json(const BenchmarkResult& result, const BenchmarkConfig& cfg, const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  doc["scenes"] = cfg.scenes;
  doc["n_corrs"] = cfg.scene.n_corrs;
  doc["outlier_ratio"] = cfg.scene.outlier_ratio;
  doc["noise_sigma"] = cfg.scene.noise_sigma;
  doc["first_seed"] = cfg.scene.seed;
  doc["tau"] = cfg.pipeline.tau;
  doc["re_thresh_deg"] = cfg.re_thresh_deg;
  doc["te_thresh"] = cfg.te_thresh;
  doc["ip_ir_aggregation"] = "per-pair mean";
  auto& methods = doc["methods"];
  methods = nlohmann::ordered_json::array();
  for (const auto& s : result.summaries) {
    nlohmann::ordered_json m;
    m["method"] = s.method;
    m["pairs"] = s.metrics.pairs;
    m["successes"] = s.metrics.successes;
    m["registration_recall"] = s.metrics.registration_recall;
    m["inlier_precision"] = s.metrics.inlier_precision;
    m["inlier_recall"] = s.metrics.inlier_recall;
    m["f1"] = s.metrics.f1;
    m["mean_re_deg"] = rad_to_deg(s.metrics.mean_re);
    m["mean_te"] = s.metrics.mean_te;
    methods.push_back(std::move(m));
  }
  write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace dsc
