// dscreg: register / synth / benchmark / train from the command line.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsc/bench.hpp"
#include "dsc/embed.hpp"
#include "dsc/errors.hpp"
#include "dsc/io.hpp"
#include "dsc/pipeline.hpp"
#include "dsc/scene.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitOther = 1;

struct RegisterArgs {
  std::string corrs;
  std::string weights;
  std::string out;
  std::string eval;
  std::string src_cloud;
  std::optional<double> sigma_d;
  std::optional<double> nms_radius;
  dsc::PipelineConfig cfg;
};

struct SynthArgs {
  dsc::SceneSpec spec;
  std::string out;
};

struct BenchArgs {
  dsc::BenchmarkConfig cfg;
  std::string methods = "pipeline,sm,ransac:1000,pransac:1000";
  std::string out_dir;
  std::string weights;
  std::optional<double> sigma_d;
};

struct TrainArgs {
  std::size_t scenes = 100;
  dsc::SceneSpec scene;
  dsc::EmbedConfig embed;
  dsc::TrainConfig train;
  bool no_norm = false;
  bool fixed_sigma_f = false;
  bool no_augment = false;
  std::string out;
};

void add_pipeline_flags(CLI::App* cmd, dsc::PipelineConfig& cfg, std::optional<double>& sigma_d) {
  cmd->add_option("--tau", cfg.tau, "Inlier threshold (scene units)")->check(CLI::PositiveNumber);
  cmd->add_option("--k", cfg.k_subset, "Subset size per seed")->check(CLI::PositiveNumber);
  cmd->add_option("--sigma-d", sigma_d, "Spatial consistency sensitivity (default: tau)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed-fraction", cfg.seed_fraction, "Seeds as a fraction of |C|")->check(CLI::Range(1e-12, 1.0));
  cmd->add_option("--min-seeds", cfg.min_seeds, "Lower bound on the seed count");
  cmd->add_option("--refine-max-iter", cfg.refine_max_iter, "Post-refinement iteration cap")->check(CLI::PositiveNumber);
  cmd->add_option("--power-tol", cfg.power.tol, "Power iteration tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--power-max-iter", cfg.power.max_iter, "Power iteration cap")->check(CLI::PositiveNumber);
}

void add_scene_flags(CLI::App* cmd, dsc::SceneSpec& spec) {
  cmd->add_option("--n", spec.n_corrs, "Correspondences per scene")->check(CLI::PositiveNumber);
  cmd->add_option("--outlier-ratio", spec.outlier_ratio, "Outlier fraction in [0, 1)");
  cmd->add_option("--noise", spec.noise_sigma, "Inlier noise standard deviation");
  cmd->add_option("--extent", spec.extent, "Side of the source cube");
}

std::optional<dsc::EmbeddingNetwork> maybe_weights(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return dsc::load_weights(path);
}

int run_register(const RegisterArgs& a) {
  dsc::PipelineConfig cfg = a.cfg;
  cfg.sigma_d = a.sigma_d;
  cfg.nms_radius = a.nms_radius;
  const auto corrs = dsc::read_correspondences(a.corrs);
  const auto net = maybe_weights(a.weights);
  std::vector<dsc::Point3> cloud;
  if (!a.src_cloud.empty()) cloud = dsc::read_point_cloud(a.src_cloud);
  if (!net && !cfg.spatial_only) std::cerr << "note: no --weights given, running spatial-only\n";

  const dsc::RegistrationReport report = dsc::register_correspondences(corrs, net ? &*net : nullptr, cfg, cloud);
  std::optional<dsc::ReportEvaluation> eval;
  if (!a.eval.empty()) {
    const dsc::RigidTransform truth = dsc::read_transform(a.eval);
    eval = dsc::ReportEvaluation{dsc::rad_to_deg(dsc::rotation_error(report.transform, truth)),
                                 dsc::translation_error(report.transform, truth)};
  }
  dsc::write_report(report, a.out, eval ? &*eval : nullptr);

  std::cout << "inliers " << report.inlier_count << "/" << corrs.size() << "  seeds " << report.seeds_selected
            << "  best_seed " << report.best_seed << "  refine_iters " << report.refine_iterations << "\n";
  if (eval) std::cout << "RE_deg " << dsc::format_real(eval->re_deg) << "  TE " << dsc::format_real(eval->te) << "\n";
  return kExitOk;
}

int run_synth(const SynthArgs& a) {
  const dsc::Scene scene = dsc::generate_scene(a.spec);
  const fs::path out(a.out);
  fs::path truth = out;
  truth.replace_extension(".truth.json");
  dsc::write_correspondences(out, scene.corrs);
  dsc::write_transform(truth, scene.truth);
  std::cout << "wrote " << out.string() << " (" << scene.corrs.size() << " correspondences, "
            << a.spec.inlier_count() << " inliers) and " << truth.string() << "\n";
  return kExitOk;
}

int run_benchmark(BenchArgs a) {
  a.cfg.methods = dsc::parse_methods(a.methods);
  a.cfg.pipeline.sigma_d = a.sigma_d;
  const auto net = maybe_weights(a.weights);
  const dsc::BenchmarkResult result = dsc::run_benchmark(a.cfg, net ? &*net : nullptr);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  dsc::write_results_csv(result, dir / "results.csv");
  dsc::write_summary_json(result, a.cfg, dir / "summary.json");
  for (const auto& s : result.summaries) {
    std::cout << s.method << ": RR " << s.metrics.registration_recall << "  IP " << s.metrics.inlier_precision
              << "  IR " << s.metrics.inlier_recall << "  F1 " << s.metrics.f1 << "  mean RE(deg) "
              << dsc::rad_to_deg(s.metrics.mean_re) << "  mean TE " << s.metrics.mean_te << "\n";
  }
  return kExitOk;
}

int run_train(TrainArgs a) {
  a.embed.use_normalization = !a.no_norm;
  a.embed.learn_sigma_f = !a.fixed_sigma_f;
  a.train.augment = !a.no_augment;
  std::vector<dsc::Scene> scenes;
  scenes.reserve(a.scenes);
  for (std::size_t i = 0; i < a.scenes; ++i) {
    dsc::SceneSpec spec = a.scene;
    spec.seed = a.train.seed + i;
    scenes.push_back(dsc::generate_scene(spec));
  }
  dsc::TrainResult result = dsc::train(dsc::EmbeddingNetwork(a.embed, a.train.seed), scenes, a.train);
  dsc::save_weights(result.net, a.out);
  if (!result.loss_trace.empty()) {
    std::cout << "loss first " << result.loss_trace.front() << "  last " << result.loss_trace.back()
              << "  sigma_f " << result.net.sigma_f() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correspondence-based rigid registration with seeded spectral matching"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "dscreg 0.1.0");

  RegisterArgs reg;
  auto* reg_cmd = app.add_subcommand("register", "Estimate the rigid transform from a correspondence CSV");
  reg_cmd->add_option("--corrs", reg.corrs, "Correspondence CSV")->required()->check(CLI::ExistingFile);
  reg_cmd->add_option("--weights", reg.weights, "Trained network weights (omit for spatial-only)")->check(CLI::ExistingFile);
  reg_cmd->add_flag("--spatial-only", reg.cfg.spatial_only, "Ignore learned features even if weights are given");
  add_pipeline_flags(reg_cmd, reg.cfg, reg.sigma_d);
  reg_cmd->add_option("--nms-radius", reg.nms_radius, "Seed suppression radius (default: 0.03 x source bbox diagonal)")
      ->check(CLI::NonNegativeNumber);
  reg_cmd->add_option("--src-cloud", reg.src_cloud, "Source cloud (XYZ or ASCII PLY) that sets the scene diameter")
      ->check(CLI::ExistingFile);
  reg_cmd->add_option("--eval", reg.eval, "Truth transform JSON; adds RE/TE to the report")->check(CLI::ExistingFile);
  reg_cmd->add_option("--out", reg.out, "Report JSON")->required();

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synth", "Write a synthetic correspondence CSV and its truth transform");
  add_scene_flags(syn_cmd, syn.spec);
  syn_cmd->add_option("--seed", syn.spec.seed, "Scene seed");
  syn_cmd->add_option("--out", syn.out, "Output CSV (truth goes to <stem>.truth.json)")->required();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run estimators over a synthetic scene suite");
  bench_cmd->add_option("--scenes", bench.cfg.scenes, "Number of scenes")->check(CLI::PositiveNumber);
  add_scene_flags(bench_cmd, bench.cfg.scene);
  bench_cmd->add_option("--seed", bench.cfg.scene.seed, "First scene seed; scene i uses seed + i");
  bench_cmd->add_option("--methods", bench.methods, "pipeline, sm, ransac:ITERS, pransac:ITERS");
  add_pipeline_flags(bench_cmd, bench.cfg.pipeline, bench.sigma_d);
  bench_cmd->add_option("--weights", bench.weights, "Network weights for pipeline and pransac")->check(CLI::ExistingFile);
  bench_cmd->add_option("--out-dir", bench.out_dir, "Directory for results.csv and summary.json")->required();

  TrainArgs tr;
  tr.scene.n_corrs = 100;
  tr.scene.outlier_ratio = 0.7;
  auto* train_cmd = app.add_subcommand("train", "Train the embedding network on synthetic scenes");
  train_cmd->add_option("--scenes", tr.scenes, "Training scenes")->check(CLI::PositiveNumber);
  train_cmd->add_option("--steps", tr.train.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.train.seed, "Seed for scenes, initialisation and augmentation");
  add_scene_flags(train_cmd, tr.scene);
  train_cmd->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.train.batch, "Scenes per step")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lambda", tr.train.lambda, "Classification loss weight");
  train_cmd->add_option("--tau", tr.train.tau, "Label threshold")->check(CLI::PositiveNumber);
  train_cmd->add_option("--sigma-d", tr.train.sigma_d, "Spatial sensitivity inside the network")->check(CLI::PositiveNumber);
  train_cmd->add_option("--blocks", tr.embed.num_blocks, "Nonlocal blocks")->check(CLI::PositiveNumber);
  train_cmd->add_option("--dim", tr.embed.feature_dim, "Feature width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--sigma-f-init", tr.embed.sigma_f_init, "Initial feature sensitivity")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--no-norm", tr.no_norm, "Disable normalisation layers");
  train_cmd->add_flag("--fixed-sigma-f", tr.fixed_sigma_f, "Do not learn sigma_f");
  train_cmd->add_flag("--no-augment", tr.no_augment, "Disable pose/noise augmentation");
  train_cmd->add_option("--out-weights", tr.out, "Output weights JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*reg_cmd) return run_register(reg);
    if (*syn_cmd) return run_synth(syn);
    if (*bench_cmd) return run_benchmark(bench);
    if (*train_cmd) return run_train(tr);
  } catch (const dsc::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dsc::UnsupportedFormat& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dsc::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dsc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dsc::AllHypothesesDegenerate& e) {
    std::cerr << "degenerate: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const dsc::TooFewCorrespondences& e) {
    std::cerr << "degenerate: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const dsc::DegenerateConfiguration& e) {
    std::cerr << "degenerate: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
