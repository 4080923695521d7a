#include <doctest.h>

#include <cstdlib>
#include <random>

#include "dsc/errors.hpp"
#include "dsc/pipeline.hpp"
#include "dsc/scene.hpp"
#include "oracles.hpp"

using dsc::Correspondence;
using dsc::Hypothesis;
using dsc::Matrix;
using dsc::PipelineConfig;
using dsc::Point3;
using dsc::RigidTransform;

namespace {

// Greedy NMS written as a plain loop over a sorted copy.
std::vector<std::size_t> nms_oracle(const std::vector<Correspondence>& corrs, const std::vector<double>& conf,
                                    std::size_t count, double radius) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < conf.size(); ++i) order.emplace_back(-conf[i], i);
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> picked;
  for (const auto& [neg, i] : order) {
    if (picked.size() == count) break;
    bool near = false;
    for (std::size_t s : picked) near = near || (corrs[i].src - corrs[s].src).norm() < radius;
    if (!near) picked.push_back(i);
  }
  return picked;
}

void set_threads(const char* value) { ::setenv("DSC_THREADS", value, 1); }

bool same_report(const dsc::RegistrationReport& a, const dsc::RegistrationReport& b) {
  return a.transform.rotation == b.transform.rotation && a.transform.translation == b.transform.translation &&
         a.labels == b.labels && a.best_seed == b.best_seed && a.best_consensus == b.best_consensus &&
         a.hypotheses_evaluated == b.hypotheses_evaluated && a.refine_iterations == b.refine_iterations &&
         a.seeds_selected == b.seeds_selected && a.inlier_count == b.inlier_count;
}

}  // namespace

TEST_CASE("PipelineConfig") {
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.effective_sigma_d() == cfg.tau);
  CHECK(cfg.seed_count(1000) == 100);
  CHECK(cfg.seed_count(10) == 4);
  CHECK(cfg.seed_count(41) == 5);
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), dsc::InvalidArgument);
  cfg = {};
  cfg.k_subset = 0;
  CHECK_THROWS_AS(cfg.validate(), dsc::InvalidArgument);
  cfg = {};
  cfg.seed_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), dsc::InvalidArgument);
}

TEST_CASE("select_seeds") {
  const std::vector<Correspondence> far{{Point3(0, 0, 0), Point3()}, {Point3(10, 0, 0), Point3()}, {Point3(0, 10, 0), Point3()}};
  CHECK(dsc::select_seeds(far, std::vector<double>{0.9, 0.1, 0.8}, 2, 1.0) == std::vector<std::size_t>{0, 2});
  CHECK(dsc::select_seeds(far, std::vector<double>{0.9, 0.1, 0.8}, 2, 0.0) == std::vector<std::size_t>{0, 2});

  const std::vector<Correspondence> close{{Point3(0, 0, 0), Point3()}, {Point3(0.01, 0, 0), Point3()}};
  CHECK(dsc::select_seeds(close, std::vector<double>{0.9, 0.8}, 2, 0.05) == std::vector<std::size_t>{0});

  // Ties go to the lower index; the radius is exclusive.
  const std::vector<Correspondence> ring{{Point3(0, 0, 0), Point3()}, {Point3(1, 0, 0), Point3()}, {Point3(2, 0, 0), Point3()}};
  CHECK(dsc::select_seeds(ring, std::vector<double>{0.5, 0.5, 0.5}, 3, 1.0) == std::vector<std::size_t>{0, 1, 2});
  CHECK(dsc::select_seeds(ring, std::vector<double>{0.5, 0.5, 0.5}, 3, 1.0001) == std::vector<std::size_t>{0, 2});

  CHECK_THROWS_AS(dsc::select_seeds(ring, std::vector<double>{0.5}, 3, 1.0), dsc::InvalidArgument);

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto scene = dsc::generate_scene({200, 0.5, 0.005, 3.0, static_cast<std::uint64_t>(trial)});
    std::vector<double> conf;
    for (std::size_t i = 0; i < 200; ++i) conf.push_back(std::round(u(gen) * 20.0) / 20.0);
    const double radius = 0.1 + u(gen);
    CHECK(dsc::select_seeds(scene.corrs, conf, 30, radius) == nms_oracle(scene.corrs, conf, 30, radius));
  }
}

TEST_CASE("feature_knn") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix feats(4, 3);
  feats << 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1;
  CHECK(dsc::feature_knn(feats, 0, 2) == std::vector<std::size_t>{0, 2});
  CHECK(dsc::feature_knn(feats, 2, 1) == std::vector<std::size_t>{2});
  CHECK(dsc::feature_knn(feats, 3, 4).size() == 4);
  CHECK_THROWS_AS(dsc::feature_knn(feats, 0, 5), dsc::InvalidArgument);

  // Distances use normalised rows.
  Matrix scaled(3, 2);
  scaled << 10, 0, 0.1, 0.001, 0, 1;
  CHECK(dsc::feature_knn(scaled, 0, 2) == std::vector<std::size_t>{0, 1});

  // The tree path above the scan limit must agree with exhaustive search.
  Matrix big(700, 8);
  for (Eigen::Index i = 0; i < big.size(); ++i) big.data()[i] = n(gen);
  const Matrix normed = dsc::normalize_rows(big);
  for (std::size_t seed : {0u, 111u, 699u}) {
    CHECK(dsc::feature_knn(big, seed, 40) == oracle::brute_knn(normed, static_cast<Eigen::Index>(seed), 40));
  }

  // Spatial-only neighbourhoods use the 6-D coordinates.
  const auto scene = dsc::generate_scene({600, 0.5, 0.005, 3.0, 1});
  const dsc::NeighborIndex index(dsc::correspondence_coordinates(scene.corrs));
  const Matrix coords = dsc::correspondence_coordinates(scene.corrs);
  CHECK(coords(3, 4) == scene.corrs[3].dst.y());
  CHECK(index.knn(17, 25) == oracle::brute_knn(coords, 17, 25));
}

TEST_CASE("seed_hypothesis") {
  const auto scene = dsc::generate_scene({100, 0.8, 0.0, 3.0, 11});
  const dsc::ConsistencyParams params{0.1, 1.0};

  SUBCASE("noiseless inlier subset") {
    const std::vector<std::size_t> subset{0, 3, 5, 9, 12};
    const Hypothesis h = dsc::seed_hypothesis(scene.corrs, 0, subset, nullptr, params, 0.1);
    CHECK_FALSE(h.degenerate);
    CHECK(dsc::rotation_error(h.transform, scene.truth) < 1e-6);
    CHECK(h.consensus == 20);
    CHECK(h.subset_indices == subset);
  }
  SUBCASE("a single outlier gets the smallest eigenvector entry") {
    std::vector<std::size_t> subset{50};
    for (std::size_t i = 0; i < 10; ++i) subset.push_back(i);
    const Hypothesis h = dsc::seed_hypothesis(scene.corrs, 0, subset, nullptr, params, 0.1);
    std::vector<Correspondence> sub;
    for (std::size_t i : subset) sub.push_back(scene.corrs[i]);
    const Eigen::VectorXd ref = oracle::dense_leading_eigenvector(dsc::compatibility_matrix(sub, nullptr, params).entries);
    Eigen::Index arg = 0;
    ref.minCoeff(&arg);
    CHECK(arg == 0);
    CHECK(h.eigenvector(0) < h.eigenvector.tail(10).minCoeff());
  }
  SUBCASE("collinear subset is flagged") {
    std::vector<Correspondence> line;
    for (int i = 0; i < 6; ++i) line.emplace_back(Point3(i, 0, 0), Point3(i, 0, 0));
    const std::vector<std::size_t> subset{0, 1, 2, 3, 4, 5};
    const Hypothesis h = dsc::seed_hypothesis(line, 0, subset, nullptr, params, 0.1);
    CHECK(h.degenerate);
    CHECK(h.consensus == 0);
  }
  SUBCASE("learned features enter through gamma") {
    Matrix feats = Matrix::Ones(100, 4);
    const std::vector<std::size_t> subset{0, 1, 2, 3, 60};
    const Hypothesis a = dsc::seed_hypothesis(scene.corrs, 0, subset, &feats, params, 0.1);
    const Hypothesis b = dsc::seed_hypothesis(scene.corrs, 0, subset, nullptr, params, 0.1);
    CHECK((a.eigenvector - b.eigenvector).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("select_hypothesis") {
  Hypothesis a;
  a.seed_index = 5;
  a.consensus = 10;
  Hypothesis b;
  b.seed_index = 2;
  b.consensus = 3;
  CHECK(dsc::select_hypothesis(std::vector<Hypothesis>{a}).seed_index == 5);
  CHECK(dsc::select_hypothesis(std::vector<Hypothesis>{a, b}).seed_index == 5);
  a.consensus = 7;
  b.consensus = 7;
  CHECK(dsc::select_hypothesis(std::vector<Hypothesis>{a, b}).seed_index == 2);
  CHECK(dsc::select_hypothesis(std::vector<Hypothesis>{b, a}).seed_index == 2);
  Hypothesis bad = a;
  bad.degenerate = true;
  bad.consensus = 100;
  CHECK(dsc::select_hypothesis(std::vector<Hypothesis>{bad, b}).seed_index == 2);
  CHECK_THROWS_AS(dsc::select_hypothesis(std::vector<Hypothesis>{bad}), dsc::AllHypothesesDegenerate);
  CHECK_THROWS_AS(dsc::select_hypothesis(std::vector<Hypothesis>{}), dsc::AllHypothesesDegenerate);
}

TEST_CASE("final_labels") {
  SUBCASE("strict threshold") {
    std::vector<Correspondence> corrs{{Point3(0, 0, 0), Point3(0.25, 0, 0)},
                                      {Point3(1, 0, 0), Point3(1, 0, 0)},
                                      {Point3(0, 1, 0), Point3(0, 1, 0)},
                                      {Point3(0, 0, 1), Point3(0, 0, 1)}};
    const auto r = dsc::final_labels(corrs, RigidTransform::identity(), 0.25);
    CHECK(r.labels == std::vector<bool>{false, true, true, true});
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("all-inlier noiseless") {
    const auto scene = dsc::generate_scene({50, 0.0, 0.0, 3.0, 2});
    const auto r = dsc::final_labels(scene.corrs, scene.truth, 0.1);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](bool b) { return b; }));
    CHECK((r.transform.rotation - scene.truth.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((r.transform.translation - scene.truth.translation).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("matches ground truth at low noise") {
    const auto scene = dsc::generate_scene({300, 0.7, 0.002, 3.0, 3});
    const auto r = dsc::final_labels(scene.corrs, scene.truth, 0.1);
    for (std::size_t i = 0; i < r.labels.size(); ++i) CHECK(r.labels[i] == *scene.corrs[i].gt_label);
  }
  SUBCASE("too few survivors keeps the input transform") {
    const auto scene = dsc::generate_scene({50, 0.0, 0.0, 3.0, 4});
    RigidTransform off = scene.truth;
    off.translation += Eigen::Vector3d(5, 0, 0);
    const auto r = dsc::final_labels(scene.corrs, off, 0.1);
    CHECK(r.degenerate);
    CHECK(r.transform.translation == off.translation);
  }
}

TEST_CASE("post_refine") {
  SUBCASE("aligned input is a fixed point") {
    const auto scene = dsc::generate_scene({60, 0.0, 0.0, 3.0, 5});
    const auto r = dsc::post_refine(scene.corrs, scene.truth, 0.1, 20);
    CHECK(r.iterations == 1);
    CHECK((r.transform.rotation - scene.truth.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((r.transform.translation - scene.truth.translation).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("no inliers") {
    const auto scene = dsc::generate_scene({60, 0.0, 0.0, 3.0, 6});
    RigidTransform off = scene.truth;
    off.translation += Eigen::Vector3d(0, 9, 0);
    const auto r = dsc::post_refine(scene.corrs, off, 0.1, 20);
    CHECK(r.iterations == 0);
    CHECK(r.transform.translation == off.translation);
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("does not lose inliers on noisy scenes") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto scene = dsc::generate_scene({300, 0.6, 0.01, 3.0, seed});
      const RigidTransform start = RigidTransform::from_axis_angle(Eigen::Vector3d(0, 0, 1), 0.01).compose(scene.truth);
      const auto r = dsc::post_refine(scene.corrs, start, 0.1, 20);
      CHECK(dsc::consensus_count(scene.corrs, r.transform, 0.1) >= dsc::consensus_count(scene.corrs, start, 0.1));
      CHECK(r.iterations <= 20);
      CHECK(r.transform.is_valid());
    }
  }
  SUBCASE("iteration cap") {
    const auto scene = dsc::generate_scene({300, 0.6, 0.01, 3.0, 9});
    const RigidTransform start = RigidTransform::from_axis_angle(Eigen::Vector3d(1, 0, 0), 0.03).compose(scene.truth);
    CHECK(dsc::post_refine(scene.corrs, start, 0.1, 1).iterations <= 1);
    CHECK_THROWS_AS(dsc::post_refine(scene.corrs, start, 0.1, 0), dsc::InvalidArgument);
  }
}

TEST_CASE("register_correspondences") {
  PipelineConfig cfg;
  SUBCASE("noiseless all-inlier scene") {
    const auto scene = dsc::generate_scene({200, 0.0, 0.0, 3.0, 7});
    const auto r = dsc::register_correspondences(scene.corrs, nullptr, cfg);
    CHECK(dsc::rotation_error(r.transform, scene.truth) < 1e-6);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](bool b) { return b; }));
    CHECK(r.inlier_count == 200);
  }
  SUBCASE("high-outlier scene") {
    const auto scene = dsc::generate_scene({1000, 0.9, 0.005, 3.0, 8});
    const auto r = dsc::register_correspondences(scene.corrs, nullptr, cfg);
    CHECK(dsc::rad_to_deg(dsc::rotation_error(r.transform, scene.truth)) < 2.0);
    CHECK(dsc::translation_error(r.transform, scene.truth) < 0.05);
    CHECK(r.labels == dsc::ground_truth_labels(scene.corrs, r.transform, cfg.tau));
    CHECK(r.seeds_selected <= cfg.seed_count(1000));
    CHECK(r.hypotheses_evaluated == r.seeds_selected);
    CHECK(r.transform.is_valid());
    CHECK(r.refine_iterations <= cfg.refine_max_iter);
  }
  SUBCASE("identical across thread counts") {
    const auto scene = dsc::generate_scene({800, 0.9, 0.005, 3.0, 12});
    set_threads("1");
    const auto a = dsc::register_correspondences(scene.corrs, nullptr, cfg);
    set_threads("4");
    const auto b = dsc::register_correspondences(scene.corrs, nullptr, cfg);
    ::unsetenv("DSC_THREADS");
    const auto c = dsc::register_correspondences(scene.corrs, nullptr, cfg);
    CHECK(same_report(a, b));
    CHECK(same_report(a, c));
  }
  SUBCASE("argmax over hypotheses") {
    const auto scene = dsc::generate_scene({300, 0.8, 0.005, 3.0, 13});
    const auto r = dsc::register_correspondences(scene.corrs, nullptr, cfg);
    const dsc::NeighborIndex index(dsc::correspondence_coordinates(scene.corrs));
    const auto conf = std::vector<double>(300, 1.0);
    std::vector<Point3> src;
    for (const auto& c : scene.corrs) src.push_back(c.src);
    const auto seeds = dsc::select_seeds(scene.corrs, conf, cfg.seed_count(300), 0.03 * dsc::bounding_diagonal(src));
    std::size_t best = 0;
    for (std::size_t s : seeds) {
      const auto h = dsc::seed_hypothesis(scene.corrs, s, index.knn(s, 40), nullptr, {0.1, 1.0}, 0.1);
      best = std::max(best, h.consensus);
    }
    CHECK(r.best_consensus == best);
  }
  SUBCASE("errors") {
    const auto scene = dsc::generate_scene({2, 0.0, 0.0, 3.0, 1});
    CHECK_THROWS_AS(dsc::register_correspondences(scene.corrs, nullptr, cfg), dsc::TooFewCorrespondences);
    std::vector<Correspondence> line;
    for (int i = 0; i < 10; ++i) line.emplace_back(Point3(i, 0, 0), Point3(i, 0, 0));
    CHECK_THROWS_AS(dsc::register_correspondences(line, nullptr, cfg), dsc::AllHypothesesDegenerate);
    cfg.tau = -1;
    CHECK_THROWS_AS(dsc::register_correspondences(line, nullptr, cfg), dsc::InvalidArgument);
  }
  SUBCASE("with a network") {
    dsc::EmbedConfig ec;
    ec.num_blocks = 1;
    ec.feature_dim = 8;
    const dsc::EmbeddingNetwork net(ec, 3);
    const auto scene = dsc::generate_scene({150, 0.5, 0.005, 3.0, 14});
    const auto r = dsc::register_correspondences(scene.corrs, &net, cfg);
    CHECK(r.labels.size() == 150);
    CHECK(r.transform.is_valid());
    const auto conf = dsc::seeding_confidences(scene.corrs, &net, cfg);
    CHECK(conf.size() == 150);
    cfg.spatial_only = true;
    CHECK(dsc::seeding_confidences(scene.corrs, &net, cfg).isOnes());
  }
}
