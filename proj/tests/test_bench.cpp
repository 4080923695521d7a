#include <doctest.h>

#include <filesystem>
#include <json.hpp>

#include "dsc/bench.hpp"
#include "dsc/errors.hpp"
#include "dsc/io.hpp"

using dsc::EvalCase;
using dsc::MethodSpec;
using dsc::RigidTransform;

namespace {

bool same(const dsc::EstimateResult& a, const dsc::EstimateResult& b) {
  return a.transform.rotation == b.transform.rotation && a.transform.translation == b.transform.translation &&
         a.labels == b.labels && a.consensus == b.consensus && a.best_iteration == b.best_iteration;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dsc_test_bench";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("ransac") {
  SUBCASE("all-inlier noiseless") {
    const auto scene = dsc::generate_scene({100, 0.0, 0.0, 3.0, 1});
    const auto r = dsc::ransac(scene.corrs, 10, 0.1, 0);
    CHECK(dsc::rotation_error(r.transform, scene.truth) < 1e-6);
    CHECK(r.consensus == 100);
    CHECK(r.best_iteration == 0);
  }
  SUBCASE("deterministic per seed") {
    const auto scene = dsc::generate_scene({300, 0.8, 0.005, 3.0, 2});
    CHECK(same(dsc::ransac(scene.corrs, 200, 0.1, 9), dsc::ransac(scene.corrs, 200, 0.1, 9)));
  }
  SUBCASE("moderate outliers") {
    const auto scene = dsc::generate_scene({300, 0.5, 0.005, 3.0, 3});
    const auto r = dsc::ransac(scene.corrs, 500, 0.1, 3);
    CHECK(dsc::rad_to_deg(dsc::rotation_error(r.transform, scene.truth)) < 2.0);
    CHECK(r.labels == dsc::ground_truth_labels(scene.corrs, r.transform, 0.1));
  }
  SUBCASE("errors") {
    std::vector<dsc::Correspondence> line;
    for (int i = 0; i < 10; ++i) line.emplace_back(dsc::Point3(i, 0, 0), dsc::Point3(i, 0, 0));
    CHECK_THROWS_AS(dsc::ransac(line, 50, 0.1, 0), dsc::AllSamplesDegenerate);
    CHECK_THROWS_AS(dsc::ransac(std::span(line).first(2), 50, 0.1, 0), dsc::TooFewCorrespondences);
    CHECK_THROWS_AS(dsc::ransac(line, 0, 0.1, 0), dsc::InvalidArgument);
  }
}

TEST_CASE("prioritized_ransac") {
  const auto scene = dsc::generate_scene({400, 0.9, 0.005, 3.0, 4});
  SUBCASE("uniform confidences reproduce ransac") {
    const std::vector<double> flat(400, 0.3);
    CHECK(same(dsc::prioritized_ransac(scene.corrs, flat, 100, 0.1, 5), dsc::ransac(scene.corrs, 100, 0.1, 5)));
  }
  SUBCASE("label confidences sample inliers only") {
    std::vector<double> conf;
    for (const auto& c : scene.corrs) conf.push_back(*c.gt_label ? 1.0 : 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = dsc::prioritized_ransac(scene.corrs, conf, 5, 0.1, seed);
      CHECK(dsc::rad_to_deg(dsc::rotation_error(r.transform, scene.truth)) < 2.0);
    }
  }
  SUBCASE("bad confidences") {
    std::vector<double> conf(400, 1.0);
    conf[3] = -1.0;
    CHECK_THROWS_AS(dsc::prioritized_ransac(scene.corrs, conf, 5, 0.1, 0), dsc::InvalidArgument);
    conf[3] = std::nan("");
    CHECK_THROWS_AS(dsc::prioritized_ransac(scene.corrs, conf, 5, 0.1, 0), dsc::InvalidArgument);
    CHECK_THROWS_AS(dsc::prioritized_ransac(scene.corrs, std::vector<double>(3, 1.0), 5, 0.1, 0), dsc::InvalidArgument);
  }
  SUBCASE("fewer than three positive weights fall back to uniform") {
    std::vector<double> conf(400, 0.0);
    conf[0] = 1.0;
    CHECK(same(dsc::prioritized_ransac(scene.corrs, conf, 50, 0.1, 6), dsc::ransac(scene.corrs, 50, 0.1, 6)));
  }
}

TEST_CASE("evaluate") {
  const RigidTransform truth = RigidTransform::from_axis_angle(Eigen::Vector3d(0, 0, 1), 0.3, {0.1, 0.2, 0.3});

  SUBCASE("perfect pair") {
    const std::vector<EvalCase> cases{{truth, {true, true, false}, {true, true, false}, truth}};
    const auto m = dsc::evaluate(cases);
    CHECK(m.pairs == 1);
    CHECK(m.successes == 1);
    CHECK(m.registration_recall == 1.0);
    CHECK(m.inlier_precision == 1.0);
    CHECK(m.inlier_recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.mean_re == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.mean_te == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("nothing kept") {
    const std::vector<EvalCase> cases{{truth, {false, false}, {true, false}, truth}};
    const auto m = dsc::evaluate(cases);
    CHECK(m.inlier_precision == 0.0);
    CHECK(m.inlier_recall == 0.0);
    CHECK(m.f1 == 0.0);
  }
  SUBCASE("recall and means over successes") {
    const RigidTransform one_degree = RigidTransform::from_axis_angle(Eigen::Vector3d(1, 0, 0), dsc::deg_to_rad(1.0)).compose(truth);
    const RigidTransform off = RigidTransform::from_axis_angle(Eigen::Vector3d(1, 0, 0), dsc::deg_to_rad(40.0)).compose(truth);
    const std::vector<EvalCase> cases{{one_degree, {true, false}, {true, true}, truth},
                                      {off, {true, true}, {true, true}, truth}};
    const auto m = dsc::evaluate(cases);
    CHECK(m.successes == 1);
    CHECK(m.registration_recall == 0.5);
    CHECK(dsc::rad_to_deg(m.mean_re) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.inlier_precision == 1.0);
    CHECK(m.inlier_recall == doctest::Approx(0.75));
    CHECK(m.f1 == doctest::Approx(2 * 0.75 / 1.75));
  }
  SUBCASE("thresholds are strict") {
    RigidTransform shifted;
    shifted.translation = Eigen::Vector3d(0.30, 0, 0);
    const std::vector<EvalCase> cases{{shifted, {true}, {true}, RigidTransform::identity()}};
    CHECK(dsc::evaluate(cases).successes == 0);
    CHECK(dsc::evaluate(cases, dsc::deg_to_rad(15), 0.31).successes == 1);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(dsc::evaluate(std::vector<EvalCase>{}), dsc::InvalidArgument);
  }
}

TEST_CASE("method specs") {
  CHECK(MethodSpec::parse("pipeline").kind == MethodSpec::Kind::pipeline);
  CHECK(MethodSpec::parse("sm").kind == MethodSpec::Kind::sm);
  const auto r = MethodSpec::parse("ransac:1000");
  CHECK(r.kind == MethodSpec::Kind::ransac);
  CHECK(r.iterations == 1000);
  CHECK(r.name() == "ransac:1000");
  CHECK(MethodSpec::parse("pransac:7").name() == "pransac:7");
  for (const char* bad : {"ransac", "ransac:", "ransac:0", "ransac:-3", "ransac:1e3", "icp", "sm:5", ""}) {
    CHECK_THROWS_AS(MethodSpec::parse(bad), dsc::InvalidArgument);
  }
  const auto list = dsc::parse_methods("pipeline,sm,ransac:10");
  REQUIRE(list.size() == 3);
  CHECK(list[2].iterations == 10);
  CHECK_THROWS_AS(dsc::parse_methods("pipeline,,sm"), dsc::InvalidArgument);
}

TEST_CASE("run_benchmark") {
  dsc::BenchmarkConfig cfg;
  cfg.scenes = 4;
  cfg.scene = {300, 0.8, 0.005, 3.0, 20};
  cfg.methods = dsc::parse_methods("pipeline,sm,ransac:200,pransac:200");
  const auto result = dsc::run_benchmark(cfg);
  REQUIRE(result.rows.size() == 16);
  REQUIRE(result.summaries.size() == 4);
  CHECK(result.rows[0].scene_seed == 20);
  CHECK(result.rows[4].scene_seed == 21);
  CHECK(result.rows[5].method == "sm");
  CHECK(result.summaries[0].method == "pipeline");
  CHECK(result.summaries[0].metrics.pairs == 4);
  CHECK(result.summaries[0].metrics.registration_recall == 1.0);

  ::setenv("DSC_THREADS", "1", 1);
  const auto serial = dsc::run_benchmark(cfg);
  ::unsetenv("DSC_THREADS");
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    CHECK(serial.rows[i].re_deg == result.rows[i].re_deg);
    CHECK(serial.rows[i].consensus == result.rows[i].consensus);
  }

  const auto csv = scratch("results.csv");
  const auto json_path = scratch("summary.json");
  dsc::write_results_csv(result, csv);
  dsc::write_summary_json(result, cfg, json_path);
  const std::string text = dsc::read_text_file(csv);
  CHECK(text.rfind("scene_seed,method,re_deg,te,consensus,runtime_ms\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 17);
  const auto summary = nlohmann::json::parse(dsc::read_text_file(json_path));
  CHECK(summary["scenes"] == 4);
  CHECK(summary["re_thresh_deg"] == 15.0);
  CHECK(summary["methods"].size() == 4);
  CHECK(summary["methods"][0]["method"] == "pipeline");

  cfg.methods.clear();
  CHECK_THROWS_AS(dsc::run_benchmark(cfg), dsc::InvalidArgument);
}
