#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <random>

#include "dsc/errors.hpp"
#include "dsc/io.hpp"
#include "dsc/scene.hpp"

using dsc::Correspondence;
using dsc::Point3;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dsc_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::size_t error_line(const std::string& text) {
  try {
    dsc::parse_correspondences(text);
  } catch (const dsc::ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("format_real round-trips") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
    CHECK(std::stod(dsc::format_real(v)) == v);
  }
  CHECK(dsc::format_real(0.1) == "0.1");
  CHECK(dsc::format_real(-2.0) == "-2");
}

TEST_CASE("xyz point clouds") {
  const auto pts = dsc::parse_xyz("# comment\n1 2 3\n\n  4.5\t-6 7e-1  \r\n");
  REQUIRE(pts.size() == 2);
  CHECK(pts[0] == Point3(1, 2, 3));
  CHECK(pts[1] == Point3(4.5, -6, 0.7));
  CHECK(dsc::parse_xyz("").empty());

  try {
    dsc::parse_xyz("1 2 3\n1 2\n");
    FAIL("expected a parse error");
  } catch (const dsc::ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(dsc::parse_xyz("1 2 3 4\n"), dsc::ParseError);
  CHECK_THROWS_AS(dsc::parse_xyz("1 2 nan\n"), dsc::ParseError);
  CHECK_THROWS_AS(dsc::parse_xyz("1 2 x\n"), dsc::ParseError);
}

TEST_CASE("ply point clouds") {
  const std::string ply =
      "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float y\nproperty float x\n"
      "property uchar red\nproperty double z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n"
      "2 1 255 3\n5 4 0 6\n";
  const auto pts = dsc::parse_ply(ply);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0] == Point3(1, 2, 3));
  CHECK(pts[1] == Point3(4, 5, 6));

  const std::string other_first =
      "ply\nformat ascii 1.0\nelement camera 1\nproperty float f\nelement vertex 1\nproperty float x\n"
      "property float y\nproperty float z\nend_header\n9\n1 2 3\n";
  CHECK(dsc::parse_ply(other_first) == std::vector<Point3>{Point3(1, 2, 3)});

  CHECK_THROWS_AS(dsc::parse_ply("ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n"),
                  dsc::UnsupportedFormat);
  CHECK_THROWS_AS(dsc::parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n"),
                  dsc::ParseError);
  CHECK_THROWS_AS(dsc::parse_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                                 "property float z\nend_header\n1 2 3\n"),
                  dsc::ParseError);
  CHECK_THROWS_AS(dsc::parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"),
                  dsc::ParseError);

  const auto path = scratch("cloud.ply");
  dsc::write_text_file(path, ply);
  CHECK(dsc::read_point_cloud(path).size() == 2);
  const auto xyz = scratch("cloud.xyz");
  dsc::write_text_file(xyz, "0 0 0\n");
  CHECK(dsc::read_point_cloud(xyz).size() == 1);
  CHECK_THROWS_AS(dsc::read_point_cloud(scratch("missing.xyz")), dsc::IoError);
}

TEST_CASE("correspondence csv") {
  const auto six = dsc::parse_correspondences("0,0,0,1,1,1\n1,2,3,4,5,6\n");
  REQUIRE(six.size() == 2);
  CHECK(six[1].dst == Point3(4, 5, 6));
  CHECK_FALSE(six[0].gt_label.has_value());

  const auto seven = dsc::parse_correspondences("x1,y1,z1,x2,y2,z2,label\n0,0,0,1,1,1,1\n1,2,3,4,5,6,0\n");
  REQUIRE(seven.size() == 2);
  CHECK(*seven[0].gt_label);
  CHECK_FALSE(*seven[1].gt_label);

  CHECK(dsc::parse_correspondences("x1,y1,z1,x2,y2,z2\n").empty());
  CHECK_THROWS_AS(dsc::parse_correspondences("0,0,0,1,1,1\n0,0,0,1,1,1,1\n"), dsc::InconsistentColumns);
  CHECK(error_line("0,0,0,1,1,1\n0,0,0,1,1,1,1\n") == 2);
  CHECK(error_line("0,0,0,1,1\n") == 1);
  CHECK(error_line("0,0,0,1,1,1,2\n") == 1);
  CHECK(error_line("0,0,0,1,1,1\n\n0,0,zz,1,1,1\n") == 3);
  CHECK(error_line("a,b,c,d,e,f\n") == 1);
  CHECK_THROWS_AS(dsc::parse_correspondences("x1,y1,z1,x2,y2,z2\n0,0,0,1,1,1,1\n"), dsc::InconsistentColumns);

  const auto scene = dsc::generate_scene({50, 0.5, 0.01, 3.0, 2});
  const auto path = scratch("corrs.csv");
  dsc::write_correspondences(path, scene.corrs);
  const auto back = dsc::read_correspondences(path);
  REQUIRE(back.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(back[i].src == scene.corrs[i].src);
    CHECK(back[i].dst == scene.corrs[i].dst);
    CHECK(back[i].gt_label == scene.corrs[i].gt_label);
  }
  std::vector<Correspondence> unlabelled(scene.corrs.begin(), scene.corrs.end());
  unlabelled[3].gt_label.reset();
  CHECK(dsc::format_correspondences(unlabelled).rfind("x1,y1,z1,x2,y2,z2\n", 0) == 0);
}

TEST_CASE("transform json") {
  const auto t = dsc::RigidTransform::from_axis_angle(Eigen::Vector3d(1, 2, 3).normalized(), 1.234, {0.1, -0.2, 1e-17});
  const auto path = scratch("t.json");
  dsc::write_transform(path, t);
  const auto back = dsc::read_transform(path);
  CHECK(back.rotation == t.rotation);
  CHECK(back.translation == t.translation);
  dsc::write_text_file(path, R"({"rotation":[1,0,0],"translation":[0,0,0]})");
  CHECK_THROWS_AS(dsc::read_transform(path), dsc::ParseError);
  dsc::write_text_file(path, "{");
  CHECK_THROWS_AS(dsc::read_transform(path), dsc::ParseError);
}

TEST_CASE("report json") {
  const auto scene = dsc::generate_scene({300, 0.8, 0.005, 3.0, 3});
  const auto report = dsc::register_correspondences(scene.corrs, nullptr, {});
  const dsc::ReportEvaluation eval{0.5, 0.01};
  const auto path = scratch("report.json");
  dsc::write_report(report, path, &eval);
  const auto back = dsc::read_report(path);
  CHECK((back.transform.rotation - report.transform.rotation).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((back.transform.translation - report.transform.translation).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(back.labels == report.labels);
  CHECK(back.best_seed == report.best_seed);
  CHECK(back.best_consensus == report.best_consensus);
  CHECK(back.hypotheses_evaluated == report.hypotheses_evaluated);
  CHECK(back.refine_iterations == report.refine_iterations);
  CHECK(back.inlier_count == report.inlier_count);

  const auto doc = nlohmann::json::parse(dsc::read_text_file(path));
  CHECK(doc["evaluation"]["re_deg"] == 0.5);
  CHECK(doc["rotation"].size() == 9);
  CHECK(doc["timing_ms"].contains("total"));

  dsc::RegistrationReport identity;
  identity.labels = {true, false};
  const auto id_back = dsc::report_from_json(dsc::report_to_json(identity));
  CHECK(id_back.transform.rotation == Eigen::Matrix3d::Identity());
  CHECK(id_back.transform.translation == Eigen::Vector3d::Zero());
  CHECK(id_back.labels == identity.labels);
  CHECK_FALSE(nlohmann::json::parse(dsc::report_to_json(identity)).contains("evaluation"));

  CHECK_THROWS_AS(dsc::report_from_json("[]"), dsc::ParseError);
  CHECK_THROWS_AS(dsc::report_from_json("not json"), dsc::ParseError);
}

TEST_CASE("weights json") {
  dsc::EmbedConfig cfg;
  cfg.num_blocks = 2;
  cfg.feature_dim = 6;
  dsc::EmbeddingNetwork net(cfg, 4);
  net.running_stats()[1].mean.setConstant(0.25);
  const auto path = scratch("w.json");
  dsc::save_weights(net, path);
  const auto back = dsc::load_weights(path);
  CHECK(back.config() == cfg);
  std::vector<const dsc::Matrix*> a;
  std::vector<const dsc::Matrix*> b;
  net.params().visit([&](const std::string&, const dsc::Matrix& m) { a.push_back(&m); });
  back.params().visit([&](const std::string&, const dsc::Matrix& m) { b.push_back(&m); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  CHECK(back.running_stats()[1].mean == net.running_stats()[1].mean);

  // Identical forward output after the round trip.
  const auto scene = dsc::generate_scene({40, 0.5, 0.01, 3.0, 5});
  CHECK(dsc::forward(net, scene.corrs, 0.1).confidences == dsc::forward(back, scene.corrs, 0.1).confidences);

  auto doc = nlohmann::json::parse(dsc::weights_to_json(net));
  doc["tensors"][0]["shape"][0] = 99;
  CHECK_THROWS_AS(dsc::weights_from_json(doc.dump()), dsc::ParseError);
  doc = nlohmann::json::parse(dsc::weights_to_json(net));
  doc["tensors"][1]["name"] = "bogus";
  CHECK_THROWS_AS(dsc::weights_from_json(doc.dump()), dsc::ParseError);
  doc = nlohmann::json::parse(dsc::weights_to_json(net));
  doc["config"]["feature_dim"] = 0;
  CHECK_THROWS_AS(dsc::weights_from_json(doc.dump()), dsc::ParseError);
  doc["format"] = "other";
  CHECK_THROWS_AS(dsc::weights_from_json(doc.dump()), dsc::ParseError);
}
