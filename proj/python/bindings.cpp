#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dsc/bench.hpp"
#include "dsc/consistency.hpp"
#include "dsc/errors.hpp"
#include "dsc/geom.hpp"
#include "dsc/io.hpp"
#include "dsc/pipeline.hpp"
#include "dsc/scene.hpp"
#include "dsc/spectral.hpp"

namespace py = pybind11;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<dsc::Correspondence> to_corrs(const Points& src, const Points& dst) {
  if (src.rows() != dst.rows()) throw dsc::InvalidArgument("src and dst must have the same number of rows");
  std::vector<dsc::Correspondence> out;
  out.reserve(static_cast<std::size_t>(src.rows()));
  for (Eigen::Index i = 0; i < src.rows(); ++i) out.emplace_back(src.row(i).transpose(), dst.row(i).transpose());
  return out;
}

Points stack(const std::vector<dsc::Correspondence>& corrs, bool source) {
  Points p(static_cast<Eigen::Index>(corrs.size()), 3);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = (source ? corrs[i].src : corrs[i].dst).transpose();
  }
  return p;
}

py::dict scene_dict(const dsc::Scene& scene) {
  std::vector<bool> labels;
  labels.reserve(scene.corrs.size());
  for (const auto& c : scene.corrs) labels.push_back(c.gt_label.value_or(false));
  py::dict d;
  d["src"] = stack(scene.corrs, true);
  d["dst"] = stack(scene.corrs, false);
  d["labels"] = labels;
  d["truth"] = scene.truth;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Seeded spectral-matching rigid registration";

  const auto error = py::register_exception<dsc::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<dsc::DegenerateConfiguration>(m, "DegenerateConfiguration", error.ptr());
  py::register_exception<dsc::AllHypothesesDegenerate>(m, "AllHypothesesDegenerate", error.ptr());
  py::register_exception<dsc::ParseError>(m, "ParseError", error.ptr());
  py::register_exception<dsc::InvalidArgument>(m, "InvalidArgument", error.ptr());

  py::class_<dsc::RigidTransform>(m, "RigidTransform")
      .def(py::init<>())
      .def(py::init([](const Eigen::Matrix3d& r, const Eigen::Vector3d& t) { return dsc::RigidTransform{r, t}; }),
           py::arg("rotation"), py::arg("translation"))
      .def_static("from_axis_angle", &dsc::RigidTransform::from_axis_angle, py::arg("axis"), py::arg("angle"),
                  py::arg("translation") = Eigen::Vector3d::Zero())
      .def_readwrite("rotation", &dsc::RigidTransform::rotation)
      .def_readwrite("translation", &dsc::RigidTransform::translation)
      .def("inverse", &dsc::RigidTransform::inverse)
      .def("compose", &dsc::RigidTransform::compose, py::arg("first"))
      .def("is_valid", &dsc::RigidTransform::is_valid, py::arg("tol") = 1e-9)
      .def("apply", [](const dsc::RigidTransform& t, const Points& p) {
        Points out(p.rows(), 3);
        for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = t(p.row(i).transpose()).transpose();
        return out;
      });

  py::class_<dsc::RegistrationReport>(m, "RegistrationReport")
      .def_readonly("transform", &dsc::RegistrationReport::transform)
      .def_readonly("labels", &dsc::RegistrationReport::labels)
      .def_readonly("best_seed", &dsc::RegistrationReport::best_seed)
      .def_readonly("best_consensus", &dsc::RegistrationReport::best_consensus)
      .def_readonly("hypotheses_evaluated", &dsc::RegistrationReport::hypotheses_evaluated)
      .def_readonly("seeds_selected", &dsc::RegistrationReport::seeds_selected)
      .def_readonly("refine_iterations", &dsc::RegistrationReport::refine_iterations)
      .def_readonly("inlier_count", &dsc::RegistrationReport::inlier_count)
      .def("to_json", [](const dsc::RegistrationReport& r) { return dsc::report_to_json(r); });

  m.def(
      "weighted_kabsch",
      [](const Points& src, const Points& dst, const std::optional<std::vector<double>>& weights) {
        const auto corrs = to_corrs(src, dst);
        return weights ? dsc::weighted_kabsch(corrs, *weights) : dsc::kabsch(corrs);
      },
      py::arg("src"), py::arg("dst"), py::arg("weights") = py::none());

  m.def("rotation_error", &dsc::rotation_error, py::arg("estimate"), py::arg("truth"));
  m.def("translation_error", &dsc::translation_error, py::arg("estimate"), py::arg("truth"));

  m.def(
      "compatibility_matrix",
      [](const Points& src, const Points& dst, double sigma_d, const std::optional<dsc::Matrix>& feats, double sigma_f) {
        const auto corrs = to_corrs(src, dst);
        return dsc::compatibility_matrix(corrs, feats ? &*feats : nullptr, {sigma_d, sigma_f}).entries;
      },
      py::arg("src"), py::arg("dst"), py::arg("sigma_d") = 0.10, py::arg("feats") = py::none(), py::arg("sigma_f") = 1.0);

  m.def(
      "leading_eigenvector",
      [](const dsc::Matrix& mat, double tol, int max_iter) {
        const dsc::EigenResult r = dsc::leading_eigenvector(mat, {tol, max_iter});
        return py::make_tuple(r.vector, r.iterations, r.converged);
      },
      py::arg("m"), py::arg("tol") = 1e-6, py::arg("max_iter") = 50);

  m.def(
      "generate_scene",
      [](std::size_t n, double outlier_ratio, double noise, std::uint64_t seed, double extent) {
        return scene_dict(dsc::generate_scene({n, outlier_ratio, noise, extent, seed}));
      },
      py::arg("n") = 1000, py::arg("outlier_ratio") = 0.9, py::arg("noise") = 0.005, py::arg("seed") = 0,
      py::arg("extent") = 3.0);

  m.def(
      "register",
      [](const Points& src, const Points& dst, double tau, std::size_t k, double seed_fraction,
         std::optional<double> sigma_d, const std::optional<std::string>& weights, bool spatial_only) {
        dsc::PipelineConfig cfg;
        cfg.tau = tau;
        cfg.k_subset = k;
        cfg.seed_fraction = seed_fraction;
        cfg.sigma_d = sigma_d;
        cfg.spatial_only = spatial_only;
        const auto corrs = to_corrs(src, dst);
        std::optional<dsc::EmbeddingNetwork> net;
        if (weights) net = dsc::load_weights(*weights);
        py::gil_scoped_release release;
        return dsc::register_correspondences(corrs, net ? &*net : nullptr, cfg);
      },
      py::arg("src"), py::arg("dst"), py::arg("tau") = 0.10, py::arg("k") = 40, py::arg("seed_fraction") = 0.10,
      py::arg("sigma_d") = py::none(), py::arg("weights") = py::none(), py::arg("spatial_only") = false);

  m.def(
      "spectral_matching",
      [](const Points& src, const Points& dst, double sigma_d, double keep_fraction) {
        const auto r = dsc::traditional_sm(to_corrs(src, dst), sigma_d, keep_fraction);
        return py::make_tuple(r.transform, r.labels);
      },
      py::arg("src"), py::arg("dst"), py::arg("sigma_d") = 0.10, py::arg("keep_fraction") = 0.10);

  m.def(
      "ransac",
      [](const Points& src, const Points& dst, std::size_t iterations, double tau, std::uint64_t seed,
         const std::optional<std::vector<double>>& confidences) {
        const auto corrs = to_corrs(src, dst);
        const dsc::EstimateResult r = confidences ? dsc::prioritized_ransac(corrs, *confidences, iterations, tau, seed)
                                                  : dsc::ransac(corrs, iterations, tau, seed);
        return py::make_tuple(r.transform, r.labels);
      },
      py::arg("src"), py::arg("dst"), py::arg("iterations") = 1000, py::arg("tau") = 0.10, py::arg("seed") = 0,
      py::arg("confidences") = py::none());

  m.def(
      "read_correspondences",
      [](const std::string& path) {
        const auto corrs = dsc::read_correspondences(path);
        return py::make_tuple(stack(corrs, true), stack(corrs, false));
      },
      py::arg("path"));

  m.def(
      "read_point_cloud",
      [](const std::string& path) {
        const auto pts = dsc::read_point_cloud(path);
        Points out(static_cast<Eigen::Index>(pts.size()), 3);
        for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
        return out;
      },
      py::arg("path"));

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "0.1.0";
#endif
}
