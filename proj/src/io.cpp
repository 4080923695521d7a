#include "dsc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dsc/errors.hpp"

namespace dsc {

using json = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return lines;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> to_real(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

double real_or_throw(std::string_view token, const std::string& where, std::size_t line) {
  const auto v = to_real(token);
  if (!v) throw ParseError(where, line, "not a finite number: '" + std::string(token) + "'");
  return *v;
}

json transform_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  }
  json tr = json::array();
  for (int k = 0; k < 3; ++k) tr.push_back(t.translation(k));
  return json{{"rotation", rot}, {"translation", tr}};
}

RigidTransform transform_from(const json& doc, const std::string& where) {
  const json& rot = doc.at("rotation");
  const json& tr = doc.at("translation");
  if (!rot.is_array() || rot.size() != 9) throw ParseError(where, 0, "rotation must hold 9 numbers");
  if (!tr.is_array() || tr.size() != 3) throw ParseError(where, 0, "translation must hold 3 numbers");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot.at(static_cast<std::size_t>(3 * r + c)).get<double>();
  }
  for (int k = 0; k < 3; ++k) t.translation(k) = tr.at(static_cast<std::size_t>(k)).get<double>();
  return t;
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where, 0, e.what());
  }
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw InvalidArgument("format_real: conversion failed");
  return {buf, ptr};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Point3> parse_xyz(const std::string& text, const std::string& where) {
  std::vector<Point3> points;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_whitespace(line);
    if (fields.size() != 3) {
      throw ParseError(where, i + 1, "expected 3 coordinates, found " + std::to_string(fields.size()));
    }
    points.emplace_back(real_or_throw(fields[0], where, i + 1), real_or_throw(fields[1], where, i + 1),
                        real_or_throw(fields[2], where, i + 1));
  }
  return points;
}

std::vector<Point3> parse_ply(const std::string& text, const std::string& where) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]) != "ply") throw ParseError(where, 1, "missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false;
  std::size_t line_no = 1;
  bool header_done = false;
  while (line_no < lines.size()) {
    const std::string_view line = trim(lines[line_no]);
    ++line_no;
    const auto tok = split_whitespace(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError(where, line_no, "malformed format line");
      if (tok[1] == "binary_little_endian" || tok[1] == "binary_big_endian") {
        throw UnsupportedFormat(where + ": binary PLY is not supported");
      }
      if (tok[1] != "ascii") throw ParseError(where, line_no, "unknown PLY format '" + std::string(tok[1]) + "'");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(where, line_no, "malformed element line");
      std::size_t count = 0;
      const auto [ptr, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), count);
      if (ec != std::errc() || ptr != tok[2].data() + tok[2].size()) {
        throw ParseError(where, line_no, "bad element count '" + std::string(tok[2]) + "'");
      }
      elements.push_back({std::string(tok[1]), count, {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(where, line_no, "property before any element");
      if (tok.size() >= 2 && tok[1] == "list") {
        if (elements.back().name == "vertex") throw ParseError(where, line_no, "list properties on vertices are not supported");
        elements.back().props.emplace_back("list");
      } else {
        if (tok.size() != 3) throw ParseError(where, line_no, "malformed property line");
        elements.back().props.emplace_back(tok[2]);
      }
    } else {
      throw ParseError(where, line_no, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!header_done) throw ParseError(where, line_no, "missing end_header");
  if (!ascii) throw ParseError(where, 0, "missing format line");

  // Data lines of elements declared ahead of the vertices are skipped.
  std::size_t skip = 0;
  const Element* vertex = nullptr;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    skip += e.count;
  }
  if (!vertex) throw ParseError(where, 0, "no 'element vertex'");
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t p = 0; p < vertex->props.size(); ++p) {
    if (vertex->props[p] == "x") ix = static_cast<int>(p);
    if (vertex->props[p] == "y") iy = static_cast<int>(p);
    if (vertex->props[p] == "z") iz = static_cast<int>(p);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(where, 0, "vertex element lacks x, y or z");

  std::vector<Point3> points;
  points.reserve(vertex->count);
  while (points.size() < vertex->count) {
    if (line_no >= lines.size()) {
      throw ParseError(where, line_no, "expected " + std::to_string(vertex->count) + " vertices, found " +
                                           std::to_string(points.size()));
    }
    const std::string_view line = trim(lines[line_no]);
    ++line_no;
    if (line.empty()) continue;
    if (skip > 0) {
      --skip;
      continue;
    }
    const auto tok = split_whitespace(line);
    if (tok.size() < vertex->props.size()) {
      throw ParseError(where, line_no, "expected " + std::to_string(vertex->props.size()) + " values, found " +
                                           std::to_string(tok.size()));
    }
    points.emplace_back(real_or_throw(tok[static_cast<std::size_t>(ix)], where, line_no),
                        real_or_throw(tok[static_cast<std::size_t>(iy)], where, line_no),
                        real_or_throw(tok[static_cast<std::size_t>(iz)], where, line_no));
  }
  return points;
}

std::vector<Point3> read_point_cloud(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  const std::string where = path.string();
  if (text.rfind("ply", 0) == 0) return parse_ply(text, where);
  return parse_xyz(text, where);
}

std::vector<Correspondence> parse_correspondences(const std::string& text, const std::string& where) {
  std::vector<Correspondence> corrs;
  std::size_t columns = 0;
  bool first = true;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    const std::size_t line_no = i + 1;
    if (first) {
      first = false;
      if (!to_real(fields[0])) {
        static const std::vector<std::string_view> names{"x1", "y1", "z1", "x2", "y2", "z2", "label"};
        const bool ok = (fields.size() == 6 || fields.size() == 7) &&
                        std::equal(fields.begin(), fields.end(), names.begin());
        if (!ok) throw ParseError(where, line_no, "bad header, expected x1,y1,z1,x2,y2,z2[,label]");
        columns = fields.size();
        continue;
      }
    }
    if (fields.size() != 6 && fields.size() != 7) {
      throw ParseError(where, line_no, "expected 6 or 7 columns, found " + std::to_string(fields.size()));
    }
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns) {
      throw InconsistentColumns(where, line_no,
                                std::to_string(fields.size()) + " columns after rows of " + std::to_string(columns));
    }
    Correspondence c;
    for (int k = 0; k < 3; ++k) {
      c.src(k) = real_or_throw(fields[static_cast<std::size_t>(k)], where, line_no);
      c.dst(k) = real_or_throw(fields[static_cast<std::size_t>(k + 3)], where, line_no);
    }
    if (columns == 7) {
      if (fields[6] == "1") {
        c.gt_label = true;
      } else if (fields[6] == "0") {
        c.gt_label = false;
      } else {
        throw ParseError(where, line_no, "label must be 0 or 1, got '" + std::string(fields[6]) + "'");
      }
    }
    corrs.push_back(std::move(c));
  }
  return corrs;
}

std::vector<Correspondence> read_correspondences(const std::filesystem::path& path) {
  return parse_correspondences(read_text_file(path), path.string());
}

std::string format_correspondences(std::span<const Correspondence> corrs) {
  const bool labelled = !corrs.empty() && std::all_of(corrs.begin(), corrs.end(), [](const Correspondence& c) {
    return c.gt_label.has_value();
  });
  std::string out = labelled ? "x1,y1,z1,x2,y2,z2,label\n" : "x1,y1,z1,x2,y2,z2\n";
  for (const auto& c : corrs) {
    for (int k = 0; k < 3; ++k) out += format_real(c.src(k)) + ',';
    for (int k = 0; k < 3; ++k) out += format_real(c.dst(k)) + (k < 2 || labelled ? "," : "");
    if (labelled) out += *c.gt_label ? "1" : "0";
    out += '\n';
  }
  return out;
}

void write_correspondences(const std::filesystem::path& path, std::span<const Correspondence> corrs) {
  write_text_file(path, format_correspondences(corrs));
}

void write_transform(const std::filesystem::path& path, const RigidTransform& t) {
  write_text_file(path, transform_json(t).dump(2) + "\n");
}

RigidTransform read_transform(const std::filesystem::path& path) {
  const std::string where = path.string();
  const json doc = parse_json(read_text_file(path), where);
  try {
    return transform_from(doc, where);
  } catch (const json::exception& e) {
    throw ParseError(where, 0, e.what());
  }
}

std::string report_to_json(const RegistrationReport& report, const ReportEvaluation* eval) {
  json doc = transform_json(report.transform);
  json labels = json::array();
  for (bool l : report.labels) labels.push_back(l ? 1 : 0);
  doc["labels"] = std::move(labels);
  doc["best_seed"] = report.best_seed;
  doc["best_consensus"] = report.best_consensus;
  doc["hypotheses_evaluated"] = report.hypotheses_evaluated;
  doc["degenerate_hypotheses"] = report.degenerate_hypotheses;
  doc["seeds_selected"] = report.seeds_selected;
  doc["refine_iterations"] = report.refine_iterations;
  doc["inlier_count"] = report.inlier_count;
  doc["refine_degenerate"] = report.refine_degenerate;
  doc["refit_degenerate"] = report.refit_degenerate;
  const StageTimings& t = report.timing;
  doc["timing_ms"] = json{{"embed", t.embed_ms},           {"seeding", t.seeding_ms}, {"hypotheses", t.hypotheses_ms},
                          {"selection", t.selection_ms},   {"refine", t.refine_ms},   {"labeling", t.labeling_ms},
                          {"total", t.total_ms}};
  if (eval) doc["evaluation"] = json{{"re_deg", eval->re_deg}, {"te", eval->te}};
  return doc.dump(2) + "\n";
}

RegistrationReport report_from_json(const std::string& text, const std::string& where) {
  const json doc = parse_json(text, where);
  try {
    RegistrationReport r;
    r.transform = transform_from(doc, where);
    for (const auto& l : doc.at("labels")) {
      const int v = l.get<int>();
      if (v != 0 && v != 1) throw ParseError(where, 0, "labels must be 0 or 1");
      r.labels.push_back(v == 1);
    }
    r.best_seed = doc.at("best_seed").get<std::size_t>();
    r.best_consensus = doc.at("best_consensus").get<std::size_t>();
    r.hypotheses_evaluated = doc.at("hypotheses_evaluated").get<std::size_t>();
    r.degenerate_hypotheses = doc.at("degenerate_hypotheses").get<std::size_t>();
    r.seeds_selected = doc.at("seeds_selected").get<std::size_t>();
    r.refine_iterations = doc.at("refine_iterations").get<std::size_t>();
    r.inlier_count = doc.at("inlier_count").get<std::size_t>();
    r.refine_degenerate = doc.at("refine_degenerate").get<bool>();
    r.refit_degenerate = doc.at("refit_degenerate").get<bool>();
    const json& t = doc.at("timing_ms");
    r.timing = {t.at("embed").get<double>(),     t.at("seeding").get<double>(), t.at("hypotheses").get<double>(),
                t.at("selection").get<double>(), t.at("refine").get<double>(),  t.at("labeling").get<double>(),
                t.at("total").get<double>()};
    return r;
  } catch (const json::exception& e) {
    throw ParseError(where, 0, e.what());
  }
}

void write_report(const RegistrationReport& report, const std::filesystem::path& path, const ReportEvaluation* eval) {
  write_text_file(path, report_to_json(report, eval));
}

RegistrationReport read_report(const std::filesystem::path& path) {
  return report_from_json(read_text_file(path), path.string());
}

std::string weights_to_json(const EmbeddingNetwork& net) {
  const EmbedConfig& c = net.config();
  json doc;
  doc["format"] = "dscreg-weights";
  doc["version"] = 1;
  doc["config"] = json{{"num_blocks", c.num_blocks},
                       {"feature_dim", c.feature_dim},
                       {"use_normalization", c.use_normalization},
                       {"sigma_f_init", c.sigma_f_init},
                       {"learn_sigma_f", c.learn_sigma_f}};
  json tensors = json::array();
  auto add = [&](const std::string& name, const Matrix& m) {
    json values = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) values.push_back(m(r, k));
    }
    tensors.push_back(json{{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", std::move(values)}});
  };
  net.params().visit(add);
  for (std::size_t b = 0; b < net.running_stats().size(); ++b) {
    add("block" + std::to_string(b) + ".running_mean", net.running_stats()[b].mean);
    add("block" + std::to_string(b) + ".running_var", net.running_stats()[b].var);
  }
  doc["tensors"] = std::move(tensors);
  return doc.dump() + "\n";
}

EmbeddingNetwork weights_from_json(const std::string& text, const std::string& where) {
  const json doc = parse_json(text, where);
  try {
    if (doc.at("format").get<std::string>() != "dscreg-weights") throw ParseError(where, 0, "not a weights file");
    const json& c = doc.at("config");
    EmbedConfig config;
    config.num_blocks = c.at("num_blocks").get<int>();
    config.feature_dim = c.at("feature_dim").get<int>();
    config.use_normalization = c.at("use_normalization").get<bool>();
    config.sigma_f_init = c.at("sigma_f_init").get<double>();
    config.learn_sigma_f = c.at("learn_sigma_f").get<bool>();
    try {
      config.validate();
    } catch (const InvalidArgument& e) {
      throw ParseError(where, 0, e.what());
    }
    EmbeddingNetwork net = EmbeddingNetwork::empty(config);

    std::vector<std::pair<std::string, Matrix*>> slots;
    net.params().visit([&](const std::string& name, Matrix& m) { slots.emplace_back(name, &m); });
    for (std::size_t b = 0; b < net.running_stats().size(); ++b) {
      slots.emplace_back("block" + std::to_string(b) + ".running_mean", &net.running_stats()[b].mean);
      slots.emplace_back("block" + std::to_string(b) + ".running_var", &net.running_stats()[b].var);
    }
    const json& tensors = doc.at("tensors");
    if (tensors.size() != slots.size()) {
      throw ParseError(where, 0, "expected " + std::to_string(slots.size()) + " tensors, found " +
                                     std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const json& t = tensors[i];
      auto& [name, target] = slots[i];
      if (t.at("name").get<std::string>() != name) {
        throw ParseError(where, 0, "tensor " + std::to_string(i) + " should be '" + name + "'");
      }
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      const json& values = t.at("values");
      if (rows != target->rows() || cols != target->cols() || values.size() != static_cast<std::size_t>(rows * cols)) {
        throw ParseError(where, 0, "tensor '" + name + "' has the wrong shape");
      }
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index k = 0; k < cols; ++k) (*target)(r, k) = values[static_cast<std::size_t>(r * cols + k)].get<double>();
      }
    }
    return net;
  } catch (const json::exception& e) {
    throw ParseError(where, 0, e.what());
  }
}

void save_weights(const EmbeddingNetwork& net, const std::filesystem::path& path) {
  write_text_file(path, weights_to_json(net));
}

EmbeddingNetwork load_weights(const std::filesystem::path& path) {
  return weights_from_json(read_text_file(path), path.string());
}

}  // namespace dsc
