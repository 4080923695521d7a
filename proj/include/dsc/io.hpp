#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsc/embed.hpp"
#include "dsc/geom.hpp"
#include "dsc/pipeline.hpp"

namespace dsc {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// ASCII XYZ (3 reals per line, '#' comments and blank lines skipped) or an
/// ASCII PLY with float/double x, y, z vertex properties. Binary PLY raises
/// UnsupportedFormat.
std::vector<Point3> read_point_cloud(const std::filesystem::path& path);
std::vector<Point3> parse_xyz(const std::string& text, const std::string& where = "<xyz>");
std::vector<Point3> parse_ply(const std::string& text, const std::string& where = "<ply>");

/// CSV rows x1,y1,z1,x2,y2,z2[,label]; optional header line.
std::vector<Correspondence> read_correspondences(const std::filesystem::path& path);
std::vector<Correspondence> parse_correspondences(const std::string& text, const std::string& where = "<csv>");

/// Writes the label column when every correspondence carries a gt_label.
void write_correspondences(const std::filesystem::path& path, std::span<const Correspondence> corrs);
std::string format_correspondences(std::span<const Correspondence> corrs);

void write_transform(const std::filesystem::path& path, const RigidTransform& t);
RigidTransform read_transform(const std::filesystem::path& path);

/// Registration outcome against a known truth, stored alongside a report.
struct ReportEvaluation {
  double re_deg = 0.0;
  double te = 0.0;
};

std::string report_to_json(const RegistrationReport& report, const ReportEvaluation* eval = nullptr);
RegistrationReport report_from_json(const std::string& text, const std::string& where = "<report>");
void write_report(const RegistrationReport& report, const std::filesystem::path& path,
                  const ReportEvaluation* eval = nullptr);
RegistrationReport read_report(const std::filesystem::path& path);

/// Configuration, every parameter tensor and the running statistics.
void save_weights(const EmbeddingNetwork& net, const std::filesystem::path& path);
EmbeddingNetwork load_weights(const std::filesystem::path& path);
std::string weights_to_json(const EmbeddingNetwork& net);
EmbeddingNetwork weights_from_json(const std::string& text, const std::string& where = "<weights>");

}  // namespace dsc
