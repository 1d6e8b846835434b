// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "splitplan/split.hpp"
#include "splitplan/timing.hpp"

namespace splitplan {

std::string cut_kind_name(CutKind kind);

// Deterministic fixed-precision tables; identical inputs give identical bytes.
std::string profile_csv(const std::vector<ProfileRow>& rows);
std::string modules_csv(const std::vector<ModuleParams>& rows);
std::string sweep_csv(const std::vector<SweepPoint>& points, DataType dtype);

nlohmann::ordered_json profile_json(const ModelGraph& graph, const std::vector<ProfileRow>& rows,
                                    const std::vector<ModuleParams>& modules);
nlohmann::ordered_json plan_json(const ModelGraph& graph, const PlanResult& plan,
                                 const DeviceProfile& mobile, const DeviceProfile& edge,
                                 const ChannelModel& channel, DataType dtype, size_t top);

// Minimal self-contained SVG line charts (axes, ticks, polylines, legend).
// No timestamps or other run-varying content.
struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::optional<double> h_reference;  // dashed horizontal guide
  std::vector<SvgSeries> series;

  std::string render() const;
};

std::string profile_svg(const std::string& model, const std::vector<ProfileRow>& rows);
std::string sweep_svg(const std::string& model, const std::vector<SweepPoint>& points);

void write_text_file(const std::string& path, const std::string& content);

// Detector reference scores/runtimes shipped as data.
struct ReferenceRow {
  std::string detector;
  std::string backbone;
  double bbox_map = 0;
  std::optional<double> runtime_s;
};

std::vector<ReferenceRow> load_reference_table(const std::string& path);
std::string reference_csv(const std::vector<ReferenceRow>& rows);

// Built-in data directory: compiled-in default, overridable by the
// SPLITPLAN_DATA_DIR environment variable.
std::string data_dir();

}  // namespace splitplan
