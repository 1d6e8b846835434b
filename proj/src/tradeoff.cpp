// SPDX-License-Identifier: Apache-2.0

#include "splitplan/tradeoff.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "splitplan/errors.hpp"
#include "splitplan/report.hpp"

namespace splitplan {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_map(const std::string& text, const std::string& where) {
  char* rest = nullptr;
  double v = std::strtod(text.c_str(), &rest);
  if (rest == text.c_str() || *rest != '\0' || v < 0 || v > 1)
    throw DataError(where + ": score '" + text + "' not in [0,1]");
  return v;
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace

std::vector<MapDataRow> load_map_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score data: " + path);

  std::string line;
  size_t lineno = 0;
  bool saw_header = false;
  std::vector<MapDataRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = path + " line " + std::to_string(lineno);
    std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    std::vector<std::string> f = split_csv_line(line);
    if (!saw_header) {
      if (f != std::vector<std::string>{"model", "c", "bbox_map", "mask_map", "source"})
        throw DataError(where + ": header must be model,c,bbox_map,mask_map,source");
      saw_header = true;
      continue;
    }
    if (f.size() != 5) throw DataError(where + ": expected 5 fields, got " +
                                       std::to_string(f.size()));
    MapDataRow row;
    row.model = f[0];
    if (row.model.empty()) throw DataError(where + ": empty model");
    if (f[1] == "original") {
      row.original = true;
    } else {
      char* rest = nullptr;
      long c = std::strtol(f[1].c_str(), &rest, 10);
      if (rest == f[1].c_str() || *rest != '\0' || c <= 0)
        throw DataError(where + ": c must be a positive integer or 'original'");
      row.c = static_cast<int>(c);
    }
    row.bbox_map = parse_map(f[2], where);
    if (!f[3].empty()) row.mask_map = parse_map(f[3], where);
    row.source = f[4];
    if (row.source.empty()) throw DataError(where + ": source column is mandatory");
    rows.push_back(std::move(row));
  }
  return rows;
}

TradeoffReport build_tradeoff(const ModelSpec& base, const std::vector<int>& c_list,
                              int divisor, const TensorShape& input_shape,
                              const std::vector<MapDataRow>& map_rows) {
  if (c_list.empty()) throw DataError("tradeoff: empty channel list");
  ModelSpec spec = base;
  spec.bottleneck.reset();
  TradeoffReport report;
  report.model = spec.canonical_name();
  report.input_shape = input_shape;
  report.divisor = divisor;

  for (const MapDataRow& r : map_rows) {
    if (r.model != report.model || !r.original) continue;
    report.original_bbox_map = r.bbox_map;
    report.original_mask_map = r.mask_map;
    report.original_source = r.source;
  }

  double input_elements = static_cast<double>(input_shape.elements());
  for (int c : c_list) {
    BottleneckConfig config{c, divisor};
    config.validate();
    ModelGraph graph =
        inject_bottleneck(build_detector(spec.backbone, spec.kind, input_shape), config);
    ShapeMap shapes = infer_shapes(graph);

    std::string bneck;
    for (const Node& n : graph.nodes())
      if (n.preferred_split) bneck = n.id;
    if (bneck.empty()) throw StructuralError("tradeoff: no designated bottleneck node");

    TradeoffPoint point;
    point.config = config;
    point.size_ratio =
        static_cast<double>(output_elements(shapes, bneck)) / input_elements;
    for (const MapDataRow& r : map_rows) {
      if (r.model != report.model || r.original || r.c != c) continue;
      point.bbox_map = r.bbox_map;
      point.mask_map = r.mask_map;
      point.source = r.source;
    }
    report.points.push_back(std::move(point));
  }
  return report;
}

std::string tradeoff_csv(const TradeoffReport& report) {
  std::string out = "c,size_ratio,bbox_map,mask_map,source\n";
  for (const TradeoffPoint& p : report.points) {
    out += std::to_string(p.config.out_channels) + "," + fmt(p.size_ratio, 6) + ",";
    if (p.bbox_map) out += fmt(*p.bbox_map, 3);
    out += ",";
    if (p.mask_map) out += fmt(*p.mask_map, 3);
    out += "," + p.source + "\n";
  }
  if (report.original_bbox_map) {
    out += "original,," + fmt(*report.original_bbox_map, 3) + ",";
    if (report.original_mask_map) out += fmt(*report.original_mask_map, 3);
    out += "," + report.original_source + "\n";
  }
  return out;
}

std::string tradeoff_svg(const TradeoffReport& report) {
  SvgChart chart;
  chart.title = report.model + ": bottleneck size vs detection score";
  chart.x_label = "bottleneck elements / input elements";
  chart.y_label = "mAP";

  SvgSeries bbox{"bbox mAP", {}, false};
  SvgSeries mask{"mask mAP", {}, false};
  for (const TradeoffPoint& p : report.points) {
    if (p.bbox_map) bbox.points.emplace_back(p.size_ratio, *p.bbox_map);
    if (p.mask_map) mask.points.emplace_back(p.size_ratio, *p.mask_map);
  }

  if (bbox.points.empty() && mask.points.empty()) {
    // No scores supplied: fall back to the size curve alone.
    chart.y_label = "bottleneck elements / input elements";
    chart.x_label = "bottleneck channels C";
    SvgSeries size{"size ratio", {}, false};
    for (const TradeoffPoint& p : report.points)
      size.points.emplace_back(static_cast<double>(p.config.out_channels), p.size_ratio);
    chart.series = {size};
    return chart.render();
  }

  if (!bbox.points.empty()) chart.series.push_back(bbox);
  if (!mask.points.empty()) chart.series.push_back(mask);
  // Upper bound: the unmodified model's scores, drawn as dashed ceilings.
  double x0 = report.points.front().size_ratio, x1 = report.points.back().size_ratio;
  if (report.original_bbox_map && !bbox.points.empty())
    chart.series.push_back(
        {"bbox upper bound", {{x0, *report.original_bbox_map}, {x1, *report.original_bbox_map}},
         true});
  if (report.original_mask_map && !mask.points.empty())
    chart.series.push_back(
        {"mask upper bound", {{x0, *report.original_mask_map}, {x1, *report.original_mask_map}},
         true});
  return chart.render();
}

}  // namespace splitplan
