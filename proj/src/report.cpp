// SPDX-License-Identifier: Apache-2.0

#include "splitplan/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "splitplan/errors.hpp"

#ifndef SPLITPLAN_BUILTIN_DATA_DIR
#define SPLITPLAN_BUILTIN_DATA_DIR "data"
#endif

namespace splitplan {

using nlohmann::ordered_json;

namespace {

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string join_shapes(const std::vector<TensorShape>& shapes) {
  std::string out;
  for (size_t i = 0; i < shapes.size(); ++i) {
    if (i) out += "+";
    out += shapes[i].str();
  }
  return out;
}

}  // namespace

std::string cut_kind_name(CutKind kind) {
  switch (kind) {
    case CutKind::PureEdge: return "pure_edge";
    case CutKind::PureMobile: return "pure_mobile";
    default: return "interior";
  }
}

std::string profile_csv(const std::vector<ProfileRow>& rows) {
  std::string out =
      "index,cut_node,module,module_boundary,kind,payload_tensors,"
      "payload_elements,payload_ratio,output_elements,output_ratio,head_params\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    const ProfileRow& r = rows[i];
    out += std::to_string(i) + "," + r.cut_node + "," + r.module + "," +
           (r.module_boundary ? "1" : "0") + "," + cut_kind_name(r.kind) + "," +
           join_shapes(r.payload.tensors) + "," + std::to_string(r.payload.total_elements) +
           "," + fmt(r.payload.normalized_ratio, 6) + "," + std::to_string(r.output_elements) +
           "," + fmt(r.output_ratio, 6) + "," + std::to_string(r.cumulative_params) + "\n";
  }
  return out;
}

std::string modules_csv(const std::vector<ModuleParams>& rows) {
  std::string out = "module,params,cumulative_params\n";
  for (const ModuleParams& m : rows)
    out += m.module + "," + std::to_string(m.params) + "," + std::to_string(m.cumulative) + "\n";
  return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& points, DataType dtype) {
  std::string out =
      "bandwidth_bps,cut_node,kind,payload_bytes,head_seconds,comm_seconds,"
      "tail_seconds,total_seconds\n";
  for (const SweepPoint& p : points) {
    out += fmt(p.bandwidth_bps, 3) + "," + p.best.cut.cut_node + "," +
           cut_kind_name(p.best.cut.kind) + "," +
           std::to_string(p.best.payload.total_bytes(dtype)) + "," +
           fmt(p.best.time.head_seconds, 9) + "," + fmt(p.best.time.comm_seconds, 9) + "," +
           fmt(p.best.time.tail_seconds, 9) + "," + fmt(p.best.time.total_seconds, 9) + "\n";
  }
  return out;
}

nlohmann::ordered_json profile_json(const ModelGraph& graph, const std::vector<ProfileRow>& rows,
                                    const std::vector<ModuleParams>& modules) {
  ordered_json j;
  j["model"] = graph.name;
  j["input_shape"] = graph.input_shape.dims;
  j["input_elements"] = graph.input_shape.elements();
  ordered_json cuts = ordered_json::array();
  for (size_t i = 0; i < rows.size(); ++i) {
    const ProfileRow& r = rows[i];
    ordered_json c;
    c["index"] = i;
    c["cut_node"] = r.cut_node;
    c["module"] = r.module;
    c["module_boundary"] = r.module_boundary;
    c["kind"] = cut_kind_name(r.kind);
    ordered_json tensors = ordered_json::array();
    for (const TensorShape& s : r.payload.tensors) tensors.push_back(s.dims);
    c["payload_tensors"] = tensors;
    c["payload_elements"] = r.payload.total_elements;
    c["payload_ratio"] = r.payload.normalized_ratio;
    c["output_elements"] = r.output_elements;
    c["output_ratio"] = r.output_ratio;
    c["head_params"] = r.cumulative_params;
    cuts.push_back(std::move(c));
  }
  j["cuts"] = std::move(cuts);
  ordered_json mods = ordered_json::array();
  for (const ModuleParams& m : modules) {
    ordered_json e;
    e["module"] = m.module;
    e["params"] = m.params;
    e["cumulative_params"] = m.cumulative;
    mods.push_back(std::move(e));
  }
  j["modules"] = std::move(mods);
  return j;
}

nlohmann::ordered_json plan_json(const ModelGraph& graph, const PlanResult& plan,
                                 const DeviceProfile& mobile, const DeviceProfile& edge,
                                 const ChannelModel& channel, DataType dtype, size_t top) {
  ordered_json j;
  j["model"] = graph.name;
  j["input_shape"] = graph.input_shape.dims;
  j["dtype"] = dtype_name(dtype);
  j["mobile_profile"] = mobile.name;
  j["edge_profile"] = edge.name;
  j["channel"] = {{"bandwidth_bps", channel.bandwidth_bps},
                  {"rtt_seconds", channel.rtt_latency_s},
                  {"payload_scale", channel.payload_scale}};

  auto plan_entry = [&](const RankedPlan& p) {
    ordered_json e;
    e["cut_node"] = p.cut.cut_node;
    e["kind"] = cut_kind_name(p.cut.kind);
    ordered_json tensors = ordered_json::array();
    for (const TensorShape& s : p.payload.tensors) tensors.push_back(s.dims);
    e["payload_tensors"] = tensors;
    e["payload_bytes"] = p.payload.total_bytes(dtype);
    e["payload_ratio"] = p.payload.normalized_ratio;
    e["head_seconds"] = p.time.head_seconds;
    e["comm_seconds"] = p.time.comm_seconds;
    e["tail_seconds"] = p.time.tail_seconds;
    e["total_seconds"] = p.time.total_seconds;
    return e;
  };

  j["best"] = plan_entry(plan.best);
  ordered_json ranking = ordered_json::array();
  size_t n = std::min(top, plan.ranking.size());
  for (size_t i = 0; i < n; ++i) ranking.push_back(plan_entry(plan.ranking[i]));
  j["ranking"] = std::move(ranking);
  j["cuts_evaluated"] = plan.ranking.size();
  return j;
}

namespace {

constexpr double kW = 860, kH = 520;
constexpr double kL = 72, kR = 836, kT = 46, kB = 456;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Axis {
  double lo = 0, hi = 1;
  bool log = false;

  double place(double v, double a, double b) const {
    double t = log ? std::log10(v) : v;
    double tlo = log ? std::log10(lo) : lo;
    double thi = log ? std::log10(hi) : hi;
    return a + (t - tlo) / (thi - tlo) * (b - a);
  }
};

double nice_step(double range) {
  double raw = range / 4.0;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double nice = frac < 1.5 ? 1 : frac < 3.5 ? 2 : frac < 7.5 ? 5 : 10;
  return nice * mag;
}

std::vector<double> axis_ticks(const Axis& ax) {
  std::vector<double> ticks;
  if (ax.log) {
    for (int k = static_cast<int>(std::ceil(std::log10(ax.lo) - 1e-9));
         k <= static_cast<int>(std::floor(std::log10(ax.hi) + 1e-9)); ++k)
      ticks.push_back(std::pow(10.0, k));
    if (ticks.size() >= 2) return ticks;
  }
  double lo = ax.log ? std::log10(ax.lo) : ax.lo;
  double hi = ax.log ? std::log10(ax.hi) : ax.hi;
  double step = nice_step(hi - lo);
  ticks.clear();
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * step; t += step)
    ticks.push_back(ax.log ? std::pow(10.0, t) : t);
  return ticks;
}

}  // namespace

std::string SvgChart::render() const {
  bool any = false;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  for (const SvgSeries& s : series)
    for (auto [x, y] : s.points) {
      if ((log_x && x <= 0) || (log_y && y <= 0))
        throw DataError("svg: non-positive value on log axis");
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!any) throw DataError("svg: no data points");
  if (h_reference && !log_y) {
    ymin = std::min(ymin, *h_reference);
    ymax = std::max(ymax, *h_reference);
  }
  auto pad = [](double& lo, double& hi, bool log) {
    if (log) {
      if (hi / lo < 1.0001) {
        lo /= 2;
        hi *= 2;
      }
    } else {
      if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
      } else {
        double m = (hi - lo) * 0.05;
        if (lo != 0 || hi < 0) lo -= m;
        hi += m;
      }
    }
  };
  pad(xmin, xmax, log_x);
  pad(ymin, ymax, log_y);

  Axis xa{xmin, xmax, log_x}, ya{ymin, ymax, log_y};
  auto px = [&](double v) { return xa.place(v, kL, kR); };
  auto py = [&](double v) { return ya.place(v, kB, kT); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_g(kW) + "\" height=\"" +
         fmt_g(kH) + "\" viewBox=\"0 0 " + fmt_g(kW) + " " + fmt_g(kH) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt((kL + kR) / 2, 1) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         title + "</text>\n";

  for (double t : axis_ticks(xa)) {
    double x = px(t);
    svg += "<line x1=\"" + fmt(x, 2) + "\" y1=\"" + fmt(kB, 2) + "\" x2=\"" + fmt(x, 2) +
           "\" y2=\"" + fmt(kB + 5, 2) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(x, 2) + "\" y=\"" + fmt(kB + 20, 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + fmt_g(t) +
           "</text>\n";
  }
  for (double t : axis_ticks(ya)) {
    double y = py(t);
    svg += "<line x1=\"" + fmt(kL - 5, 2) + "\" y1=\"" + fmt(y, 2) + "\" x2=\"" + fmt(kL, 2) +
           "\" y2=\"" + fmt(y, 2) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(kL - 9, 2) + "\" y=\"" + fmt(y + 4, 2) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" + fmt_g(t) +
           "</text>\n";
  }
  svg += "<line x1=\"" + fmt(kL, 2) + "\" y1=\"" + fmt(kT, 2) + "\" x2=\"" + fmt(kL, 2) +
         "\" y2=\"" + fmt(kB, 2) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(kL, 2) + "\" y1=\"" + fmt(kB, 2) + "\" x2=\"" + fmt(kR, 2) +
         "\" y2=\"" + fmt(kB, 2) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt((kL + kR) / 2, 1) + "\" y=\"" + fmt(kH - 14, 1) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label +
         "</text>\n";
  svg += "<text x=\"20\" y=\"" + fmt((kT + kB) / 2, 1) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 20 " +
         fmt((kT + kB) / 2, 1) + ")\">" + y_label + "</text>\n";

  if (h_reference && *h_reference >= ymin && *h_reference <= ymax) {
    double y = py(*h_reference);
    svg += "<line x1=\"" + fmt(kL, 2) + "\" y1=\"" + fmt(y, 2) + "\" x2=\"" + fmt(kR, 2) +
           "\" y2=\"" + fmt(y, 2) +
           "\" stroke=\"#888888\" stroke-dasharray=\"4,4\"/>\n";
  }

  for (size_t i = 0; i < series.size(); ++i) {
    const SvgSeries& s = series[i];
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string pts;
    for (auto [x, y] : s.points) pts += fmt(px(x), 2) + "," + fmt(py(y), 2) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\"";
    if (s.dashed) svg += " stroke-dasharray=\"6,4\"";
    svg += " points=\"" + pts + "\"/>\n";
    double ly = kT + 16 + 18 * static_cast<double>(i);
    svg += "<line x1=\"" + fmt(kR - 150, 1) + "\" y1=\"" + fmt(ly - 4, 1) + "\" x2=\"" +
           fmt(kR - 122, 1) + "\" y2=\"" + fmt(ly - 4, 1) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"" + (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    svg += "<text x=\"" + fmt(kR - 116, 1) + "\" y=\"" + fmt(ly, 1) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + s.label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string profile_svg(const std::string& model, const std::vector<ProfileRow>& rows) {
  SvgChart chart;
  chart.title = model + ": tensor size by split position";
  chart.x_label = "cut index (topological order)";
  chart.y_label = "elements / input elements";
  chart.h_reference = 1.0;
  SvgSeries payload{"cut payload", {}, false};
  SvgSeries output{"layer output", {}, true};
  for (size_t i = 0; i < rows.size(); ++i) {
    payload.points.emplace_back(static_cast<double>(i), rows[i].payload.normalized_ratio);
    output.points.emplace_back(static_cast<double>(i), rows[i].output_ratio);
  }
  chart.series = {payload, output};
  return chart.render();
}

std::string sweep_svg(const std::string& model, const std::vector<SweepPoint>& points) {
  SvgChart chart;
  chart.title = model + ": best total time vs bandwidth";
  chart.x_label = "bandwidth [Mbps]";
  chart.y_label = "total time [s]";
  chart.log_x = true;
  chart.log_y = true;
  SvgSeries best{"best split", {}, false};
  for (const SweepPoint& p : points)
    best.points.emplace_back(p.bandwidth_bps / 1e6, p.best.time.total_seconds);
  chart.series = {best};
  return chart.render();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ReferenceRow> load_reference_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference table: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("reference table " + path + ": " + e.what());
  }
  std::vector<ReferenceRow> rows;
  try {
    if (j.at("version").get<int>() != 1)
      throw DataError("reference table " + path + ": unsupported version");
    for (const auto& r : j.at("rows")) {
      ReferenceRow row;
      row.detector = r.at("detector").get<std::string>();
      row.backbone = r.at("backbone").get<std::string>();
      row.bbox_map = r.at("bbox_map").get<double>();
      if (row.bbox_map < 0 || row.bbox_map > 1)
        throw DataError("reference table " + path + ": bbox_map out of [0,1]");
      if (r.contains("runtime_s")) {
        double v = r.at("runtime_s").get<double>();
        if (!(v > 0)) throw DataError("reference table " + path + ": non-positive runtime");
        row.runtime_s = v;
      }
      rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("reference table " + path + ": " + e.what());
  }
  if (rows.empty()) throw DataError("reference table " + path + ": no rows");
  return rows;
}

std::string reference_csv(const std::vector<ReferenceRow>& rows) {
  std::string out = "detector,backbone,bbox_map,runtime_seconds\n";
  for (const ReferenceRow& r : rows) {
    out += r.detector + "," + r.backbone + "," + fmt(r.bbox_map, 3) + ",";
    if (r.runtime_s) out += fmt(*r.runtime_s, 4);
    out += "\n";
  }
  return out;
}

std::string data_dir() {
  const char* env = std::getenv("SPLITPLAN_DATA_DIR");
  if (env && *env) return env;
  return SPLITPLAN_BUILTIN_DATA_DIR;
}

}  // namespace splitplan
