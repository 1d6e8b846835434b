// SPDX-License-Identifier: Apache-2.0

#include "splitplan/timing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "splitplan/errors.hpp"

namespace splitplan {

using nlohmann::json;

DeviceProfile DeviceProfile::scaled(std::string name, double total_seconds, Weight weight) {
  DeviceProfile p;
  p.name = std::move(name);
  p.mode = Mode::Scaled;
  p.total_seconds = total_seconds;
  p.weight = weight;
  p.validate();
  return p;
}

DeviceProfile DeviceProfile::per_node(std::string name, std::map<std::string, double> seconds) {
  DeviceProfile p;
  p.name = std::move(name);
  p.mode = Mode::PerNode;
  p.per_node_seconds = std::move(seconds);
  p.validate();
  return p;
}

void DeviceProfile::validate() const {
  if (mode == Mode::Scaled) {
    if (!std::isfinite(total_seconds) || total_seconds < 0)
      throw ProfileError("profile '" + name + "': total_seconds must be finite and >= 0");
  } else {
    for (const auto& [id, s] : per_node_seconds)
      if (!std::isfinite(s) || s < 0)
        throw ProfileError("profile '" + name + "': negative time for node '" + id + "'");
  }
}

void ChannelModel::validate() const {
  if (!std::isfinite(bandwidth_bps) || bandwidth_bps <= 0)
    throw ProfileError("channel: bandwidth must be finite and > 0");
  if (!std::isfinite(rtt_latency_s) || rtt_latency_s < 0)
    throw ProfileError("channel: rtt latency must be finite and >= 0");
  if (!std::isfinite(payload_scale) || payload_scale <= 0 || payload_scale > 1)
    throw ProfileError("channel: payload scale must be in (0,1]");
}

std::map<std::string, double> attribute_latency(const ModelGraph& graph,
                                                const DeviceProfile& profile) {
  profile.validate();
  std::map<std::string, double> out;
  if (profile.mode == DeviceProfile::Mode::PerNode) {
    for (const auto& [id, s] : profile.per_node_seconds)
      if (!graph.has(id))
        throw ProfileError("profile '" + profile.name + "' names unknown node '" + id + "'");
    for (const Node& n : graph.nodes()) {
      auto it = profile.per_node_seconds.find(n.id);
      out[n.id] = it == profile.per_node_seconds.end() ? 0.0 : it->second;
    }
    return out;
  }

  ShapeMap shapes = infer_shapes(graph);
  std::map<std::string, int64_t> weights = profile.weight == DeviceProfile::Weight::Macs
                                               ? graph_macs(graph, shapes)
                                               : graph_params(graph, shapes);
  double total_weight = 0;
  for (const auto& [id, w] : weights) total_weight += static_cast<double>(w);
  if (total_weight <= 0) {
    if (profile.total_seconds == 0) {
      for (const Node& n : graph.nodes()) out[n.id] = 0.0;
      return out;
    }
    throw ProfileError("profile '" + profile.name +
                       "': graph has zero total weight, cannot distribute " +
                       (profile.weight == DeviceProfile::Weight::Macs ? std::string("MACs")
                                                                      : std::string("params")));
  }
  for (const Node& n : graph.nodes())
    out[n.id] = profile.total_seconds * static_cast<double>(weights.at(n.id)) / total_weight;
  return out;
}

namespace {

// Everything about a cut that does not depend on the channel.
struct PreparedCut {
  SplitCut cut;
  CutPayload payload;
  double head_seconds = 0;
  double tail_seconds = 0;
  int64_t payload_bytes = 0;
  size_t topo_idx = 0;
};

std::vector<PreparedCut> prepare_cuts(const ModelGraph& graph, const DeviceProfile& mobile,
                                      const DeviceProfile& edge, DataType dtype) {
  ShapeMap shapes = infer_shapes(graph);
  std::map<std::string, double> mobile_s = attribute_latency(graph, mobile);
  std::map<std::string, double> edge_s = attribute_latency(graph, edge);

  std::vector<PreparedCut> prepared;
  for (SplitCut& cut : enumerate_cuts(graph)) {
    PreparedCut p;
    p.payload = cut_payload(graph, cut, shapes);
    p.payload_bytes = p.payload.total_bytes(dtype);
    p.topo_idx = graph.topo_index(cut.cut_node);
    for (const Node& n : graph.nodes()) {
      if (cut.contains(n.id))
        p.head_seconds += mobile_s.at(n.id);
      else
        p.tail_seconds += edge_s.at(n.id);
    }
    p.cut = std::move(cut);
    prepared.push_back(std::move(p));
  }
  return prepared;
}

int64_t result_bytes(const ModelGraph& graph, DataType dtype) {
  int64_t b = 0;
  for (const TensorShape& s : graph.result_shapes) b += tensor_bytes(s, dtype);
  return b;
}

TimeBreakdown finish(const PreparedCut& p, const ChannelModel& channel, int64_t return_bytes,
                     const EvaluateOptions& opts) {
  int64_t wire_bytes = p.payload_bytes;
  if (opts.include_result_return && p.cut.kind != CutKind::PureMobile)
    wire_bytes += return_bytes;
  TimeBreakdown t;
  t.head_seconds = p.head_seconds;
  t.tail_seconds = p.tail_seconds;
  t.comm_seconds = static_cast<double>(wire_bytes) * channel.payload_scale * 8.0 /
                       channel.bandwidth_bps +
                   channel.rtt_latency_s;
  t.total_seconds = t.head_seconds + t.comm_seconds + t.tail_seconds;
  t.cut_node = p.cut.cut_node;
  t.cut_kind = p.cut.kind;
  return t;
}

// total, then smaller payload, then earlier position. Deterministic.
bool plan_before(const RankedPlan& a, size_t ta, const RankedPlan& b, size_t tb,
                 DataType dtype) {
  if (a.time.total_seconds != b.time.total_seconds)
    return a.time.total_seconds < b.time.total_seconds;
  int64_t pa = a.payload.total_bytes(dtype);
  int64_t pb = b.payload.total_bytes(dtype);
  if (pa != pb) return pa < pb;
  return ta < tb;
}

}  // namespace

TimeBreakdown evaluate_split(const ModelGraph& graph, const SplitCut& cut,
                             const DeviceProfile& mobile, const DeviceProfile& edge,
                             const ChannelModel& channel, DataType dtype,
                             const EvaluateOptions& opts) {
  channel.validate();
  ShapeMap shapes = infer_shapes(graph);
  std::map<std::string, double> mobile_s = attribute_latency(graph, mobile);
  std::map<std::string, double> edge_s = attribute_latency(graph, edge);

  PreparedCut p;
  p.cut = cut;
  p.payload = cut_payload(graph, cut, shapes);
  p.payload_bytes = p.payload.total_bytes(dtype);
  for (const Node& n : graph.nodes()) {
    if (cut.contains(n.id))
      p.head_seconds += mobile_s.at(n.id);
    else
      p.tail_seconds += edge_s.at(n.id);
  }
  return finish(p, channel, result_bytes(graph, dtype), opts);
}

PlanResult optimize_split(const ModelGraph& graph, const DeviceProfile& mobile,
                          const DeviceProfile& edge, const ChannelModel& channel,
                          DataType dtype, const EvaluateOptions& opts) {
  channel.validate();
  std::vector<PreparedCut> prepared = prepare_cuts(graph, mobile, edge, dtype);
  int64_t return_bytes = result_bytes(graph, dtype);

  std::vector<RankedPlan> plans;
  std::vector<size_t> topo;
  plans.reserve(prepared.size());
  for (const PreparedCut& p : prepared) {
    RankedPlan r;
    r.time = finish(p, channel, return_bytes, opts);
    r.cut = p.cut;
    r.payload = p.payload;
    plans.push_back(std::move(r));
    topo.push_back(p.topo_idx);
  }

  std::vector<size_t> order(plans.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return plan_before(plans[a], topo[a], plans[b], topo[b], dtype);
  });

  PlanResult result;
  result.ranking.reserve(plans.size());
  for (size_t i : order) result.ranking.push_back(plans[i]);
  result.best = result.ranking.front();
  return result;
}

std::vector<SweepPoint> sweep_bandwidth(const ModelGraph& graph, const DeviceProfile& mobile,
                                        const DeviceProfile& edge, DataType dtype,
                                        const std::vector<double>& bandwidths_bps,
                                        const ChannelModel& base, const EvaluateOptions& opts) {
  std::vector<PreparedCut> prepared = prepare_cuts(graph, mobile, edge, dtype);
  int64_t return_bytes = result_bytes(graph, dtype);

  std::vector<SweepPoint> points;
  points.reserve(bandwidths_bps.size());
  for (double bw : bandwidths_bps) {
    ChannelModel channel = base.with_bandwidth(bw);
    channel.validate();
    const PreparedCut* best = nullptr;
    RankedPlan best_plan;
    for (const PreparedCut& p : prepared) {
      RankedPlan r;
      r.time = finish(p, channel, return_bytes, opts);
      if (!best || plan_before(r, p.topo_idx, best_plan, best->topo_idx, dtype)) {
        r.cut = p.cut;
        r.payload = p.payload;
        best_plan = std::move(r);
        best = &p;
      }
    }
    SweepPoint pt;
    pt.bandwidth_bps = bw;
    pt.best = std::move(best_plan);
    points.push_back(std::move(pt));
  }
  return points;
}

BuiltinProfileTable BuiltinProfileTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open runtime table: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("runtime table " + path + ": " + e.what());
  }

  BuiltinProfileTable table;
  try {
    table.version_ = j.at("version").get<int>();
    if (table.version_ != 1)
      throw DataError("runtime table " + path + ": unsupported version " +
                      std::to_string(table.version_));
    for (const auto& [device, kinds] : j.at("devices").items()) {
      for (const auto& [kind, depths] : kinds.items()) {
        if (kind != detector_kind_name(DetectorKind::FasterRCNN) &&
            kind != detector_kind_name(DetectorKind::MaskRCNN))
          throw DataError("runtime table " + path + ": unknown detector '" + kind + "'");
        for (const auto& [key, value] : depths.items()) {
          if (key.size() < 2 || key[0] != 'r')
            throw DataError("runtime table " + path + ": bad depth key '" + key + "'");
          int depth = std::atoi(key.c_str() + 1);
          double s = value.get<double>();
          if (!(s > 0)) throw DataError("runtime table " + path + ": non-positive runtime");
          table.seconds_[device][kind][depth] = s;
        }
      }
    }
  } catch (const json::exception& e) {
    throw DataError("runtime table " + path + ": " + e.what());
  }
  if (table.seconds_.empty()) throw DataError("runtime table " + path + ": no devices");
  return table;
}

double BuiltinProfileTable::seconds(const std::string& device, DetectorKind kind,
                                    int depth) const {
  auto dev = seconds_.find(device);
  if (dev == seconds_.end()) {
    std::string known;
    for (const auto& [name, _] : seconds_) known += (known.empty() ? "" : ", ") + name;
    throw ProfileError("unknown device '" + device + "' (known: " + known + ")");
  }
  auto k = dev->second.find(detector_kind_name(kind));
  if (k == dev->second.end())
    throw ProfileError("device '" + device + "' has no entry for " + detector_kind_name(kind));
  auto d = k->second.find(depth);
  if (d == k->second.end())
    throw ProfileError("device '" + device + "' has no entry for " + detector_kind_name(kind) +
                       " depth " + std::to_string(depth));
  return d->second;
}

DeviceProfile BuiltinProfileTable::profile(const std::string& device, DetectorKind kind,
                                           int depth, DeviceProfile::Weight weight) const {
  std::string name = device + "/" + detector_kind_name(kind) + "_r" + std::to_string(depth);
  return DeviceProfile::scaled(name, seconds(device, kind, depth), weight);
}

std::vector<std::string> BuiltinProfileTable::device_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : seconds_) names.push_back(name);
  return names;
}

DeviceProfile load_device_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open device profile: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("device profile " + path + ": " + e.what());
  }
  try {
    std::string name = j.value("name", path);
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "scaled") {
      DeviceProfile::Weight w = DeviceProfile::Weight::Macs;
      std::string weight = j.value("weight", "macs");
      if (weight == "params")
        w = DeviceProfile::Weight::Params;
      else if (weight != "macs")
        throw DataError("device profile " + path + ": weight must be macs or params");
      return DeviceProfile::scaled(name, j.at("total_seconds").get<double>(), w);
    }
    if (mode == "per_node") {
      std::map<std::string, double> seconds;
      for (const auto& [id, v] : j.at("seconds").items()) seconds[id] = v.get<double>();
      return DeviceProfile::per_node(name, std::move(seconds));
    }
    throw DataError("device profile " + path + ": mode must be scaled or per_node");
  } catch (const json::exception& e) {
    throw DataError("device profile " + path + ": " + e.what());
  }
}

double parse_bandwidth(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t");
  size_t end = text.find_last_not_of(" \t");
  if (begin == std::string::npos) throw DataError("bandwidth: empty string");
  std::string s = text.substr(begin, end - begin + 1);

  const char* cstr = s.c_str();
  char* rest = nullptr;
  double value = std::strtod(cstr, &rest);
  if (rest == cstr) throw DataError("bandwidth '" + text + "': no number");

  std::string unit(rest);
  size_t unit_begin = unit.find_first_not_of(" \t");
  unit = unit_begin == std::string::npos ? "" : unit.substr(unit_begin);
  std::string lower;
  for (char c : unit) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  double mult = 1.0;
  if (lower.empty() || lower == "bps")
    mult = 1.0;
  else if (lower == "kbps")
    mult = 1e3;
  else if (lower == "mbps")
    mult = 1e6;
  else if (lower == "gbps")
    mult = 1e9;
  else
    throw DataError("bandwidth '" + text + "': unknown unit '" + unit + "'");

  double bps = value * mult;
  if (!std::isfinite(bps) || bps <= 0)
    throw DataError("bandwidth '" + text + "': must be finite and > 0");
  return bps;
}

}  // namespace splitplan
