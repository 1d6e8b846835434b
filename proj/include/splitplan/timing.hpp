// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "splitplan/catalog.hpp"
#include "splitplan/split.hpp"

namespace splitplan {

// Per-device latency source: either measured per-node seconds, or a
// whole-model total distributed proportionally to per-node MACs or params.
struct DeviceProfile {
  enum class Mode { PerNode, Scaled };
  enum class Weight { Macs, Params };

  std::string name;
  Mode mode = Mode::Scaled;
  std::map<std::string, double> per_node_seconds;
  double total_seconds = 0.0;
  Weight weight = Weight::Macs;

  static DeviceProfile scaled(std::string name, double total_seconds,
                              Weight weight = Weight::Macs);
  static DeviceProfile per_node(std::string name, std::map<std::string, double> seconds);
  void validate() const;
};

struct ChannelModel {
  double bandwidth_bps = 0.0;
  double rtt_latency_s = 0.0;
  // Multiplicative payload factor in (0,1] modeling lossless compression.
  double payload_scale = 1.0;

  void validate() const;
  ChannelModel with_bandwidth(double bps) const {
    ChannelModel c = *this;
    c.bandwidth_bps = bps;
    return c;
  }
};

// Three-term total-inference-time result for one cut.
struct TimeBreakdown {
  double head_seconds = 0.0;
  double comm_seconds = 0.0;
  double tail_seconds = 0.0;
  double total_seconds = 0.0;
  std::string cut_node;
  CutKind cut_kind = CutKind::Interior;
};

struct EvaluateOptions {
  // Add the nominal result-return transfer on top of interior/pure-edge
  // cuts. Off by default: detections are small next to activations.
  bool include_result_return = false;
};

// Per-node seconds for the graph under a profile. Scaled mode conserves the
// profile total exactly up to float summation.
std::map<std::string, double> attribute_latency(const ModelGraph& graph,
                                                const DeviceProfile& profile);

TimeBreakdown evaluate_split(const ModelGraph& graph, const SplitCut& cut,
                             const DeviceProfile& mobile, const DeviceProfile& edge,
                             const ChannelModel& channel, DataType dtype,
                             const EvaluateOptions& opts = {});

struct RankedPlan {
  SplitCut cut;
  CutPayload payload;
  TimeBreakdown time;
};

struct PlanResult {
  RankedPlan best;
  std::vector<RankedPlan> ranking;  // every cut, fastest first
};

// Argmin of total time over all enumerated cuts (endpoints included). Ties
// break on smaller payload bytes, then earlier topological position.
PlanResult optimize_split(const ModelGraph& graph, const DeviceProfile& mobile,
                          const DeviceProfile& edge, const ChannelModel& channel,
                          DataType dtype, const EvaluateOptions& opts = {});

struct SweepPoint {
  double bandwidth_bps = 0.0;
  RankedPlan best;
};

// optimize_split at each bandwidth; rtt and payload scale come from `base`.
std::vector<SweepPoint> sweep_bandwidth(const ModelGraph& graph, const DeviceProfile& mobile,
                                        const DeviceProfile& edge, DataType dtype,
                                        const std::vector<double>& bandwidths_bps,
                                        const ChannelModel& base = {1.0, 0.0, 1.0},
                                        const EvaluateOptions& opts = {});

// Bundled per-image model runtimes, loaded from a versioned data file.
// Devices: rpi4, jetson_tx2, desktop_gpu.
class BuiltinProfileTable {
 public:
  static BuiltinProfileTable load(const std::string& path);

  double seconds(const std::string& device, DetectorKind kind, int depth) const;
  DeviceProfile profile(const std::string& device, DetectorKind kind, int depth,
                        DeviceProfile::Weight weight = DeviceProfile::Weight::Macs) const;
  std::vector<std::string> device_names() const;
  int version() const { return version_; }

 private:
  int version_ = 0;
  // device -> detector kind name -> depth -> seconds
  std::map<std::string, std::map<std::string, std::map<int, double>>> seconds_;
};

DeviceProfile load_device_profile(const std::string& path);

// "100Mbps", "2.5Gbps", "9600bps" or a bare number (bps) -> bits/second.
double parse_bandwidth(const std::string& text);

}  // namespace splitplan
