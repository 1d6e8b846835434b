// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "splitplan/graph.hpp"

namespace splitplan {

enum class CutKind { PureEdge, Interior, PureMobile };

// One boundary edge of a cut: the tail-side consumer of a head-side tensor.
struct BoundaryEdge {
  std::string producer;
  std::string consumer;
  TensorShape shape;
};

// Predecessor-closed head/tail partition. `cut_node` is the node whose
// ancestor closure (inclusive) forms the head; the pure-edge endpoint is the
// closure of the input node, the pure-mobile endpoint takes the whole graph.
struct SplitCut {
  std::string cut_node;
  CutKind kind = CutKind::Interior;
  std::unordered_set<std::string> head_set;
  std::vector<BoundaryEdge> boundary_edges;

  bool contains(const std::string& id) const { return head_set.count(id) != 0; }
};

// The tensors that must cross a cut: one entry per distinct head-side
// producer with at least one tail-side consumer (a tensor consumed by
// several tail nodes is transmitted once).
struct CutPayload {
  std::vector<TensorShape> tensors;
  int64_t total_elements = 0;
  double normalized_ratio = 0.0;  // total_elements / input elements

  int64_t total_bytes(DataType dtype) const {
    int64_t b = 0;
    for (const TensorShape& t : tensors) b += tensor_bytes(t, dtype);
    return b;
  }
};

// One cut per node in topological order; the first entry is the pure-edge
// endpoint (input-node closure) and a final pure-mobile endpoint is appended.
std::vector<SplitCut> enumerate_cuts(const ModelGraph& graph);

// Branch-aware payload of one cut. The pure-mobile endpoint carries the
// graph's nominal result tensors instead of boundary activations.
CutPayload cut_payload(const ModelGraph& graph, const SplitCut& cut, const ShapeMap& shapes);

// One chart-ready profile row per cut.
struct ProfileRow {
  std::string cut_node;
  std::string module;
  bool module_boundary = false;
  CutKind kind = CutKind::Interior;
  CutPayload payload;
  int64_t output_elements = 0;  // the cut node's own output tensor size
  double output_ratio = 0.0;    // output_elements / input elements
  int64_t cumulative_params = 0;  // learnable parameters in the head
};

// Applies cut_payload to every enumerated cut in topological order.
std::vector<ProfileRow> normalized_profile(const ModelGraph& graph);

// Cumulative learnable-parameter counts per module, in topological module
// order. The synthetic "input" module is omitted.
struct ModuleParams {
  std::string module;
  int64_t params = 0;
  int64_t cumulative = 0;
};

std::vector<ModuleParams> cumulative_params(const ModelGraph& graph);

}  // namespace splitplan
