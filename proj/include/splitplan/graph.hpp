// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "splitplan/tensor.hpp"

namespace splitplan {

// Primitive layer kinds. Everything that is not shape/count arithmetic
// (RoI heads, nearest-neighbour upsampling) is declared as a Macro with
// explicit output shapes and cost constants.
struct Conv2dAttrs {
  int64_t out_channels = 0;
  int64_t kernel_h = 0;
  int64_t kernel_w = 0;
  int64_t stride = 1;
  int64_t padding = 0;
  bool has_bias = false;
};

struct BatchNorm2dAttrs {};

struct ReluAttrs {};

struct MaxPool2dAttrs {
  int64_t kernel = 0;
  int64_t stride = 1;
  int64_t padding = 0;
};

// Residual join; exactly two inputs with identical shapes.
struct AddAttrs {};

struct LinearAttrs {
  int64_t out_features = 0;
  bool has_bias = false;
};

struct MacroAttrs {
  std::string label;
  std::vector<TensorShape> output_shapes;
  int64_t declared_params = 0;
  int64_t declared_macs = 0;
};

using NodeKind = std::variant<Conv2dAttrs, BatchNorm2dAttrs, ReluAttrs, MaxPool2dAttrs,
                              AddAttrs, LinearAttrs, MacroAttrs>;

struct Node {
  std::string id;
  NodeKind kind;
  std::vector<std::string> inputs;

  // Module the node belongs to: input, stem, layer1..layer4, fpn, rpn, roi,
  // or bottleneck_encoder / bottleneck_decoder on injected variants.
  std::string module;
  bool module_boundary = false;  // last node of its module in topo order
  bool preferred_split = false;  // designated bottleneck node

  std::string kind_name() const;
  const MacroAttrs* as_macro() const { return std::get_if<MacroAttrs>(&kind); }
};

// Per-node inferred output shapes, keyed by node id. Multi-output nodes
// (only Macros) list every declared shape; consumers read the first one.
using ShapeMap = std::map<std::string, std::vector<TensorShape>>;

// DAG of primitive layers. Nodes keep insertion order, which must be
// topological; loading validates that.
class ModelGraph {
 public:
  std::string name;
  TensorShape input_shape;
  // Nominal detection payload (boxes/labels/scores) used as the pure-mobile
  // endpoint's transfer; empty for plain backbones.
  std::vector<TensorShape> result_shapes;
  std::vector<std::string> outputs;

  void add(Node node);
  bool has(const std::string& id) const { return index_.count(id) != 0; }
  const Node& node(const std::string& id) const;
  Node& mutable_node(const std::string& id);
  const std::vector<Node>& nodes() const { return nodes_; }
  size_t topo_index(const std::string& id) const;

  // Node ids in topological order (== insertion order once validated).
  const std::vector<std::string>& topo_order() const;
  const std::vector<std::string>& successors(const std::string& id) const;

  // Checks the DAG invariants: single source, inputs resolve, insertion
  // order topological, every non-output node feeds something.
  void validate() const;

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::string, size_t> index_;
  mutable std::vector<std::string> topo_cache_;
  mutable std::unordered_map<std::string, std::vector<std::string>> succ_cache_;
  void invalidate_caches() const;
};

// floor((in + 2*padding - kernel) / stride) + 1, the standard conv/pool
// output arithmetic. Throws GeometryError when the window does not fit.
int64_t conv_out_dim(int64_t in_dim, int64_t kernel, int64_t stride, int64_t padding,
                     const std::string& context = {});

// Deterministic shape inference over the whole graph.
ShapeMap infer_shapes(const ModelGraph& graph);

// Learnable parameter count of one node given its input channel count
// (input feature count for Linear). BatchNorm counts its affine pair only.
int64_t param_count(const Node& node, int64_t in_channels);

// Multiply-accumulate count of one node. Pooling, activations, normalization
// and Add are attributed zero by convention.
int64_t mac_count(const Node& node, const ShapeMap& shapes);

// Convenience: per-node params/MACs for a whole graph, and their totals.
std::map<std::string, int64_t> graph_params(const ModelGraph& graph, const ShapeMap& shapes);
std::map<std::string, int64_t> graph_macs(const ModelGraph& graph, const ShapeMap& shapes);

// First declared shape: what a downstream consumer of `id` sees.
const TensorShape& primary_output(const ShapeMap& shapes, const std::string& id);

// Total elements across all declared outputs of `id` — the "output tensor
// size" of a node as charted in profile reports.
int64_t output_elements(const ShapeMap& shapes, const std::string& id);

}  // namespace splitplan
