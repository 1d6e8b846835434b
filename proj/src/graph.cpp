// SPDX-License-Identifier: Apache-2.0

#include "splitplan/graph.hpp"

#include <algorithm>
#include <sstream>

namespace splitplan {

std::string dtype_name(DataType t) {
  switch (t) {
    case DataType::F32: return "f32";
    case DataType::F16: return "f16";
    case DataType::U8: return "u8";
  }
  return "f32";
}

DataType dtype_from_name(const std::string& name) {
  if (name == "f32" || name == "F32") return DataType::F32;
  if (name == "f16" || name == "F16") return DataType::F16;
  if (name == "u8" || name == "U8") return DataType::U8;
  throw DataError("unknown dtype: " + name);
}

std::string TensorShape::str() const {
  std::ostringstream os;
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  return os.str();
}

TensorShape TensorShape::parse(const std::string& text) {
  if (!text.empty() && text.back() == 'x') throw DataError("bad shape: " + text);
  std::vector<int64_t> dims;
  std::string tok;
  std::istringstream is(text);
  while (std::getline(is, tok, 'x')) {
    if (tok.empty()) throw DataError("bad shape: " + text);
    size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(tok, &pos);
    } catch (const std::exception&) {
      throw DataError("bad shape: " + text);
    }
    if (pos != tok.size() || v < 1) throw DataError("bad shape: " + text);
    dims.push_back(v);
  }
  if (dims.empty()) throw DataError("bad shape: " + text);
  return TensorShape(std::move(dims));
}

std::string Node::kind_name() const {
  struct Visitor {
    std::string operator()(const Conv2dAttrs&) const { return "conv2d"; }
    std::string operator()(const BatchNorm2dAttrs&) const { return "batchnorm2d"; }
    std::string operator()(const ReluAttrs&) const { return "relu"; }
    std::string operator()(const MaxPool2dAttrs&) const { return "maxpool2d"; }
    std::string operator()(const AddAttrs&) const { return "add"; }
    std::string operator()(const LinearAttrs&) const { return "linear"; }
    std::string operator()(const MacroAttrs&) const { return "macro"; }
  };
  return std::visit(Visitor{}, kind);
}

void ModelGraph::add(Node node) {
  if (node.id.empty()) throw StructuralError("node with empty id");
  if (index_.count(node.id)) throw StructuralError("duplicate node id: " + node.id);
  index_[node.id] = nodes_.size();
  nodes_.push_back(std::move(node));
  invalidate_caches();
}

const Node& ModelGraph::node(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw StructuralError("unknown node id: " + id);
  return nodes_[it->second];
}

Node& ModelGraph::mutable_node(const std::string& id) {
  auto it = index_.find(id);
  if (it == index_.end()) throw StructuralError("unknown node id: " + id);
  return nodes_[it->second];
}

size_t ModelGraph::topo_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw StructuralError("unknown node id: " + id);
  return it->second;
}

void ModelGraph::invalidate_caches() const {
  topo_cache_.clear();
  succ_cache_.clear();
}

const std::vector<std::string>& ModelGraph::topo_order() const {
  if (topo_cache_.empty()) {
    topo_cache_.reserve(nodes_.size());
    for (const Node& n : nodes_) topo_cache_.push_back(n.id);
  }
  return topo_cache_;
}

const std::vector<std::string>& ModelGraph::successors(const std::string& id) const {
  if (succ_cache_.empty()) {
    for (const Node& n : nodes_) succ_cache_[n.id];  // ensure every key exists
    for (const Node& n : nodes_) {
      for (const std::string& in : n.inputs) {
        auto it = succ_cache_.find(in);
        if (it != succ_cache_.end()) it->second.push_back(n.id);
      }
    }
  }
  auto it = succ_cache_.find(id);
  if (it == succ_cache_.end()) throw StructuralError("unknown node id: " + id);
  return it->second;
}

void ModelGraph::validate() const {
  input_shape.validate();
  if (nodes_.empty()) throw StructuralError(name + ": empty graph");

  size_t sources = 0;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.inputs.empty()) ++sources;
    for (const std::string& in : n.inputs) {
      auto it = index_.find(in);
      if (it == index_.end())
        throw StructuralError(n.id + ": unknown input " + in);
      // Insertion order doubles as the topological order.
      if (it->second >= i)
        throw StructuralError(n.id + ": input " + in + " not before it in node order");
    }
    if (std::holds_alternative<AddAttrs>(n.kind) && n.inputs.size() != 2)
      throw StructuralError(n.id + ": add requires exactly 2 inputs");
    if (const MacroAttrs* m = n.as_macro()) {
      if (m->output_shapes.empty())
        throw StructuralError(n.id + ": macro declares no output shape");
      if (m->declared_params < 0 || m->declared_macs < 0)
        throw StructuralError(n.id + ": negative declared cost");
    }
  }
  if (sources != 1) throw StructuralError(name + ": expected exactly one source node");

  if (outputs.empty()) throw StructuralError(name + ": no outputs declared");
  for (const std::string& out : outputs)
    if (!index_.count(out)) throw StructuralError(name + ": unknown output " + out);

  // Every non-output node must feed at least one consumer.
  std::unordered_map<std::string, bool> consumed;
  for (const Node& n : nodes_)
    for (const std::string& in : n.inputs) consumed[in] = true;
  for (const Node& n : nodes_) {
    bool is_output = std::find(outputs.begin(), outputs.end(), n.id) != outputs.end();
    if (!is_output && !consumed[n.id])
      throw StructuralError(n.id + ": dangling non-output node");
  }
}

int64_t conv_out_dim(int64_t in_dim, int64_t kernel, int64_t stride, int64_t padding,
                     const std::string& context) {
  if (in_dim < 1 || kernel < 1 || stride < 1 || padding < 0)
    throw GeometryError((context.empty() ? std::string("conv_out_dim") : context) +
                        ": non-positive geometry");
  if (in_dim + 2 * padding < kernel)
    throw GeometryError((context.empty() ? std::string("conv_out_dim") : context) +
                        ": window " + std::to_string(kernel) + " does not fit input " +
                        std::to_string(in_dim) + " with padding " + std::to_string(padding));
  return (in_dim + 2 * padding - kernel) / stride + 1;
}

namespace {

const TensorShape& sole_input_shape(const ModelGraph& g, const Node& n, const ShapeMap& shapes) {
  if (n.inputs.size() != 1)
    throw StructuralError(n.id + ": expected exactly one input");
  (void)g;
  return primary_output(shapes, n.inputs[0]);
}

std::vector<TensorShape> infer_node(const ModelGraph& g, const Node& n, const ShapeMap& shapes) {
  struct Visitor {
    const ModelGraph& g;
    const Node& n;
    const ShapeMap& shapes;

    std::vector<TensorShape> operator()(const Conv2dAttrs& a) const {
      const TensorShape& in = sole_input_shape(g, n, shapes);
      if (in.dims.size() != 3)
        throw StructuralError(n.id + ": conv2d expects C,H,W input, got " + in.str());
      if (a.out_channels < 1 || a.kernel_h < 1 || a.kernel_w < 1 || a.stride < 1)
        throw StructuralError(n.id + ": non-positive conv hyperparameter");
      int64_t h = conv_out_dim(in.dims[1], a.kernel_h, a.stride, a.padding, n.id);
      int64_t w = conv_out_dim(in.dims[2], a.kernel_w, a.stride, a.padding, n.id);
      return {TensorShape({a.out_channels, h, w})};
    }
    std::vector<TensorShape> operator()(const BatchNorm2dAttrs&) const {
      const TensorShape& in = sole_input_shape(g, n, shapes);
      if (in.dims.size() != 3)
        throw StructuralError(n.id + ": batchnorm2d expects C,H,W input, got " + in.str());
      return {in};
    }
    std::vector<TensorShape> operator()(const ReluAttrs&) const {
      return {sole_input_shape(g, n, shapes)};
    }
    std::vector<TensorShape> operator()(const MaxPool2dAttrs& a) const {
      const TensorShape& in = sole_input_shape(g, n, shapes);
      if (in.dims.size() != 3)
        throw StructuralError(n.id + ": maxpool2d expects C,H,W input, got " + in.str());
      if (a.kernel < 1 || a.stride < 1)
        throw StructuralError(n.id + ": non-positive pool hyperparameter");
      int64_t h = conv_out_dim(in.dims[1], a.kernel, a.stride, a.padding, n.id);
      int64_t w = conv_out_dim(in.dims[2], a.kernel, a.stride, a.padding, n.id);
      return {TensorShape({in.dims[0], h, w})};
    }
    std::vector<TensorShape> operator()(const AddAttrs&) const {
      if (n.inputs.size() != 2)
        throw StructuralError(n.id + ": add requires exactly 2 inputs");
      const TensorShape& a = primary_output(shapes, n.inputs[0]);
      const TensorShape& b = primary_output(shapes, n.inputs[1]);
      if (a != b)
        throw StructuralError(n.id + ": add shape mismatch " + a.str() + " vs " + b.str());
      return {a};
    }
    std::vector<TensorShape> operator()(const LinearAttrs& a) const {
      const TensorShape& in = sole_input_shape(g, n, shapes);
      if (a.out_features < 1)
        throw StructuralError(n.id + ": non-positive out_features");
      TensorShape out = in;
      out.dims.back() = a.out_features;
      return {out};
    }
    std::vector<TensorShape> operator()(const MacroAttrs& a) const {
      if (a.output_shapes.empty())
        throw CatalogError(n.id + ": macro with undeclared output shape");
      return a.output_shapes;
    }
  };
  return std::visit(Visitor{g, n, shapes}, n.kind);
}

}  // namespace

ShapeMap infer_shapes(const ModelGraph& graph) {
  graph.validate();
  ShapeMap shapes;
  for (const std::string& id : graph.topo_order()) {
    const Node& n = graph.node(id);
    if (n.inputs.empty()) {
      // The source is the model input; it must declare its shape.
      const MacroAttrs* m = n.as_macro();
      if (!m) throw StructuralError(n.id + ": source node must be a macro declaring the input");
      if (m->output_shapes.front() != graph.input_shape)
        throw StructuralError(n.id + ": source shape " + m->output_shapes.front().str() +
                              " != graph input " + graph.input_shape.str());
      shapes[id] = m->output_shapes;
      continue;
    }
    shapes[id] = infer_node(graph, n, shapes);
  }
  return shapes;
}

int64_t param_count(const Node& node, int64_t in_channels) {
  struct Visitor {
    const Node& n;
    int64_t in;
    int64_t operator()(const Conv2dAttrs& a) const {
      int64_t p = a.out_channels * in * a.kernel_h * a.kernel_w;
      if (a.has_bias) p += a.out_channels;
      return p;
    }
    int64_t operator()(const BatchNorm2dAttrs&) const { return 2 * in; }
    int64_t operator()(const ReluAttrs&) const { return 0; }
    int64_t operator()(const MaxPool2dAttrs&) const { return 0; }
    int64_t operator()(const AddAttrs&) const { return 0; }
    int64_t operator()(const LinearAttrs& a) const {
      int64_t p = a.out_features * in;
      if (a.has_bias) p += a.out_features;
      return p;
    }
    int64_t operator()(const MacroAttrs& a) const { return a.declared_params; }
  };
  if (in_channels < 0) throw StructuralError(node.id + ": negative in_channels");
  return std::visit(Visitor{node, in_channels}, node.kind);
}

int64_t mac_count(const Node& node, const ShapeMap& shapes) {
  struct Visitor {
    const Node& n;
    const ShapeMap& shapes;
    int64_t operator()(const Conv2dAttrs& a) const {
      const TensorShape& in = primary_output(shapes, n.inputs.at(0));
      const TensorShape& out = primary_output(shapes, n.id);
      return out.dims[0] * out.dims[1] * out.dims[2] * in.dims[0] * a.kernel_h * a.kernel_w;
    }
    int64_t operator()(const BatchNorm2dAttrs&) const { return 0; }
    int64_t operator()(const ReluAttrs&) const { return 0; }
    int64_t operator()(const MaxPool2dAttrs&) const { return 0; }
    int64_t operator()(const AddAttrs&) const { return 0; }
    int64_t operator()(const LinearAttrs& a) const {
      const TensorShape& in = primary_output(shapes, n.inputs.at(0));
      return a.out_features * in.dims.back();
    }
    int64_t operator()(const MacroAttrs& a) const { return a.declared_macs; }
  };
  return std::visit(Visitor{node, shapes}, node.kind);
}

namespace {

int64_t node_in_channels(const Node& n, const ShapeMap& shapes) {
  if (n.inputs.empty()) return 0;
  const TensorShape& in = primary_output(shapes, n.inputs[0]);
  if (std::holds_alternative<LinearAttrs>(n.kind)) return in.dims.back();
  return in.dims[0];
}

}  // namespace

std::map<std::string, int64_t> graph_params(const ModelGraph& graph, const ShapeMap& shapes) {
  std::map<std::string, int64_t> out;
  for (const Node& n : graph.nodes()) out[n.id] = param_count(n, node_in_channels(n, shapes));
  return out;
}

std::map<std::string, int64_t> graph_macs(const ModelGraph& graph, const ShapeMap& shapes) {
  std::map<std::string, int64_t> out;
  for (const Node& n : graph.nodes()) out[n.id] = mac_count(n, shapes);
  return out;
}

const TensorShape& primary_output(const ShapeMap& shapes, const std::string& id) {
  auto it = shapes.find(id);
  if (it == shapes.end() || it->second.empty())
    throw StructuralError("no inferred shape for node " + id);
  return it->second.front();
}

int64_t output_elements(const ShapeMap& shapes, const std::string& id) {
  auto it = shapes.find(id);
  if (it == shapes.end()) throw StructuralError("no inferred shape for node " + id);
  int64_t n = 0;
  for (const TensorShape& s : it->second) n += s.elements();
  return n;
}

}  // namespace splitplan
