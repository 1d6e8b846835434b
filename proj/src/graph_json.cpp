// SPDX-License-Identifier: Apache-2.0

#include "splitplan/graph_json.hpp"

#include <fstream>

namespace splitplan {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json shape_to_json(const TensorShape& s) { return json(s.dims); }

TensorShape shape_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw DataError("graph file: bad shape");
  std::vector<int64_t> dims;
  for (const auto& d : j) {
    if (!d.is_number_integer() && !d.is_number_unsigned())
      throw DataError("graph file: non-integer dim");
    dims.push_back(d.get<int64_t>());
  }
  return TensorShape(std::move(dims));
}

json kind_to_json(const Node& n) {
  struct Visitor {
    json& j;
    void operator()(const Conv2dAttrs& a) const {
      j["out_channels"] = a.out_channels;
      j["kernel"] = {a.kernel_h, a.kernel_w};
      j["stride"] = a.stride;
      j["padding"] = a.padding;
      j["bias"] = a.has_bias;
    }
    void operator()(const BatchNorm2dAttrs&) const {}
    void operator()(const ReluAttrs&) const {}
    void operator()(const MaxPool2dAttrs& a) const {
      j["kernel"] = a.kernel;
      j["stride"] = a.stride;
      j["padding"] = a.padding;
    }
    void operator()(const AddAttrs&) const {}
    void operator()(const LinearAttrs& a) const {
      j["out_features"] = a.out_features;
      j["bias"] = a.has_bias;
    }
    void operator()(const MacroAttrs& a) const {
      j["label"] = a.label;
      json shapes = json::array();
      for (const TensorShape& s : a.output_shapes) shapes.push_back(shape_to_json(s));
      j["output_shapes"] = shapes;
      j["params"] = a.declared_params;
      j["macs"] = a.declared_macs;
    }
  };
  json j;
  j["id"] = n.id;
  j["kind"] = n.kind_name();
  std::visit(Visitor{j}, n.kind);
  j["inputs"] = n.inputs;
  if (!n.module.empty()) j["module"] = n.module;
  if (n.module_boundary) j["module_boundary"] = true;
  if (n.preferred_split) j["preferred_split"] = true;
  return j;
}

NodeKind kind_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") {
    Conv2dAttrs a;
    a.out_channels = j.at("out_channels").get<int64_t>();
    const auto& k = j.at("kernel");
    if (!k.is_array() || k.size() != 2) throw DataError("graph file: conv kernel must be [h,w]");
    a.kernel_h = k[0].get<int64_t>();
    a.kernel_w = k[1].get<int64_t>();
    a.stride = j.value("stride", int64_t{1});
    a.padding = j.value("padding", int64_t{0});
    a.has_bias = j.value("bias", false);
    return a;
  }
  if (kind == "batchnorm2d") return BatchNorm2dAttrs{};
  if (kind == "relu") return ReluAttrs{};
  if (kind == "maxpool2d") {
    MaxPool2dAttrs a;
    a.kernel = j.at("kernel").get<int64_t>();
    a.stride = j.value("stride", int64_t{1});
    a.padding = j.value("padding", int64_t{0});
    return a;
  }
  if (kind == "add") return AddAttrs{};
  if (kind == "linear") {
    LinearAttrs a;
    a.out_features = j.at("out_features").get<int64_t>();
    a.has_bias = j.value("bias", false);
    return a;
  }
  if (kind == "macro") {
    MacroAttrs a;
    a.label = j.value("label", std::string{});
    for (const auto& s : j.at("output_shapes")) a.output_shapes.push_back(shape_from_json(s));
    a.declared_params = j.value("params", int64_t{0});
    a.declared_macs = j.value("macs", int64_t{0});
    return a;
  }
  throw DataError("graph file: unknown node kind '" + kind + "'");
}

}  // namespace

json graph_to_json(const ModelGraph& graph) {
  json j;
  j["format_version"] = kFormatVersion;
  j["name"] = graph.name;
  j["input_shape"] = shape_to_json(graph.input_shape);
  json rs = json::array();
  for (const TensorShape& s : graph.result_shapes) rs.push_back(shape_to_json(s));
  j["result_shapes"] = rs;
  j["outputs"] = graph.outputs;
  json nodes = json::array();
  for (const Node& n : graph.nodes()) nodes.push_back(kind_to_json(n));
  j["nodes"] = nodes;
  return j;
}

ModelGraph graph_from_json(const json& j) {
  try {
    if (j.value("format_version", 0) != kFormatVersion)
      throw DataError("graph file: unsupported format_version");
    ModelGraph g;
    g.name = j.value("name", std::string{});
    g.input_shape = shape_from_json(j.at("input_shape"));
    if (j.contains("result_shapes"))
      for (const auto& s : j.at("result_shapes")) g.result_shapes.push_back(shape_from_json(s));
    g.outputs = j.at("outputs").get<std::vector<std::string>>();
    for (const auto& nj : j.at("nodes")) {
      Node n;
      n.id = nj.at("id").get<std::string>();
      n.kind = kind_from_json(nj);
      n.inputs = nj.value("inputs", std::vector<std::string>{});
      n.module = nj.value("module", std::string{});
      n.module_boundary = nj.value("module_boundary", false);
      n.preferred_split = nj.value("preferred_split", false);
      g.add(std::move(n));
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw DataError(std::string("graph file: ") + e.what());
  }
}

void save_graph(const ModelGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << graph_to_json(graph).dump(2) << '\n';
}

ModelGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return graph_from_json(j);
}

}  // namespace splitplan
