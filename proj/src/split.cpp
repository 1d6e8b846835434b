// SPDX-License-Identifier: Apache-2.0

#include "splitplan/split.hpp"

#include <algorithm>

namespace splitplan {

namespace {

// Ancestor closures, one bit-set per node, computed along the topo order.
std::vector<std::vector<bool>> ancestor_closures(const ModelGraph& graph) {
  const auto& order = graph.topo_order();
  const size_t n = order.size();
  std::vector<std::vector<bool>> closure(n, std::vector<bool>(n, false));
  for (size_t i = 0; i < n; ++i) {
    closure[i][i] = true;
    for (const std::string& in : graph.node(order[i]).inputs) {
      const size_t j = graph.topo_index(in);
      for (size_t k = 0; k <= j; ++k)
        if (closure[j][k]) closure[i][k] = true;
    }
  }
  return closure;
}

SplitCut make_cut(const ModelGraph& graph, const std::string& cut_node, CutKind kind,
                  const std::vector<bool>& head_bits) {
  const auto& order = graph.topo_order();
  SplitCut cut;
  cut.cut_node = cut_node;
  cut.kind = kind;
  for (size_t i = 0; i < order.size(); ++i)
    if (head_bits[i]) cut.head_set.insert(order[i]);
  // Boundary edges from head producers to tail consumers, in topo order.
  for (size_t i = 0; i < order.size(); ++i) {
    if (!head_bits[i]) continue;
    for (const std::string& succ : graph.successors(order[i])) {
      if (!head_bits[graph.topo_index(succ)])
        cut.boundary_edges.push_back({order[i], succ, {}});
    }
  }
  std::sort(cut.boundary_edges.begin(), cut.boundary_edges.end(),
            [&](const BoundaryEdge& a, const BoundaryEdge& b) {
              auto ka = std::pair(graph.topo_index(a.producer), graph.topo_index(a.consumer));
              auto kb = std::pair(graph.topo_index(b.producer), graph.topo_index(b.consumer));
              return ka < kb;
            });
  return cut;
}

}  // namespace

std::vector<SplitCut> enumerate_cuts(const ModelGraph& graph) {
  graph.validate();
  const auto& order = graph.topo_order();
  const auto closures = ancestor_closures(graph);

  std::vector<SplitCut> cuts;
  cuts.reserve(order.size() + 1);
  for (size_t i = 0; i < order.size(); ++i) {
    // The input-node closure is the pure-edge endpoint; a closure covering
    // the whole graph duplicates the pure-mobile endpoint appended below.
    const size_t head_size =
        static_cast<size_t>(std::count(closures[i].begin(), closures[i].end(), true));
    if (head_size == order.size()) continue;
    const CutKind kind = i == 0 ? CutKind::PureEdge : CutKind::Interior;
    cuts.push_back(make_cut(graph, order[i], kind, closures[i]));
  }
  std::vector<bool> all(order.size(), true);
  cuts.push_back(make_cut(graph, order.back(), CutKind::PureMobile, all));
  return cuts;
}

CutPayload cut_payload(const ModelGraph& graph, const SplitCut& cut, const ShapeMap& shapes) {
  CutPayload payload;
  const int64_t input_elements = graph.input_shape.elements();

  if (cut.kind == CutKind::PureMobile) {
    // Only the nominal detection result leaves the device.
    payload.tensors = graph.result_shapes;
  } else {
    // One tensor per distinct producer crossing the cut.
    std::vector<std::string> producers;
    for (const BoundaryEdge& e : cut.boundary_edges)
      if (std::find(producers.begin(), producers.end(), e.producer) == producers.end())
        producers.push_back(e.producer);
    for (const std::string& p : producers) {
      const auto& outs = shapes.at(p);
      payload.tensors.insert(payload.tensors.end(), outs.begin(), outs.end());
    }
  }
  for (const TensorShape& t : payload.tensors) payload.total_elements += t.elements();
  payload.normalized_ratio =
      static_cast<double>(payload.total_elements) / static_cast<double>(input_elements);
  return payload;
}

std::vector<ProfileRow> normalized_profile(const ModelGraph& graph) {
  const ShapeMap shapes = infer_shapes(graph);
  const auto params = graph_params(graph, shapes);
  const auto cuts = enumerate_cuts(graph);
  const double input_elements = static_cast<double>(graph.input_shape.elements());

  std::vector<ProfileRow> rows;
  rows.reserve(cuts.size());
  for (const SplitCut& cut : cuts) {
    const Node& n = graph.node(cut.cut_node);
    ProfileRow row;
    row.cut_node = cut.cut_node;
    row.module = n.module;
    row.module_boundary = n.module_boundary;
    row.kind = cut.kind;
    row.payload = cut_payload(graph, cut, shapes);
    row.output_elements = output_elements(shapes, cut.cut_node);
    row.output_ratio = static_cast<double>(row.output_elements) / input_elements;
    int64_t head_params = 0;
    for (const std::string& id : cut.head_set) head_params += params.at(id);
    row.cumulative_params = head_params;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ModuleParams> cumulative_params(const ModelGraph& graph) {
  const ShapeMap shapes = infer_shapes(graph);
  const auto params = graph_params(graph, shapes);

  std::vector<ModuleParams> rows;
  for (const std::string& id : graph.topo_order()) {
    const Node& n = graph.node(id);
    if (n.module == "input") continue;
    if (rows.empty() || rows.back().module != n.module) {
      ModuleParams m;
      m.module = n.module;
      m.cumulative = rows.empty() ? 0 : rows.back().cumulative;
      rows.push_back(m);
    }
    rows.back().params += params.at(id);
    rows.back().cumulative += params.at(id);
  }
  return rows;
}

}  // namespace splitplan
