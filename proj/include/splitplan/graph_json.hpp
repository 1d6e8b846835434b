// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "splitplan/graph.hpp"

namespace splitplan {

// Graph description format: {format_version, name, input_shape,
// result_shapes, outputs, nodes:[{id, kind, params..., inputs, module}]}.
// Node array order is the topological order.
nlohmann::json graph_to_json(const ModelGraph& graph);
ModelGraph graph_from_json(const nlohmann::json& j);

void save_graph(const ModelGraph& graph, const std::string& path);
ModelGraph load_graph(const std::string& path);

}  // namespace splitplan
