// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splitplan/catalog.hpp"

namespace splitplan {

// One row of user-supplied detection scores. Scores are never computed here
// (that needs COCO training); they are ingested with a mandatory source tag.
struct MapDataRow {
  std::string model;
  bool original = false;  // upper-bound row for the unmodified model
  int c = 0;              // bottleneck channels when !original
  double bbox_map = 0;
  std::optional<double> mask_map;
  std::string source;
};

// CSV with header model,c,bbox_map,mask_map,source; c is an integer or
// "original"; mask_map may be empty. Errors cite the offending line.
std::vector<MapDataRow> load_map_data(const std::string& path);

struct TradeoffPoint {
  BottleneckConfig config;
  double size_ratio = 0;  // bottleneck elements / input elements
  std::optional<double> bbox_map;
  std::optional<double> mask_map;
  std::string source;
};

struct TradeoffReport {
  std::string model;
  TensorShape input_shape;
  int divisor = 4;
  std::vector<TradeoffPoint> points;
  std::optional<double> original_bbox_map;
  std::optional<double> original_mask_map;
  std::string original_source;
};

// Computes size ratios for each channel count by building the injected graph
// and measuring the designated bottleneck node, then joins score rows.
TradeoffReport build_tradeoff(const ModelSpec& base, const std::vector<int>& c_list,
                              int divisor, const TensorShape& input_shape,
                              const std::vector<MapDataRow>& map_rows);

std::string tradeoff_csv(const TradeoffReport& report);
std::string tradeoff_svg(const TradeoffReport& report);

}  // namespace splitplan
