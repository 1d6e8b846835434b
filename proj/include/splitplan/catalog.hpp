// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splitplan/graph.hpp"

namespace splitplan {

// ResNet family used as detector backbone.
struct BackboneVariant {
  int depth = 50;  // one of 18, 34, 50, 101

  bool bottleneck_blocks() const { return depth >= 50; }
  // Residual blocks per stage, e.g. {3, 4, 6, 3} for depth 50.
  std::vector<int> stage_blocks() const;
  // Stage output channels: (64,128,256,512) basic, (256,...,2048) bottleneck.
  std::vector<int64_t> stage_channels() const;

  static BackboneVariant from_depth(int depth);
};

enum class DetectorKind { FasterRCNN, MaskRCNN };

std::string detector_kind_name(DetectorKind k);

// Injected-bottleneck parameters: C output channels at input/spatial_divisor
// resolution, placed at the end of the redesigned stem+layer1 region.
struct BottleneckConfig {
  int64_t out_channels = 3;
  int64_t spatial_divisor = 4;  // one of 2, 4, 8

  void validate() const;
};

// Parsed form of a catalog model name such as
// "mask_rcnn_r50+bottleneck:C=3,div=4".
struct ModelSpec {
  DetectorKind kind = DetectorKind::FasterRCNN;
  BackboneVariant backbone;
  std::optional<BottleneckConfig> bottleneck;

  std::string canonical_name() const;
};

ModelSpec parse_model_name(const std::string& name);
std::vector<std::string> builtin_model_names();

// ResNet stem + four residual stages. Input must be 3-channel with both
// spatial dims >= 32.
ModelGraph build_backbone(const BackboneVariant& variant, const TensorShape& input_shape);

// Full two-stage detector: backbone, FPN and RPN composed from primitives,
// RoI heads as a macro with nominal 100-detection outputs.
ModelGraph build_detector(const BackboneVariant& variant, DetectorKind kind,
                          const TensorShape& input_shape);

// Replaces the stem+layer1 region with an encoder ending in the designated
// bottleneck node plus a decoder restoring the original layer1 output shape.
// Everything downstream is preserved verbatim.
ModelGraph inject_bottleneck(const ModelGraph& graph, const BottleneckConfig& config);

// parse_model_name + build_detector (+ inject_bottleneck when suffixed).
ModelGraph build_model(const std::string& name, const TensorShape& input_shape);

}  // namespace splitplan
