// SPDX-License-Identifier: Apache-2.0

#include "splitplan/catalog.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace splitplan {

namespace {

constexpr int64_t kFpnChannels = 256;
constexpr int64_t kRpnAnchorsPerCell = 3;
constexpr int64_t kNominalDetections = 100;
constexpr int64_t kNumClasses = 91;  // COCO categories incl. background
constexpr int64_t kRoiPoolSize = 7;
constexpr int64_t kMaskPoolSize = 14;
constexpr int64_t kMaskResolution = 28;
constexpr int64_t kBoxHeadWidth = 1024;

int64_t linear_params(int64_t in, int64_t out) { return out * in + out; }

int64_t conv_params(int64_t in, int64_t out, int64_t kh, int64_t kw, bool bias) {
  return out * in * kh * kw + (bias ? out : 0);
}

// Spatial size tracker used while the builder lays nodes down; shape
// inference re-derives all of this independently.
struct Dims {
  int64_t c, h, w;
};

}  // namespace

std::vector<int> BackboneVariant::stage_blocks() const {
  switch (depth) {
    case 18: return {2, 2, 2, 2};
    case 34: return {3, 4, 6, 3};
    case 50: return {3, 4, 6, 3};
    case 101: return {3, 4, 23, 3};
    default: break;
  }
  throw CatalogError("unsupported ResNet depth " + std::to_string(depth));
}

std::vector<int64_t> BackboneVariant::stage_channels() const {
  if (bottleneck_blocks()) return {256, 512, 1024, 2048};
  return {64, 128, 256, 512};
}

BackboneVariant BackboneVariant::from_depth(int depth) {
  BackboneVariant v{depth};
  v.stage_blocks();  // rejects unsupported depths
  return v;
}

std::string detector_kind_name(DetectorKind k) {
  return k == DetectorKind::FasterRCNN ? "faster_rcnn" : "mask_rcnn";
}

void BottleneckConfig::validate() const {
  if (out_channels < 1) throw CatalogError("bottleneck: out_channels must be >= 1");
  if (spatial_divisor != 2 && spatial_divisor != 4 && spatial_divisor != 8)
    throw CatalogError("bottleneck: spatial_divisor must be 2, 4 or 8");
}

std::string ModelSpec::canonical_name() const {
  std::ostringstream os;
  os << detector_kind_name(kind) << "_r" << backbone.depth;
  if (bottleneck)
    os << "+bottleneck:C=" << bottleneck->out_channels << ",div=" << bottleneck->spatial_divisor;
  return os.str();
}

ModelSpec parse_model_name(const std::string& name) {
  std::string base = name;
  std::optional<BottleneckConfig> bneck;

  if (auto plus = name.find('+'); plus != std::string::npos) {
    base = name.substr(0, plus);
    std::string suffix = name.substr(plus + 1);
    if (suffix.rfind("bottleneck:", 0) != 0)
      throw CatalogError("unknown model suffix '+" + suffix + "'");
    BottleneckConfig cfg;
    bool have_c = false;
    std::istringstream args(suffix.substr(11));
    std::string kv;
    while (std::getline(args, kv, ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw CatalogError("bad bottleneck arg '" + kv + "'");
      std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      try {
        if (key == "C" || key == "c") {
          cfg.out_channels = std::stoll(val);
          have_c = true;
        } else if (key == "div") {
          cfg.spatial_divisor = std::stoll(val);
        } else {
          throw CatalogError("unknown bottleneck key '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        throw CatalogError("bad bottleneck value '" + val + "'");
      } catch (const std::out_of_range&) {
        throw CatalogError("bad bottleneck value '" + val + "'");
      }
    }
    if (!have_c) throw CatalogError("bottleneck suffix requires C=<n>");
    cfg.validate();
    bneck = cfg;
  }

  ModelSpec spec;
  std::string rest;
  if (base.rfind("faster_rcnn_", 0) == 0) {
    spec.kind = DetectorKind::FasterRCNN;
    rest = base.substr(12);
  } else if (base.rfind("mask_rcnn_", 0) == 0) {
    spec.kind = DetectorKind::MaskRCNN;
    rest = base.substr(10);
  } else {
    throw CatalogError("unknown model '" + name + "'");
  }
  if (rest.size() < 2 || rest[0] != 'r') throw CatalogError("unknown model '" + name + "'");
  int depth = 0;
  try {
    depth = std::stoi(rest.substr(1));
  } catch (const std::exception&) {
    throw CatalogError("unknown model '" + name + "'");
  }
  spec.backbone = BackboneVariant::from_depth(depth);
  spec.bottleneck = bneck;
  return spec;
}

std::vector<std::string> builtin_model_names() {
  std::vector<std::string> names;
  for (const char* kind : {"faster_rcnn", "mask_rcnn"})
    for (int depth : {18, 34, 50, 101})
      names.push_back(std::string(kind) + "_r" + std::to_string(depth));
  return names;
}

namespace {

// Incremental builder: tracks each created node's output dims locally so
// macros (upsampling) can declare exact target shapes.
class GraphBuilder {
 public:
  explicit GraphBuilder(ModelGraph& g) : g_(g) {}

  std::string conv(const std::string& id, const std::string& module, const std::string& in,
                   Dims& d, int64_t out_ch, int64_t kh, int64_t kw, int64_t stride,
                   int64_t padding, bool bias) {
    Node n;
    n.id = id;
    n.kind = Conv2dAttrs{out_ch, kh, kw, stride, padding, bias};
    n.inputs = {in};
    n.module = module;
    g_.add(std::move(n));
    d.c = out_ch;
    d.h = conv_out_dim(d.h, kh, stride, padding, id);
    d.w = conv_out_dim(d.w, kw, stride, padding, id);
    return id;
  }

  std::string bn(const std::string& id, const std::string& module, const std::string& in) {
    Node n;
    n.id = id;
    n.kind = BatchNorm2dAttrs{};
    n.inputs = {in};
    n.module = module;
    g_.add(std::move(n));
    return id;
  }

  std::string relu(const std::string& id, const std::string& module, const std::string& in) {
    Node n;
    n.id = id;
    n.kind = ReluAttrs{};
    n.inputs = {in};
    n.module = module;
    g_.add(std::move(n));
    return id;
  }

  std::string maxpool(const std::string& id, const std::string& module, const std::string& in,
                      Dims& d, int64_t kernel, int64_t stride, int64_t padding) {
    Node n;
    n.id = id;
    n.kind = MaxPool2dAttrs{kernel, stride, padding};
    n.inputs = {in};
    n.module = module;
    g_.add(std::move(n));
    d.h = conv_out_dim(d.h, kernel, stride, padding, id);
    d.w = conv_out_dim(d.w, kernel, stride, padding, id);
    return id;
  }

  std::string add(const std::string& id, const std::string& module, const std::string& a,
                  const std::string& b) {
    Node n;
    n.id = id;
    n.kind = AddAttrs{};
    n.inputs = {a, b};
    n.module = module;
    g_.add(std::move(n));
    return id;
  }

  std::string macro(const std::string& id, const std::string& module, const std::string& label,
                    std::vector<std::string> inputs, std::vector<TensorShape> shapes,
                    int64_t params, int64_t macs) {
    Node n;
    n.id = id;
    n.kind = MacroAttrs{label, std::move(shapes), params, macs};
    n.inputs = std::move(inputs);
    n.module = module;
    g_.add(std::move(n));
    return id;
  }

  void mark_boundary(const std::string& id) { g_.mutable_node(id).module_boundary = true; }

  void mark_preferred_split(const std::string& id) { g_.mutable_node(id).preferred_split = true; }

 private:
  ModelGraph& g_;
};

// One basic residual block (two 3x3 convs). Returns the output relu id.
std::string basic_block(GraphBuilder& b, const std::string& prefix, const std::string& module,
                        const std::string& in, Dims& d, int64_t planes, int64_t stride) {
  const Dims din = d;
  std::string x = b.conv(prefix + ".conv1", module, in, d, planes, 3, 3, stride, 1, false);
  x = b.bn(prefix + ".bn1", module, x);
  x = b.relu(prefix + ".relu1", module, x);
  x = b.conv(prefix + ".conv2", module, x, d, planes, 3, 3, 1, 1, false);
  x = b.bn(prefix + ".bn2", module, x);
  std::string skip = in;
  if (stride != 1 || din.c != planes) {
    Dims dd = din;
    skip = b.conv(prefix + ".down.conv", module, in, dd, planes, 1, 1, stride, 0, false);
    skip = b.bn(prefix + ".down.bn", module, skip);
  }
  x = b.add(prefix + ".add", module, x, skip);
  return b.relu(prefix + ".relu_out", module, x);
}

// One bottleneck residual block (1x1 reduce, 3x3, 1x1 expand); the 3x3
// carries the stride.
std::string bottleneck_block(GraphBuilder& b, const std::string& prefix,
                             const std::string& module, const std::string& in, Dims& d,
                             int64_t planes, int64_t stride) {
  const Dims din = d;
  const int64_t out_ch = planes * 4;
  std::string x = b.conv(prefix + ".conv1", module, in, d, planes, 1, 1, 1, 0, false);
  x = b.bn(prefix + ".bn1", module, x);
  x = b.relu(prefix + ".relu1", module, x);
  x = b.conv(prefix + ".conv2", module, x, d, planes, 3, 3, stride, 1, false);
  x = b.bn(prefix + ".bn2", module, x);
  x = b.relu(prefix + ".relu2", module, x);
  x = b.conv(prefix + ".conv3", module, x, d, out_ch, 1, 1, 1, 0, false);
  x = b.bn(prefix + ".bn3", module, x);
  std::string skip = in;
  if (stride != 1 || din.c != out_ch) {
    Dims dd = din;
    skip = b.conv(prefix + ".down.conv", module, in, dd, out_ch, 1, 1, stride, 0, false);
    skip = b.bn(prefix + ".down.bn", module, skip);
  }
  x = b.add(prefix + ".add", module, x, skip);
  return b.relu(prefix + ".relu_out", module, x);
}

struct StageResult {
  std::string out_id;
  Dims dims;
};

void check_backbone_input(const TensorShape& input_shape) {
  if (input_shape.dims.size() != 3 || input_shape.dims[0] != 3)
    throw CatalogError("backbone input must be 3xHxW, got " + input_shape.str());
  if (input_shape.dims[1] < 32 || input_shape.dims[2] < 32)
    throw CatalogError("backbone input spatial dims must be >= 32, got " + input_shape.str());
}

// Stem + residual stages into an existing graph; returns per-stage outputs.
std::vector<StageResult> emit_backbone(GraphBuilder& b, const BackboneVariant& variant,
                                       const TensorShape& input_shape,
                                       const std::string& input_id) {
  Dims d{input_shape.dims[0], input_shape.dims[1], input_shape.dims[2]};
  std::string x = b.conv("stem.conv", "stem", input_id, d, 64, 7, 7, 2, 3, false);
  x = b.bn("stem.bn", "stem", x);
  x = b.relu("stem.relu", "stem", x);
  x = b.maxpool("stem.pool", "stem", x, d, 3, 2, 1);
  b.mark_boundary("stem.pool");

  const std::vector<int> blocks = variant.stage_blocks();
  const std::vector<int64_t> planes = {64, 128, 256, 512};
  std::vector<StageResult> stages;
  for (int stage = 0; stage < 4; ++stage) {
    const std::string module = "layer" + std::to_string(stage + 1);
    const int64_t stage_stride = stage == 0 ? 1 : 2;
    for (int block = 0; block < blocks[stage]; ++block) {
      const std::string prefix = module + "." + std::to_string(block);
      const int64_t stride = block == 0 ? stage_stride : 1;
      if (variant.bottleneck_blocks())
        x = bottleneck_block(b, prefix, module, x, d, planes[stage], stride);
      else
        x = basic_block(b, prefix, module, x, d, planes[stage], stride);
    }
    b.mark_boundary(x);
    stages.push_back({x, d});
  }
  return stages;
}

std::string emit_input(ModelGraph& g, const TensorShape& input_shape) {
  Node n;
  n.id = "input";
  n.kind = MacroAttrs{"input", {input_shape}, 0, 0};
  n.module = "input";
  n.module_boundary = true;
  g.add(std::move(n));
  return "input";
}

}  // namespace

ModelGraph build_backbone(const BackboneVariant& variant, const TensorShape& input_shape) {
  check_backbone_input(input_shape);
  ModelGraph g;
  g.name = "resnet" + std::to_string(variant.depth);
  g.input_shape = input_shape;
  GraphBuilder b(g);
  std::string input_id = emit_input(g, input_shape);
  auto stages = emit_backbone(b, variant, input_shape, input_id);
  g.outputs = {stages.back().out_id};
  g.validate();
  return g;
}

ModelGraph build_detector(const BackboneVariant& variant, DetectorKind kind,
                          const TensorShape& input_shape) {
  check_backbone_input(input_shape);
  ModelGraph g;
  ModelSpec spec{kind, variant, std::nullopt};
  g.name = spec.canonical_name();
  g.input_shape = input_shape;
  GraphBuilder b(g);
  std::string input_id = emit_input(g, input_shape);
  auto stages = emit_backbone(b, variant, input_shape, input_id);

  // FPN: per-level 1x1 lateral convs into a top-down pathway (nearest
  // upsampling as zero-cost macros), then per-level 3x3 output convs.
  std::array<std::string, 4> lateral;
  for (int i = 3; i >= 0; --i) {
    Dims d = stages[i].dims;
    lateral[i] = b.conv("fpn.lateral" + std::to_string(i + 1), "fpn", stages[i].out_id, d,
                        kFpnChannels, 1, 1, 1, 0, true);
  }
  // inner4 = lateral4; inner_i = lateral_i + upsample(inner_{i+1})
  std::array<std::string, 4> inner;
  inner[3] = lateral[3];
  for (int i = 2; i >= 0; --i) {
    const Dims& target = stages[i].dims;
    std::string up = b.macro("fpn.up" + std::to_string(i + 2), "fpn", "upsample_nearest",
                             {inner[i + 1]},
                             {TensorShape({kFpnChannels, target.h, target.w})}, 0, 0);
    inner[i] = b.add("fpn.add" + std::to_string(i + 1), "fpn", lateral[i], up);
  }
  std::array<std::string, 4> pyramid;  // p2..p5 finest to coarsest
  for (int i = 3; i >= 0; --i) {
    Dims d{kFpnChannels, stages[i].dims.h, stages[i].dims.w};
    pyramid[i] = b.conv("fpn.p" + std::to_string(i + 2), "fpn", inner[i], d, kFpnChannels, 3, 3,
                        1, 1, true);
  }
  b.mark_boundary(pyramid[0]);

  // RPN head (shared across levels; laid down once on the finest level so
  // its parameters are counted once).
  Dims d2{kFpnChannels, stages[0].dims.h, stages[0].dims.w};
  std::string rpn = b.conv("rpn.conv", "rpn", pyramid[0], d2, kFpnChannels, 3, 3, 1, 1, true);
  rpn = b.relu("rpn.relu", "rpn", rpn);
  Dims dc = d2, db = d2;
  std::string rpn_cls =
      b.conv("rpn.cls", "rpn", rpn, dc, kRpnAnchorsPerCell, 1, 1, 1, 0, true);
  std::string rpn_box =
      b.conv("rpn.box", "rpn", rpn, db, kRpnAnchorsPerCell * 4, 1, 1, 1, 0, true);
  b.mark_boundary(rpn_box);

  // RoI heads: proposal-dependent, so declared as a macro. Costs are composed
  // from Linear/conv arithmetic at the nominal 100 detections.
  const int64_t box_in = kFpnChannels * kRoiPoolSize * kRoiPoolSize;  // 12544
  int64_t roi_params = linear_params(box_in, kBoxHeadWidth) +
                       linear_params(kBoxHeadWidth, kBoxHeadWidth) +
                       linear_params(kBoxHeadWidth, kNumClasses) +
                       linear_params(kBoxHeadWidth, kNumClasses * 4);
  int64_t roi_macs = kNominalDetections *
                     (box_in * kBoxHeadWidth + kBoxHeadWidth * kBoxHeadWidth +
                      kBoxHeadWidth * kNumClasses + kBoxHeadWidth * kNumClasses * 4);
  std::vector<TensorShape> roi_outputs = {
      TensorShape({kNominalDetections, 4}),  // boxes
      TensorShape({kNominalDetections}),     // labels
      TensorShape({kNominalDetections}),     // scores
  };
  if (kind == DetectorKind::MaskRCNN) {
    const int64_t mask_area = kMaskPoolSize * kMaskPoolSize;
    roi_params += 4 * conv_params(kFpnChannels, kFpnChannels, 3, 3, true) +
                  (kFpnChannels * kFpnChannels * 2 * 2 + kFpnChannels) +  // 2x2 s2 deconv
                  conv_params(kFpnChannels, kNumClasses, 1, 1, true);
    roi_macs += kNominalDetections *
                (4 * kFpnChannels * mask_area * kFpnChannels * 9 +
                 kFpnChannels * 2 * 2 * mask_area * kFpnChannels +
                 kNumClasses * kMaskResolution * kMaskResolution * kFpnChannels);
    roi_outputs.push_back(
        TensorShape({kNominalDetections, kNumClasses, kMaskResolution, kMaskResolution}));
  }
  std::string roi = b.macro(
      "roi_heads", "roi", "roi_heads",
      {pyramid[0], pyramid[1], pyramid[2], pyramid[3], rpn_cls, rpn_box}, roi_outputs,
      roi_params, roi_macs);
  b.mark_boundary(roi);

  g.outputs = {roi};
  g.result_shapes = {TensorShape({kNominalDetections, 4}), TensorShape({kNominalDetections}),
                     TensorShape({kNominalDetections})};
  g.validate();
  return g;
}

ModelGraph inject_bottleneck(const ModelGraph& graph, const BottleneckConfig& config) {
  config.validate();

  // Locate the layer1 boundary whose consumers get rewired.
  std::string l1end;
  for (const Node& n : graph.nodes())
    if (n.module == "layer1" && n.module_boundary) l1end = n.id;
  if (l1end.empty())
    throw StructuralError(graph.name + ": no layer1 boundary marker to inject at");

  const ShapeMap shapes = infer_shapes(graph);
  const TensorShape layer1_out = primary_output(shapes, l1end);
  const TensorShape& in = graph.input_shape;

  ModelGraph out;
  try {
    ModelSpec spec = parse_model_name(graph.name);
    spec.bottleneck = config;
    out.name = spec.canonical_name();
  } catch (const CatalogError&) {
    // non-catalog graph; keep its own name plus the canonical suffix
    out.name = graph.name + "+bottleneck:C=" + std::to_string(config.out_channels) +
               ",div=" + std::to_string(config.spatial_divisor);
  }
  out.input_shape = in;
  out.result_shapes = graph.result_shapes;
  out.outputs = graph.outputs;

  GraphBuilder b(out);
  std::string input_id = emit_input(out, in);

  // Encoder: stride-2 7x7 stem conv, then 3x3 convs to the target divisor,
  // ending in the designated bottleneck normalization.
  Dims d{in.dims[0], in.dims[1], in.dims[2]};
  std::string x = b.conv("bneck.enc.conv1", "bottleneck_encoder", input_id, d, 64, 7, 7, 2, 3,
                         false);
  x = b.bn("bneck.enc.bn1", "bottleneck_encoder", x);
  x = b.relu("bneck.enc.relu1", "bottleneck_encoder", x);
  if (config.spatial_divisor == 8) {
    x = b.conv("bneck.enc.conv2", "bottleneck_encoder", x, d, 64, 3, 3, 2, 1, false);
    x = b.bn("bneck.enc.bn2", "bottleneck_encoder", x);
    x = b.relu("bneck.enc.relu2", "bottleneck_encoder", x);
  }
  const int64_t last_stride = config.spatial_divisor == 2 ? 1 : 2;
  x = b.conv("bneck.enc.conv_out", "bottleneck_encoder", x, d, config.out_channels, 3, 3,
             last_stride, 1, false);
  x = b.bn("bneck.enc.bn_out", "bottleneck_encoder", x);
  b.mark_boundary(x);
  b.mark_preferred_split(x);

  const int64_t want_h = (in.dims[1] + config.spatial_divisor - 1) / config.spatial_divisor;
  const int64_t want_w = (in.dims[2] + config.spatial_divisor - 1) / config.spatial_divisor;
  if (d.h != want_h || d.w != want_w)
    throw StructuralError("bottleneck spatial mismatch: got " + std::to_string(d.h) + "x" +
                          std::to_string(d.w));

  // Decoder: restore the original layer1 output shape so everything
  // downstream is untouched.
  if (config.spatial_divisor == 8) {
    x = b.macro("bneck.dec.up", "bottleneck_decoder", "upsample_nearest", {x},
                {TensorShape({config.out_channels, layer1_out.dims[1], layer1_out.dims[2]})}, 0,
                0);
    d.h = layer1_out.dims[1];
    d.w = layer1_out.dims[2];
  }
  const int64_t dec_stride = config.spatial_divisor == 2 ? 2 : 1;
  x = b.conv("bneck.dec.conv1", "bottleneck_decoder", x, d, 64, 3, 3, dec_stride, 1, false);
  x = b.bn("bneck.dec.bn1", "bottleneck_decoder", x);
  x = b.relu("bneck.dec.relu1", "bottleneck_decoder", x);
  x = b.conv("bneck.dec.conv2", "bottleneck_decoder", x, d, layer1_out.dims[0], 3, 3, 1, 1,
             false);
  x = b.bn("bneck.dec.bn2", "bottleneck_decoder", x);
  x = b.relu("bneck.dec.relu_out", "bottleneck_decoder", x);
  b.mark_boundary(x);
  const std::string decoder_out = x;

  if (TensorShape({d.c, d.h, d.w}) != layer1_out)
    throw StructuralError("bottleneck decoder output " +
                          TensorShape({d.c, d.h, d.w}).str() + " != original layer1 output " +
                          layer1_out.str());

  // Copy every node downstream of the replaced region, rewiring references
  // to the old layer1 output.
  for (const Node& n : graph.nodes()) {
    if (n.module == "input" || n.module == "stem" || n.module == "layer1") continue;
    Node copy = n;
    for (std::string& ref : copy.inputs) {
      if (ref == l1end) {
        ref = decoder_out;
      } else {
        const Node& src = graph.node(ref);
        if (src.module == "input" || src.module == "stem" || src.module == "layer1")
          throw StructuralError(n.id + ": consumes removed node " + ref);
      }
    }
    out.add(std::move(copy));
  }

  out.validate();
  return out;
}

ModelGraph build_model(const std::string& name, const TensorShape& input_shape) {
  ModelSpec spec = parse_model_name(name);
  ModelGraph g = build_detector(spec.backbone, spec.kind, input_shape);
  if (spec.bottleneck) g = inject_bottleneck(g, *spec.bottleneck);
  return g;
}

}  // namespace splitplan
