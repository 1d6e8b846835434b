// SPDX-License-Identifier: Apache-2.0
//
// End-to-end gate: one test case per advertised guarantee, each printing a
// single [criterion N] PASS/FAIL line next to the regular doctest output.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/param_oracle.hpp"
#include "oracles/shape_oracle.hpp"
#include "splitplan/catalog.hpp"
#include "splitplan/errors.hpp"
#include "splitplan/split.hpp"
#include "splitplan/timing.hpp"
#include "splitplan/wire.hpp"

using namespace splitplan;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int n;
  const char* what;
  bool ok = true;
  ~Criterion() {
    std::printf("[criterion %d] %s — %s\n", n, ok ? "PASS" : "FAIL", what);
    std::fflush(stdout);
  }
};

#define EXPECT(crit, cond)     \
  do {                         \
    const bool v_ = (cond);    \
    (crit).ok = (crit).ok && v_; \
    CHECK(v_);                 \
  } while (0)

std::string data_path(const char* file) {
  return std::string(SPLITPLAN_SOURCE_DIR) + "/data/" + file;
}

BuiltinProfileTable runtimes() {
  return BuiltinProfileTable::load(data_path("device_runtimes.json"));
}

const ProfileRow* boundary_row(const ModelGraph& g, const std::vector<ProfileRow>& rows,
                               const std::string& module) {
  for (const ProfileRow& r : rows) {
    if (r.cut_node.empty()) continue;
    if (g.node(r.cut_node).module == module && r.module_boundary) return &r;
  }
  return nullptr;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("criterion 1: shape inference equals the sliding-window oracle") {
  Criterion c{1, "infer_shapes matches the independent oracle on all catalog graphs"};
  const TensorShape input({3, 800, 800});

  for (const std::string& name : builtin_model_names()) {
    ModelGraph g = build_model(name, input);
    ShapeMap shapes = infer_shapes(g);
    auto oracle_map = oracle::oracle_shapes(g);
    bool graph_ok = oracle_map.size() == shapes.size();
    for (const Node& n : g.nodes()) {
      const auto& got = shapes.at(n.id);
      const auto& want = oracle_map.at(n.id);
      if (got.size() != want.size()) {
        graph_ok = false;
        continue;
      }
      for (size_t i = 0; i < got.size(); ++i)
        if (got[i].dims != want[i]) graph_ok = false;
    }
    EXPECT(c, graph_ok);
  }

  // Pinned ResNet-50 stage interfaces at 800x800.
  ModelGraph r50 = build_model("faster_rcnn_r50", input);
  ShapeMap shapes = infer_shapes(r50);
  auto stage = [&](const char* module) -> std::vector<int64_t> {
    for (const Node& n : r50.nodes())
      if (n.module == module && n.module_boundary) return primary_output(shapes, n.id).dims;
    return {};
  };
  EXPECT(c, stage("layer1") == (std::vector<int64_t>{256, 200, 200}));
  EXPECT(c, stage("layer2") == (std::vector<int64_t>{512, 100, 100}));
  EXPECT(c, stage("layer3") == (std::vector<int64_t>{1024, 50, 50}));
  EXPECT(c, stage("layer4") == (std::vector<int64_t>{2048, 25, 25}));
}

TEST_CASE("criterion 2: early cuts always ship more than the input") {
  Criterion c{2, "pre-layer4 payload ratios exceed 1 and the exact cut ratios hold"};

  for (const char* name : {"faster_rcnn_r50", "mask_rcnn_r50"}) {
    ModelGraph g = build_model(name, TensorShape({3, 800, 800}));
    std::vector<ProfileRow> rows = normalized_profile(g);
    const int64_t in_elems = g.input_shape.elements();

    // Every interior cut in stem/layer1/layer2/layer3 carries > input bytes.
    for (const ProfileRow& r : rows) {
      if (r.kind != CutKind::Interior) continue;
      const std::string& m = g.node(r.cut_node).module;
      if (m == "stem" || m == "layer1" || m == "layer2" || m == "layer3")
        EXPECT(c, r.payload.normalized_ratio > 1.0);
    }

    // Exact rationals at the classic cut points: 16/3, 4/3, 16/3, 8/3, 4/3.
    const ProfileRow* stem_conv = nullptr;
    for (const ProfileRow& r : rows)
      if (r.cut_node == "stem.conv") stem_conv = &r;
    EXPECT(c, stem_conv != nullptr);
    if (stem_conv) EXPECT(c, 3 * stem_conv->output_elements == 16 * in_elems);
    auto cut_output = [&](const char* module) -> int64_t {
      const ProfileRow* r = boundary_row(g, rows, module);
      return r ? r->output_elements : -1;
    };
    EXPECT(c, 3 * cut_output("stem") == 4 * in_elems);
    EXPECT(c, 3 * cut_output("layer1") == 16 * in_elems);
    EXPECT(c, 3 * cut_output("layer2") == 8 * in_elems);
    EXPECT(c, 3 * cut_output("layer3") == 4 * in_elems);
  }

  // The mask detector's terminal point sits above the box-only detector's.
  ModelGraph faster = build_model("faster_rcnn_r50", TensorShape({3, 800, 800}));
  ModelGraph mask = build_model("mask_rcnn_r50", TensorShape({3, 800, 800}));
  double faster_terminal = normalized_profile(faster).back().output_ratio;
  double mask_terminal = normalized_profile(mask).back().output_ratio;
  EXPECT(c, mask_terminal > faster_terminal);
}

TEST_CASE("criterion 3: parameter counts match the hand-derived oracle") {
  Criterion c{3, "stem/backbone parameter totals are exact and cumulative sums are monotone"};
  const TensorShape input({3, 800, 800});

  ModelGraph r50 = build_backbone(BackboneVariant::from_depth(50), input);
  ShapeMap shapes = infer_shapes(r50);
  auto params = graph_params(r50, shapes);
  int64_t stem_conv = 0, stem_bn = 0;
  for (const Node& n : r50.nodes()) {
    if (n.module != "stem") continue;
    if (n.kind_name() == "conv2d") stem_conv += params.at(n.id);
    if (n.kind_name() == "batchnorm2d") stem_bn += params.at(n.id);
  }
  EXPECT(c, stem_conv == 9408);
  EXPECT(c, stem_bn == 128);

  for (int depth : {18, 34, 50, 101}) {
    ModelGraph g = build_backbone(BackboneVariant::from_depth(depth), input);
    ShapeMap s = infer_shapes(g);
    int64_t total = 0;
    for (const auto& [id, v] : graph_params(g, s)) total += v;
    EXPECT(c, total == oracle::backbone_params(depth));
  }

  for (const char* name : {"faster_rcnn_r50", "mask_rcnn_r50"}) {
    ModelGraph g = build_model(name, input);
    std::vector<ModuleParams> mods = cumulative_params(g);
    int64_t prev = 0;
    bool monotone = true;
    for (const ModuleParams& m : mods) {
      if (m.cumulative < prev) monotone = false;
      prev = m.cumulative;
    }
    EXPECT(c, monotone);
    EXPECT(c, mods.back().cumulative ==
                  oracle::detector_params(50, std::string(name) == "mask_rcnn_r50"));
  }
}

TEST_CASE("criterion 4: injected bottleneck savings at the reference input") {
  Criterion c{4, "C=3 saves ~93.7% of the input bytes and savings shrink as C grows"};
  const TensorShape input({3, 874, 1044});

  double prev_saving = 1.0;
  for (int64_t ch : {3, 6, 9, 12, 15}) {
    ModelGraph g = build_model(
        "faster_rcnn_r50+bottleneck:C=" + std::to_string(ch), input);
    std::vector<ProfileRow> rows = normalized_profile(g);
    const ProfileRow* designated = nullptr;
    for (const ProfileRow& r : rows)
      if (r.kind == CutKind::Interior && g.node(r.cut_node).preferred_split) designated = &r;
    EXPECT(c, designated != nullptr);
    if (!designated) continue;

    double saving = 1.0 - designated->payload.normalized_ratio;
    if (ch == 3) {
      // 1 - 3*219*261 / (3*874*1044) = 0.9373568...; the published upper
      // figure is 93.4%, so stay within 1.5 points of it.
      EXPECT(c, std::abs(saving - 0.9373568) < 1e-6);
      EXPECT(c, std::abs(saving - 0.934) <= 0.015);
    }
    EXPECT(c, saving < prev_saving);
    prev_saving = saving;
  }
}

TEST_CASE("criterion 5: endpoints win on the stock graph, the bottleneck opens a middle") {
  Criterion c{5, "stock sweeps end at an endpoint everywhere; the C=3 cut wins somewhere"};
  BuiltinProfileTable table = runtimes();

  std::vector<double> bws;
  for (int i = 0; i <= 40; ++i)
    bws.push_back(0.1e6 * std::pow(10.0, 4.0 * i / 40.0));  // 0.1..1000 Mbps

  // Original graph: rpi4 against desktop gpu never favors an interior cut.
  ModelGraph stock = build_model("faster_rcnn_r50", TensorShape({3, 800, 800}));
  DeviceProfile rpi = table.profile("rpi4", DetectorKind::FasterRCNN, 50);
  DeviceProfile gpu = table.profile("desktop_gpu", DetectorKind::FasterRCNN, 50);
  for (const SweepPoint& pt : sweep_bandwidth(stock, rpi, gpu, DataType::F32, bws))
    EXPECT(c, pt.best.cut.kind != CutKind::Interior);

  // C=3 bottleneck with a jetson-class mobile: the designated cut must beat
  // both endpoints at some bandwidth in the same sweep.
  ModelGraph bneck = build_model("faster_rcnn_r50+bottleneck:C=3", TensorShape({3, 874, 1044}));
  DeviceProfile jetson = table.profile("jetson_tx2", DetectorKind::FasterRCNN, 50);
  std::string designated;
  for (const Node& n : bneck.nodes())
    if (n.preferred_split) designated = n.id;
  EXPECT(c, !designated.empty());

  double crossover_mbps = -1.0;
  for (const SweepPoint& pt : sweep_bandwidth(bneck, jetson, gpu, DataType::F32, bws)) {
    if (pt.best.cut.cut_node == designated && pt.best.cut.kind == CutKind::Interior) {
      crossover_mbps = pt.bandwidth_bps / 1e6;
      break;
    }
  }
  EXPECT(c, crossover_mbps > 0.0);
  if (crossover_mbps > 0.0)
    std::printf("[criterion 5] note: bottleneck cut first wins at %.3f Mbps\n", crossover_mbps);
}

TEST_CASE("criterion 6: the three-term sum is exact for an empty head") {
  Criterion c{6, "pure-edge total at 100 Mbps equals 0.6578 s to 1e-9 relative"};
  ModelGraph g = build_model("faster_rcnn_r50", TensorShape({3, 800, 800}));
  BuiltinProfileTable table = runtimes();
  DeviceProfile rpi = table.profile("rpi4", DetectorKind::FasterRCNN, 50);
  DeviceProfile gpu = table.profile("desktop_gpu", DetectorKind::FasterRCNN, 50);

  auto cuts = enumerate_cuts(g);
  TimeBreakdown t = evaluate_split(g, cuts.front(), rpi, gpu, ChannelModel{100e6, 0.0, 1.0},
                                   DataType::F32);
  EXPECT(c, t.cut_kind == CutKind::PureEdge);
  EXPECT(c, t.head_seconds == 0.0);
  EXPECT(c, std::abs(t.comm_seconds - 0.6144) <= 0.6144 * 1e-9);
  EXPECT(c, std::abs(t.total_seconds - 0.6578) <= 0.6578 * 1e-9);
}

TEST_CASE("criterion 7: the wire format survives noise and meets the pacing clock") {
  Criterion c{7, "1000+ frame round trips, exact framing, bit-flip detection, paced TCP"};

  // Round-trip identity across shapes, dtypes and codecs.
  std::mt19937_64 rng(2024);
  int trips = 0;
  bool round_trips_ok = true;
  while (trips < 1050) {
    const int ndim = 1 + static_cast<int>(rng() % 4);
    std::vector<int64_t> dims;
    for (int d = 0; d < ndim; ++d) dims.push_back(1 + static_cast<int64_t>(rng() % 13));
    TensorShape shape(dims);
    for (DataType dtype : {DataType::F32, DataType::F16, DataType::U8}) {
      for (Codec codec : {Codec::None, Codec::Deflate}) {
        const size_t bytes = static_cast<size_t>(tensor_bytes(shape, dtype));
        std::vector<uint8_t> tensor(bytes);
        for (auto& b : tensor) b = static_cast<uint8_t>(rng());
        auto frame = encode_frame(shape, dtype, tensor.data(), bytes, codec);
        DecodedFrame decoded = decode_frame(frame.data(), frame.size());
        if (!(decoded.shape == shape) || decoded.dtype != dtype || decoded.payload != tensor ||
            decoded.frame_size != frame.size())
          round_trips_ok = false;
        ++trips;
      }
    }
  }
  EXPECT(c, round_trips_ok);
  EXPECT(c, trips >= 1000);

  // Exact frame length: fixed header + 4 per dim + payload + crc.
  TensorShape shape({7, 9, 11});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("random-uniform", bytes, 5);
  auto frame = encode_frame(shape, DataType::F32, tensor.data(), bytes, Codec::None);
  EXPECT(c, frame.size() == kFrameFixedHeader + 4 * 3 + bytes + 4);

  // Every single-bit flip anywhere in a small frame must be rejected.
  TensorShape tiny({2, 3});
  const size_t tiny_bytes = static_cast<size_t>(tensor_bytes(tiny, DataType::F32));
  std::vector<uint8_t> tiny_tensor = make_payload("random-uniform", tiny_bytes, 6);
  auto tiny_frame = encode_frame(tiny, DataType::F32, tiny_tensor.data(), tiny_bytes,
                                 Codec::None);
  bool flips_detected = true;
  for (size_t byte = 0; byte < tiny_frame.size(); ++byte) {
    for (int bit = 0; bit < 8; ++bit) {
      auto mutated = tiny_frame;
      mutated[byte] ^= static_cast<uint8_t>(1u << bit);
      try {
        decode_frame(mutated.data(), mutated.size());
        flips_detected = false;  // decoding flipped bytes must never succeed
      } catch (const Error&) {
      }
    }
  }
  EXPECT(c, flips_detected);

  // Paced TCP loopback: 7,680,000 bytes at 100 Mbps lands within 10% of the
  // analytic 0.6144 s.
  TcpListener listener(0);
  auto client = tcp_connect("127.0.0.1", listener.port());
  auto server = listener.accept();
  TensorShape image({3, 800, 800});
  const size_t image_bytes = static_cast<size_t>(tensor_bytes(image, DataType::F32));
  std::vector<uint8_t> payload = make_payload("random-uniform", image_bytes, 9);
  TransferReport r = run_transfer(*client, *server, image, DataType::F32, Codec::None, payload,
                                  EmulatedChannel{100e6, 0.0});
  EXPECT(c, r.byte_exact);
  EXPECT(c, r.tensor_bytes == 7680000);
  EXPECT(c, std::abs(r.elapsed_s - 0.6144) <= 0.10 * 0.6144);
  std::printf("[criterion 7] note: paced transfer took %.4f s (analytic 0.6144 s)\n",
              r.elapsed_s);
}

TEST_CASE("criterion 8: deflate cannot shrink dense activations") {
  Criterion c{8, "deflate ratio >= 0.95 on uniform payloads, < 0.02 on zero payloads"};
  const size_t bytes = 1 << 20;
  double random_sum = 0.0, zeros_sum = 0.0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    random_sum += measure_codec_ratio("random-uniform", bytes, Codec::Deflate, seed);
    zeros_sum += measure_codec_ratio("zeros", bytes, Codec::Deflate, seed);
  }
  const double random_avg = random_sum / 10.0;
  const double zeros_avg = zeros_sum / 10.0;
  EXPECT(c, random_avg >= 0.95);
  EXPECT(c, zeros_avg < 0.02);
  std::printf("[criterion 8] note: deflate ratios random-uniform %.4f, zeros %.5f\n",
              random_avg, zeros_avg);
}

TEST_CASE("criterion 9: analysis and planning output is byte-reproducible") {
  Criterion c{9, "repeated analyze/plan runs produce identical bytes"};
  fs::path dir = fs::temp_directory_path() / "splitplan_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::string cli = SPLITPLAN_CLI_PATH;
  auto run_to = [&](const std::string& args, const fs::path& out) {
    std::string cmd = cli + " " + args + " >" + out.string() + " 2>/dev/null";
    return std::system(cmd.c_str()) == 0;
  };

  fs::path a1 = dir / "analyze1.csv", a2 = dir / "analyze2.csv";
  EXPECT(c, run_to("analyze --model mask_rcnn_r50", a1));
  EXPECT(c, run_to("analyze --model mask_rcnn_r50", a2));
  EXPECT(c, !slurp(a1).empty());
  EXPECT(c, slurp(a1) == slurp(a2));

  fs::path p1 = dir / "plan1.json", p2 = dir / "plan2.json";
  const std::string plan_args =
      "plan --model faster_rcnn_r50+bottleneck:C=3 --input 3x874x1044 "
      "--mobile jetson_tx2 --bandwidth 10Mbps";
  EXPECT(c, run_to(plan_args, p1));
  EXPECT(c, run_to(plan_args, p2));
  EXPECT(c, !slurp(p1).empty());
  EXPECT(c, slurp(p1) == slurp(p2));
}
