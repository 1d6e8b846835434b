// SPDX-License-Identifier: Apache-2.0
//
// splitplan: layer-level split planning and transfer emulation for two-stage
// detectors. See README.md for the command overview.

#include <cctype>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splitplan/catalog.hpp"
#include "splitplan/errors.hpp"
#include "splitplan/graph_json.hpp"
#include "splitplan/report.hpp"
#include "splitplan/timing.hpp"
#include "splitplan/tradeoff.hpp"
#include "splitplan/wire.hpp"

namespace sp = splitplan;

namespace {

void emit(const std::string& path, const std::string& content) {
  if (path.empty())
    std::cout << content;
  else
    sp::write_text_file(path, content);
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Profile names are built-in device names, or @path to a profile file.
sp::DeviceProfile resolve_profile(const std::string& name, const sp::ModelSpec& spec,
                                  sp::DeviceProfile::Weight weight) {
  if (!name.empty() && name[0] == '@') return sp::load_device_profile(name.substr(1));
  sp::BuiltinProfileTable table =
      sp::BuiltinProfileTable::load(sp::data_dir() + "/device_runtimes.json");
  return table.profile(name, spec.kind, spec.backbone.depth, weight);
}

sp::DeviceProfile::Weight parse_weight(const std::string& name) {
  if (name == "macs") return sp::DeviceProfile::Weight::Macs;
  if (name == "params") return sp::DeviceProfile::Weight::Params;
  throw sp::DataError("attribution must be macs or params");
}

// "lo:hi:log[:count]" or "lo:hi:linear[:count]"; bare endpoints are Mbps,
// otherwise any bandwidth unit suffix works.
std::vector<double> parse_sweep_range(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() < 2 || parts.size() > 4)
    throw sp::DataError("bandwidth range '" + text + "': use lo:hi[:log|linear][:count]");

  auto endpoint = [](const std::string& s) {
    bool has_alpha = false;
    for (char c : s)
      if (std::isalpha(static_cast<unsigned char>(c))) has_alpha = true;
    return has_alpha ? sp::parse_bandwidth(s) : sp::parse_bandwidth(s + "Mbps");
  };
  double lo = endpoint(parts[0]);
  double hi = endpoint(parts[1]);
  std::string mode = parts.size() >= 3 ? parts[2] : "log";
  int count = 25;
  if (parts.size() == 4) {
    try {
      count = std::stoi(parts[3]);
    } catch (const std::exception&) {
      throw sp::DataError("bandwidth range '" + text + "': bad count");
    }
  }
  if (!(hi > lo)) throw sp::DataError("bandwidth range '" + text + "': hi must exceed lo");
  if (count < 2) throw sp::DataError("bandwidth range '" + text + "': count must be >= 2");
  if (mode != "log" && mode != "linear")
    throw sp::DataError("bandwidth range '" + text + "': mode must be log or linear");

  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    double t = static_cast<double>(i) / (count - 1);
    out.push_back(mode == "log" ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t);
  }
  return out;
}

struct CommonModelArgs {
  std::string model;
  std::string input = "3x800x800";
};

struct PlanArgs {
  CommonModelArgs m;
  std::string mobile = "rpi4";
  std::string edge = "desktop_gpu";
  std::string bandwidth;
  double rtt = 0.0;
  double payload_scale = 1.0;
  std::string dtype = "f32";
  std::string attribution = "macs";
  bool include_result_return = false;
};

int run_analyze(const CommonModelArgs& args, const std::string& format, const std::string& out,
                const std::string& modules_out, const std::string& plot) {
  sp::ModelGraph graph = sp::build_model(args.model, sp::TensorShape::parse(args.input));
  std::vector<sp::ProfileRow> rows = sp::normalized_profile(graph);
  std::vector<sp::ModuleParams> modules = sp::cumulative_params(graph);

  if (format == "json") {
    emit(out, dump(sp::profile_json(graph, rows, modules)));
  } else if (format == "csv") {
    emit(out, sp::profile_csv(rows));
    if (!modules_out.empty()) sp::write_text_file(modules_out, sp::modules_csv(modules));
  } else {
    throw sp::DataError("format must be csv or json");
  }
  if (!plot.empty()) sp::write_text_file(plot, sp::profile_svg(graph.name, rows));
  return 0;
}

int run_plan(const PlanArgs& args, size_t top, const std::string& out) {
  sp::ModelSpec spec = sp::parse_model_name(args.m.model);
  sp::ModelGraph graph = sp::build_model(args.m.model, sp::TensorShape::parse(args.m.input));
  sp::DeviceProfile::Weight weight = parse_weight(args.attribution);
  sp::DeviceProfile mobile = resolve_profile(args.mobile, spec, weight);
  sp::DeviceProfile edge = resolve_profile(args.edge, spec, weight);
  sp::ChannelModel channel{sp::parse_bandwidth(args.bandwidth), args.rtt, args.payload_scale};
  sp::DataType dtype = sp::dtype_from_name(args.dtype);
  sp::EvaluateOptions opts{args.include_result_return};

  sp::PlanResult plan = sp::optimize_split(graph, mobile, edge, channel, dtype, opts);
  emit(out, dump(sp::plan_json(graph, plan, mobile, edge, channel, dtype, top)));
  return 0;
}

int run_sweep(const PlanArgs& args, const std::string& range, const std::string& out,
              const std::string& plot) {
  sp::ModelSpec spec = sp::parse_model_name(args.m.model);
  sp::ModelGraph graph = sp::build_model(args.m.model, sp::TensorShape::parse(args.m.input));
  sp::DeviceProfile::Weight weight = parse_weight(args.attribution);
  sp::DeviceProfile mobile = resolve_profile(args.mobile, spec, weight);
  sp::DeviceProfile edge = resolve_profile(args.edge, spec, weight);
  sp::DataType dtype = sp::dtype_from_name(args.dtype);
  sp::ChannelModel base{1.0, args.rtt, args.payload_scale};
  sp::EvaluateOptions opts{args.include_result_return};

  std::vector<double> bandwidths = parse_sweep_range(range);
  std::vector<sp::SweepPoint> points =
      sp::sweep_bandwidth(graph, mobile, edge, dtype, bandwidths, base, opts);
  emit(out, sp::sweep_csv(points, dtype));
  if (!plot.empty()) sp::write_text_file(plot, sp::sweep_svg(graph.name, points));
  return 0;
}

int run_tradeoff(const std::string& model, const std::string& c_list, int divisor,
                 const std::string& input, const std::string& data_file,
                 const std::string& out, const std::string& plot) {
  sp::ModelSpec spec = sp::parse_model_name(model);
  if (spec.bottleneck)
    throw sp::DataError("tradeoff: pass the base model; channel counts come from --c-list");

  std::vector<int> cs;
  std::string cur;
  for (char ch : c_list + ",") {
    if (ch == ',') {
      if (cur.empty()) continue;
      try {
        cs.push_back(std::stoi(cur));
      } catch (const std::exception&) {
        throw sp::DataError("bad channel count '" + cur + "'");
      }
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }

  std::string path = data_file.empty() ? sp::data_dir() + "/example_tradeoff.csv" : data_file;
  std::vector<sp::MapDataRow> map_rows = sp::load_map_data(path);
  sp::TradeoffReport report =
      sp::build_tradeoff(spec, cs, divisor, sp::TensorShape::parse(input), map_rows);
  emit(out, sp::tradeoff_csv(report));
  if (!plot.empty()) sp::write_text_file(plot, sp::tradeoff_svg(report));
  return 0;
}

int run_graph_emit(const std::string& model, const std::string& input, const std::string& out) {
  sp::ModelGraph graph = sp::build_model(model, sp::TensorShape::parse(input));
  std::string text = sp::graph_to_json(graph).dump(2) + "\n";
  emit(out, text);
  return 0;
}

int run_graph_check(const std::string& in) {
  sp::ModelGraph graph = sp::load_graph(in);
  sp::ShapeMap shapes = sp::infer_shapes(graph);
  int64_t params = 0, macs = 0;
  for (const auto& [id, v] : sp::graph_params(graph, shapes)) params += v;
  for (const auto& [id, v] : sp::graph_macs(graph, shapes)) macs += v;
  nlohmann::ordered_json j;
  j["name"] = graph.name;
  j["nodes"] = graph.nodes().size();
  j["params"] = params;
  j["macs"] = macs;
  j["ok"] = true;
  std::cout << dump(j);
  return 0;
}

int run_reference(const std::string& format) {
  std::vector<sp::ReferenceRow> rows =
      sp::load_reference_table(sp::data_dir() + "/reference_scores.json");
  if (format == "json") {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const sp::ReferenceRow& r : rows) {
      nlohmann::ordered_json e;
      e["detector"] = r.detector;
      e["backbone"] = r.backbone;
      e["bbox_map"] = r.bbox_map;
      if (r.runtime_s) e["runtime_seconds"] = *r.runtime_s;
      j.push_back(std::move(e));
    }
    std::cout << dump(j);
  } else {
    std::cout << sp::reference_csv(rows);
  }
  return 0;
}

struct TransferArgs {
  std::string shape = "3x874x1044";
  std::string dtype = "f32";
  std::string codec = "none";
  std::string source = "gradient";
  std::string bandwidth;  // empty = unpaced
  double latency = 0.0;
  std::string transport = "pipe";
  uint16_t port = sp::kDefaultTcpPort;
  uint64_t seed = 7;
  bool probe_codec = false;
};

int run_transfer(const TransferArgs& args) {
  sp::TensorShape shape = sp::TensorShape::parse(args.shape);
  sp::DataType dtype = sp::dtype_from_name(args.dtype);
  size_t bytes = static_cast<size_t>(sp::tensor_bytes(shape, dtype));

  if (args.probe_codec) {
    nlohmann::ordered_json j;
    j["bytes"] = bytes;
    for (const std::string& source : sp::payload_source_names())
      j["deflate_ratio"][source] = sp::measure_codec_ratio(source, bytes, sp::Codec::Deflate,
                                                           args.seed);
    std::cout << dump(j);
    return 0;
  }

  sp::Codec codec = sp::codec_from_name(args.codec);
  std::vector<uint8_t> tensor = sp::make_payload(args.source, bytes, args.seed);
  sp::EmulatedChannel channel{args.bandwidth.empty() ? 0.0 : sp::parse_bandwidth(args.bandwidth),
                              args.latency};

  sp::TransferReport report;
  if (args.transport == "pipe") {
    auto [a, b] = sp::make_pipe_transport();
    report = sp::run_transfer(*a, *b, shape, dtype, codec, tensor, channel);
  } else if (args.transport == "tcp") {
    sp::TcpListener listener(args.port);
    auto client = sp::tcp_connect("127.0.0.1", listener.port());
    auto server = listener.accept();
    report = sp::run_transfer(*client, *server, shape, dtype, codec, tensor, channel);
  } else {
    throw sp::DataError("transport must be pipe or tcp");
  }

  nlohmann::ordered_json j;
  j["shape"] = shape.dims;
  j["dtype"] = sp::dtype_name(dtype);
  j["codec"] = sp::codec_name(codec);
  j["source"] = args.source;
  j["transport"] = args.transport;
  j["bandwidth_bps"] = channel.bandwidth_bps;
  j["latency_seconds"] = channel.latency_s;
  j["tensor_bytes"] = report.tensor_bytes;
  j["wire_bytes"] = report.wire_bytes;
  j["codec_ratio"] = report.codec_ratio;
  j["elapsed_seconds"] = report.elapsed_s;
  j["throughput_bps"] = report.throughput_bps;
  if (channel.bandwidth_bps > 0)
    j["analytic_seconds"] =
        static_cast<double>(report.wire_bytes) * 8.0 / channel.bandwidth_bps + channel.latency_s;
  j["byte_exact"] = report.byte_exact;
  std::cout << dump(j);
  if (!report.byte_exact) throw sp::ProtocolError("transfer: payload mismatch");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"split computing planner and transfer emulator for two-stage detectors"};
  app.set_config("--config", "", "read options from an INI/TOML file");
  app.require_subcommand(1);

  // analyze
  CommonModelArgs an;
  std::string an_format = "csv", an_out, an_modules_out, an_plot;
  CLI::App* analyze = app.add_subcommand("analyze", "per-cut tensor sizes and parameter counts");
  analyze->add_option("--model", an.model, "catalog model name")->required();
  analyze->add_option("--input", an.input, "input shape CxHxW (default 3x800x800)");
  analyze->add_option("--format", an_format, "csv or json");
  analyze->add_option("--out", an_out, "output path (default stdout)");
  analyze->add_option("--modules-out", an_modules_out, "cumulative module params CSV path");
  analyze->add_option("--plot", an_plot, "SVG chart path");

  // plan
  PlanArgs pl;
  size_t pl_top = 10;
  std::string pl_out;
  CLI::App* plan = app.add_subcommand("plan", "best split for one channel setting");
  plan->add_option("--model", pl.m.model, "catalog model name")->required();
  plan->add_option("--input", pl.m.input, "input shape CxHxW");
  plan->add_option("--mobile", pl.mobile, "mobile device: rpi4|jetson_tx2|desktop_gpu|@file");
  plan->add_option("--edge", pl.edge, "edge device: rpi4|jetson_tx2|desktop_gpu|@file");
  plan->add_option("--bandwidth", pl.bandwidth, "e.g. 5Mbps, 100Kbps, 1Gbps")->required();
  plan->add_option("--rtt", pl.rtt, "round-trip latency in seconds");
  plan->add_option("--payload-scale", pl.payload_scale, "payload factor in (0,1]");
  plan->add_option("--dtype", pl.dtype, "f32|f16|u8");
  plan->add_option("--attribution", pl.attribution, "latency attribution: macs|params");
  plan->add_flag("--include-result-return", pl.include_result_return,
                 "add the detection return transfer");
  plan->add_option("--top", pl_top, "ranking entries to print");
  plan->add_option("--out", pl_out, "output path (default stdout)");

  // sweep
  PlanArgs sw;
  std::string sw_range, sw_out, sw_plot;
  CLI::App* sweep = app.add_subcommand("sweep", "best split across a bandwidth range");
  sweep->add_option("--model", sw.m.model, "catalog model name")->required();
  sweep->add_option("--input", sw.m.input, "input shape CxHxW");
  sweep->add_option("--mobile", sw.mobile, "mobile device name or @file");
  sweep->add_option("--edge", sw.edge, "edge device name or @file");
  sweep->add_option("--bandwidth", sw_range, "range lo:hi[:log|linear][:count], Mbps endpoints")
      ->required();
  sweep->add_option("--rtt", sw.rtt, "round-trip latency in seconds");
  sweep->add_option("--payload-scale", sw.payload_scale, "payload factor in (0,1]");
  sweep->add_option("--dtype", sw.dtype, "f32|f16|u8");
  sweep->add_option("--attribution", sw.attribution, "latency attribution: macs|params");
  sweep->add_flag("--include-result-return", sw.include_result_return,
                  "add the detection return transfer");
  sweep->add_option("--out", sw_out, "output path (default stdout)");
  sweep->add_option("--plot", sw_plot, "SVG chart path");

  // tradeoff
  std::string td_model, td_c_list = "3,6,9,12,15", td_input = "3x874x1044", td_data, td_out,
              td_plot;
  int td_div = 4;
  CLI::App* tradeoff =
      app.add_subcommand("tradeoff", "bottleneck size vs supplied detection scores");
  tradeoff->add_option("--model", td_model, "base model (no bottleneck suffix)")->required();
  tradeoff->add_option("--c-list", td_c_list, "bottleneck channel counts, comma separated");
  tradeoff->add_option("--divisor", td_div, "bottleneck spatial divisor: 2|4|8");
  tradeoff->add_option("--input", td_input, "input shape CxHxW");
  tradeoff->add_option("--data", td_data, "score CSV (default <data>/example_tradeoff.csv)");
  tradeoff->add_option("--out", td_out, "output path (default stdout)");
  tradeoff->add_option("--plot", td_plot, "SVG chart path");

  // graph emit/check
  CLI::App* graph = app.add_subcommand("graph", "emit or check graph JSON files");
  graph->require_subcommand(1);
  std::string ge_model, ge_input = "3x800x800", ge_out, gc_in;
  CLI::App* gemit = graph->add_subcommand("emit", "write a catalog model as graph JSON");
  gemit->add_option("--model", ge_model, "catalog model name")->required();
  gemit->add_option("--input", ge_input, "input shape CxHxW");
  gemit->add_option("--out", ge_out, "output path (default stdout)");
  CLI::App* gcheck = graph->add_subcommand("check", "validate a graph JSON file");
  gcheck->add_option("--in", gc_in, "graph JSON path")->required();

  // reference
  std::string ref_format = "csv";
  CLI::App* reference = app.add_subcommand("reference", "bundled detector reference scores");
  reference->add_option("--format", ref_format, "csv or json");

  // transfer
  TransferArgs tr;
  CLI::App* transfer = app.add_subcommand("transfer", "framed tensor transfer over an emulated link");
  transfer->add_option("--shape", tr.shape, "tensor shape, e.g. 3x874x1044");
  transfer->add_option("--dtype", tr.dtype, "f32|f16|u8");
  transfer->add_option("--codec", tr.codec, "none|deflate");
  transfer->add_option("--source", tr.source, "zeros|random-uniform|gradient");
  transfer->add_option("--bandwidth", tr.bandwidth, "pacing rate (omit for unpaced)");
  transfer->add_option("--latency", tr.latency, "one-way latency in seconds");
  transfer->add_option("--transport", tr.transport, "pipe|tcp");
  transfer->add_option("--port", tr.port, "tcp port (0 = ephemeral)");
  transfer->add_option("--seed", tr.seed, "payload RNG seed");
  transfer->add_flag("--probe-codec", tr.probe_codec, "report deflate ratios per source, no transfer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (analyze->parsed()) return run_analyze(an, an_format, an_out, an_modules_out, an_plot);
    if (plan->parsed()) return run_plan(pl, pl_top, pl_out);
    if (sweep->parsed()) return run_sweep(sw, sw_range, sw_out, sw_plot);
    if (tradeoff->parsed())
      return run_tradeoff(td_model, td_c_list, td_div, td_input, td_data, td_out, td_plot);
    if (graph->parsed()) {
      if (gemit->parsed()) return run_graph_emit(ge_model, ge_input, ge_out);
      if (gcheck->parsed()) return run_graph_check(gc_in);
    }
    if (reference->parsed()) return run_reference(ref_format);
    if (transfer->parsed()) return run_transfer(tr);
  } catch (const sp::ProtocolError& e) {
    // Wire-level failures (truncation, bad acks) are not input errors.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sp::CorruptionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
