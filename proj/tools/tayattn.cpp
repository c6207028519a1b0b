#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tayattn/report.hpp"
#include "tayattn/tayattn.hpp"

using nlohmann::json;
using namespace tayattn;

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kUsage = 2, kResource = 3 };

struct GenOptions {
  std::uint64_t seed = 1;
  std::size_t n = 8, m = 8, d = 2, e = 2;
  double scale = 1.0;
  std::string prefix;
  bool gates = false;
};

struct RunOptions {
  std::string impl;
  std::optional<int> order;
  std::optional<int> min_order;
  std::string mode = "causal";
  std::optional<std::string> denominator;
  std::optional<std::string> qmap;
  std::optional<std::string> kmap;
  std::optional<double> clamp;
  std::optional<std::string> gates;
  std::string in_prefix;
  std::string out;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw FormatError("write to '" + path + "' failed");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

int cmd_gen(const GenOptions& o) {
  auto in = generate_inputs(o.seed, o.n, o.m, o.d, o.e, o.scale);
  tensor_write(o.prefix + ".q.tnsr", in.q);
  tensor_write(o.prefix + ".k.tnsr", in.k);
  tensor_write(o.prefix + ".v.tnsr", in.v);
  if (o.gates) {
    SplitMix64 rng(~o.seed);
    GatePair g;
    for (std::size_t i = 0; i < o.n; ++i) g.g_in.push_back(rng.uniform01());
    for (std::size_t i = 0; i < o.m; ++i) g.g_out.push_back(rng.uniform01());
    tensor_write(o.prefix + ".gates.tnsr", gates_to_tensor(g));
  }
  return kOk;
}

// Rejects flags that the chosen implementation ignores, then fills defaults.
RunOptions resolve(RunOptions o) {
  auto reject = [&](bool given, const char* flag) {
    if (given) throw ConfigError(std::string(flag) + " does not apply to --impl " + o.impl);
  };
  const Mode mode = parse_mode(o.mode);
  o.mode = std::string(to_string(mode));
  if (o.impl == "softmax") {
    reject(o.order.has_value(), "--order");
    reject(o.min_order.has_value(), "--min-order");
    reject(o.denominator.has_value(), "--denominator");
    reject(o.qmap.has_value(), "--qmap");
    reject(o.kmap.has_value(), "--kmap");
    reject(o.clamp.has_value(), "--clamp");
    reject(o.gates.has_value(), "--gates");
  } else if (o.impl == "linear") {
    if (o.order && *o.order != 1) throw ConfigError("--impl linear is the order-1 term only; got --order " + std::to_string(*o.order));
    if (o.denominator && *o.denominator != "none") throw ConfigError("--impl linear has no denominator");
    reject(o.min_order.has_value(), "--min-order");
    reject(o.clamp.has_value(), "--clamp");
    reject(o.gates.has_value(), "--gates");
    o.order = 1;
    o.denominator = "none";
    o.qmap = std::string(to_string(parse_feature_map(o.qmap.value_or("identity"))));
    o.kmap = std::string(to_string(parse_feature_map(o.kmap.value_or("identity"))));
  } else if (o.impl == "quadratic") {
    if (o.order && *o.order != 2) throw ConfigError("--impl quadratic is the order-2 term only; got --order " + std::to_string(*o.order));
    if (o.denominator && *o.denominator != "none") throw ConfigError("--impl quadratic has no denominator");
    if (mode != Mode::causal) throw ConfigError("--impl quadratic is causal only");
    reject(o.min_order.has_value(), "--min-order");
    reject(o.qmap.has_value(), "--qmap");
    reject(o.kmap.has_value(), "--kmap");
    reject(o.clamp.has_value(), "--clamp");
    reject(o.gates.has_value(), "--gates");
    o.order = 2;
    o.denominator = "none";
  } else if (o.impl == "gated") {
    if (!o.gates) throw ConfigError("--impl gated requires --gates");
    reject(o.order.has_value(), "--order");
    reject(o.min_order.has_value(), "--min-order");
    reject(o.denominator.has_value(), "--denominator");
    reject(o.qmap.has_value(), "--qmap");
    reject(o.kmap.has_value(), "--kmap");
  } else if (o.impl == "taylor-direct" || o.impl == "recurrent") {
    if (!o.order) throw ConfigError("--impl " + o.impl + " requires --order");
    o.min_order = o.min_order.value_or(0);
    o.denominator = std::string(to_string(parse_denominator(o.denominator.value_or("exact"))));
    o.qmap = std::string(to_string(parse_feature_map(o.qmap.value_or("identity"))));
    o.kmap = std::string(to_string(parse_feature_map(o.kmap.value_or("identity"))));
    if (o.gates && !is_gate(parse_denominator(*o.denominator))) {
      throw ConfigError("--gates requires --denominator gate or gate_seq");
    }
  } else {
    throw ConfigError("unknown --impl '" + o.impl + "'");
  }
  if (o.in_prefix.empty()) throw ConfigError("--in-prefix is required");
  if (o.out.empty()) throw ConfigError("--out is required");
  return o;
}

json to_json(const RunOptions& o) {
  json j = {{"impl", o.impl}, {"mode", o.mode}, {"in_prefix", o.in_prefix}, {"out", o.out}};
  if (o.order) j["order"] = *o.order;
  if (o.min_order) j["min_order"] = *o.min_order;
  if (o.denominator) j["denominator"] = *o.denominator;
  if (o.qmap) j["qmap"] = *o.qmap;
  if (o.kmap) j["kmap"] = *o.kmap;
  if (o.clamp) j["clamp"] = *o.clamp;
  if (o.gates) j["gates"] = *o.gates;
  return j;
}

RunOptions run_options_from_json(const json& j) {
  try {
    RunOptions o;
    o.impl = j.at("impl").get<std::string>();
    o.mode = j.at("mode").get<std::string>();
    o.in_prefix = j.at("in_prefix").get<std::string>();
    o.out = j.at("out").get<std::string>();
    if (j.contains("order")) o.order = j["order"].get<int>();
    if (j.contains("min_order")) o.min_order = j["min_order"].get<int>();
    if (j.contains("denominator")) o.denominator = j["denominator"].get<std::string>();
    if (j.contains("qmap")) o.qmap = j["qmap"].get<std::string>();
    if (j.contains("kmap")) o.kmap = j["kmap"].get<std::string>();
    if (j.contains("clamp")) o.clamp = j["clamp"].get<double>();
    if (j.contains("gates")) o.gates = j["gates"].get<std::string>();
    return o;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run sidecar: ") + e.what());
  }
}

int cmd_run(const RunOptions& raw) {
  const RunOptions o = resolve(raw);
  const Tensor q = tensor_read(o.in_prefix + ".q.tnsr");
  const Tensor k = tensor_read(o.in_prefix + ".k.tnsr");
  const Tensor v = tensor_read(o.in_prefix + ".v.tnsr");
  const Mode mode = parse_mode(o.mode);
  check_attention_shapes(q, k, v, mode);

  std::optional<GatePair> gates;
  if (o.gates) gates = gates_from_tensor(tensor_read(*o.gates), q.rows(), k.rows());

  Tensor out;
  if (o.impl == "softmax") {
    out = softmax_attention(q, k, v, mode);
  } else if (o.impl == "linear") {
    const auto qm = parse_feature_map(*o.qmap), km = parse_feature_map(*o.kmap);
    out = mode == Mode::causal ? linear_attention_recurrent(q, k, v, qm, km)
                               : linear_attention_matrix(q, k, v, qm, km, mode);
  } else if (o.impl == "quadratic") {
    out = quadratic_attention_recurrent(q, k, v);
  } else if (o.impl == "gated") {
    out = gated_attention_matrix(q, k, v, *gates, mode, o.clamp).factored;
  } else {
    AttentionConfig cfg;
    cfg.order = *o.order;
    cfg.min_order = *o.min_order;
    cfg.mode = mode;
    cfg.denominator = parse_denominator(*o.denominator);
    cfg.query_map = parse_feature_map(*o.qmap);
    cfg.key_map = parse_feature_map(*o.kmap);
    cfg.clamp = o.clamp;
    out = o.impl == "recurrent" ? recurrent_attention(q, k, v, cfg, gates)
                                : taylor_attention_direct(q, k, v, cfg, gates);
  }
  tensor_write(o.out, out);
  write_text(o.out + ".json", to_json(o).dump(2) + "\n");
  return kOk;
}

int cmd_verify(const std::string& suite, const std::string& json_path) {
  const SuiteReport r = run_suite(suite);
  for (const auto& c : r.checks) {
    std::cout << (c.pass ? "pass " : "FAIL ") << c.name << "  measured=" << format_double(c.measured)
              << " tol=" << format_double(c.tolerance) << "  [" << c.config << "]\n";
  }
  std::cout << (r.all_pass() ? "all checks passed" : "some checks FAILED") << '\n';
  if (!json_path.empty()) write_text(json_path, to_json(r).dump(2) + "\n");
  return r.all_pass() ? kOk : kFailed;
}

void emit(const std::string& csv_path, const std::function<void(std::ostream&)>& write) {
  if (csv_path.empty() || csv_path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + csv_path + "' for writing");
  write(out);
  if (!out) throw FormatError("write to '" + csv_path + "' failed");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Softmax attention as a truncated sum of recurrent networks"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write random Q/K/V tensors");
  gen_cmd->add_option("--seed", gen.seed, "PRNG seed");
  gen_cmd->add_option("--n", gen.n, "Query rows");
  gen_cmd->add_option("--m", gen.m, "Key/value rows");
  gen_cmd->add_option("--d", gen.d, "Query/key width");
  gen_cmd->add_option("--e", gen.e, "Value width");
  gen_cmd->add_option("--scale", gen.scale, "Entries uniform in [-scale, scale)");
  gen_cmd->add_option("--out-prefix", gen.prefix, "Output path prefix")->required();
  gen_cmd->add_flag("--gates", gen.gates, "Also write <prefix>.gates.tnsr (g_in then g_out)");

  RunOptions run;
  std::string replay;
  auto* run_cmd = app.add_subcommand("run", "Compute attention over stored inputs");
  run_cmd->add_option("--impl", run.impl, "softmax|taylor-direct|recurrent|linear|quadratic|gated");
  run_cmd->add_option("--order", run.order, "Truncation order");
  run_cmd->add_option("--min-order", run.min_order, "First retained series term");
  run_cmd->add_option("--mode", run.mode, "causal|bidir");
  run_cmd->add_option("--denominator", run.denominator, "Normalization mode");
  run_cmd->add_option("--qmap", run.qmap, "Query feature map");
  run_cmd->add_option("--kmap", run.kmap, "Key feature map");
  run_cmd->add_option("--clamp", run.clamp, "Logit clamp bound");
  run_cmd->add_option("--gates", run.gates, "Gate tensor file");
  run_cmd->add_option("--in-prefix", run.in_prefix, "Input path prefix");
  run_cmd->add_option("--out", run.out, "Output tensor file");
  auto* config_opt = run_cmd->add_option("--config", replay, "Replay a run from its JSON sidecar");
  for (auto* opt : run_cmd->get_options()) {
    if (opt != config_opt && opt->get_name() != "--help") config_opt->excludes(opt);
  }

  std::string suite = "all", verify_json;
  auto* verify_cmd = app.add_subcommand("verify", "Run the built-in verification suites");
  verify_cmd->add_option("--suite", suite, "kron|equivalence|denominator|gates|grad|all");
  verify_cmd->add_option("--json", verify_json, "Write the JSON report here");

  std::string orders = "0..25", approx_csv, qmap = "identity", kmap = "identity";
  ApproxSweep sweep;
  auto* approx_cmd = app.add_subcommand("approx", "Error of the truncated series against softmax");
  approx_cmd->add_option("--orders", orders, "a..b or a comma list");
  approx_cmd->add_option("--bound", sweep.logit_bound, "Largest |logit| after scaling");
  approx_cmd->add_option("--qmap", qmap, "Query feature map");
  approx_cmd->add_option("--kmap", kmap, "Key feature map");
  approx_cmd->add_option("--seed", sweep.seed, "PRNG seed");
  approx_cmd->add_option("--n", sweep.n, "Sequence length");
  approx_cmd->add_option("--d", sweep.d, "Query/key width");
  approx_cmd->add_option("--e", sweep.e, "Value width");
  approx_cmd->add_option("--csv", approx_csv, "Output CSV (stdout if omitted)");

  std::string grid = default_bench_grid(), bench_csv;
  int repeats = 5;
  std::uint64_t bench_seed = 1;
  auto* bench_cmd = app.add_subcommand("bench", "Time the attention paths over a grid");
  bench_cmd->add_option("--grid", grid, "impl=...;N=...;d=...;e=...;order=...");
  bench_cmd->add_option("--repeats", repeats, "Timed repeats per cell (>= 3)");
  bench_cmd->add_option("--seed", bench_seed, "PRNG seed");
  bench_cmd->add_option("--csv", bench_csv, "Output CSV (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (gen_cmd->parsed()) return cmd_gen(gen);
  if (run_cmd->parsed()) {
    if (!replay.empty()) return cmd_run(run_options_from_json(read_json(replay)));
    if (run.impl.empty()) throw ConfigError("--impl is required");
    return cmd_run(run);
  }
  if (verify_cmd->parsed()) return cmd_verify(suite, verify_json);
  if (approx_cmd->parsed()) {
    sweep.orders = parse_order_list(orders);
    sweep.query_map = parse_feature_map(qmap);
    sweep.key_map = parse_feature_map(kmap);
    if (sweep.n == 0 || sweep.d == 0 || sweep.e == 0) throw ConfigError("--n, --d, --e must be >= 1");
    const auto rows = approx_error_sweep(sweep);
    emit(approx_csv, [&](std::ostream& out) { write_approx_csv(out, rows); });
    return kOk;
  }
  if (bench_cmd->parsed()) {
    const auto rows = bench_runtime(parse_bench_grid(grid), repeats, bench_seed);
    emit(bench_csv, [&](std::ostream& out) { write_bench_csv(out, rows); });
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ResourceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kResource;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kResource;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
}
