// ovp: batch front end for outlier-victim pair quantization.
//
//   ovp analyze    TENSOR [--threshold-sigma K]
//   ovp quantize   TENSOR OUT.ovp --dtype int4|flint4|int8 [--bias B]
//                  [--scale S | --search] [--window-lo L --window-hi H --steps N] [--columns]
//   ovp dequantize IN.ovp OUT_TENSOR
//   ovp matmul     A.ovp B.ovp OUT_TENSOR [--check]
//   ovp tables     (--dtype D | --abfloat [--width 4|8] [--bias B]) [--json]
//   ovp selftest
//
// Summaries go to stdout as JSON, data to files, diagnostics to stderr.
// Exit codes: 0 ok, 2 usage, 3 input format, 4 numerical check, 5 I/O.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ovp/ovp.hpp"
#include "ovp/report.hpp"

namespace {

using nlohmann::json;

enum Exit : int { kOk = 0, kUsage = 2, kInput = 3, kCheck = 4, kIo = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ovp::ErrorCode code) {
  switch (code) {
    case ovp::ErrorCode::Io: return kIo;
    case ovp::ErrorCode::InvalidConfig: return kUsage;
    case ovp::ErrorCode::AccOverflow: return kCheck;
    default: return kInput;
  }
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

std::string code_string(unsigned code, int bits) {
  std::string s;
  for (int b = bits - 1; b >= 0; --b) s += ((code >> b) & 1) ? '1' : '0';
  return s;
}

ovp::NormalDType require_dtype(const std::string& name) {
  const auto d = ovp::parse_dtype(name);
  if (!d) throw UsageError("unknown dtype '" + name + "' (expected int4, flint4 or int8)");
  return *d;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string tensor;
  double threshold_sigma = 3.0;
};

int run_analyze(const AnalyzeArgs& args) {
  if (!(args.threshold_sigma > 0.0)) throw UsageError("--threshold-sigma must be positive");
  const auto t = ovp::load_tensor(args.tensor);
  const auto st = ovp::compute_stats(t.data);
  const double threshold = args.threshold_sigma * st.sigma;
  // A flat tensor has no outliers at any sigma multiple.
  ovp::PairStats ps{1.0, 0.0, 0.0, (t.size() + 1) / 2};
  if (threshold > 0.0) ps = ovp::classify_pairs(t.data, threshold);
  emit({
      {"command", "analyze"},
      {"dims", t.dims},
      {"elements", t.size()},
      {"threshold_sigma", args.threshold_sigma},
      {"threshold", threshold},
      {"tensor_stats", st},
      {"pair_stats", ps},
  });
  return kOk;
}

// --- quantize --------------------------------------------------------------

struct QuantizeArgs {
  std::string tensor;
  std::string out;
  std::string dtype = "int4";
  std::optional<int> bias;
  std::optional<double> scale;
  bool search = false;
  double window_lo = 0.25;
  double window_hi = 4.0;
  std::uint32_t steps = 64;
  bool no_clip = false;
  bool columns = false;
};

// [k, n] -> [n, k], so pairs run down the columns of a right-hand operand.
ovp::Tensor transpose(const ovp::Tensor& t) {
  if (t.dims.size() != 2) throw ovp::Error(ovp::ErrorCode::ShapeMismatch, "--columns needs a rank-2 tensor");
  const std::size_t rows = t.dims[0], cols = t.dims[1];
  ovp::Tensor out{{t.dims[1], t.dims[0]}, std::vector<float>(t.data.size())};
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.data[j * rows + i] = t.data[i * cols + j];
  }
  return out;
}

int run_quantize(const QuantizeArgs& args) {
  const auto dtype = require_dtype(args.dtype);
  auto abf = ovp::default_abfloat(dtype);
  if (args.bias) abf.bias = *args.bias;
  if (args.no_clip) abf.clip = false;
  const ovp::SearchWindow window{args.window_lo, args.window_hi, args.steps};
  // Flag checks before touching any file.
  ovp::validate(ovp::make_config(dtype, args.scale.value_or(1.0), abf));
  ovp::candidate_scales(1.0, window);

  auto t = ovp::load_tensor(args.tensor);
  if (args.columns) t = transpose(t);
  json summary = {{"command", "quantize"}, {"dtype", ovp::to_string(dtype)}, {"bias", abf.bias}};

  double scale = 0.0;
  if (args.scale) {
    scale = *args.scale;
    summary["search"] = nullptr;
  } else {
    const auto r = ovp::search_scale(t.data, dtype, abf, window);
    scale = r.scale;
    summary["search"] = r;
  }
  const auto cfg = ovp::make_config(dtype, scale, abf);
  const auto c = ovp::encode_tensor(t, cfg);
  ovp::save_container(args.out, c);

  // Report the error of what actually landed on disk.
  const auto back = ovp::dequantize(ovp::load_container(args.out));
  double mse = 0.0;
  if (!t.data.empty()) {
    std::vector<double> sq(back.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      const double d = static_cast<double>(t.data[i]) - back[i];
      sq[i] = d * d;
    }
    mse = ovp::pairwise_sum(std::span<const double>(sq)) / static_cast<double>(sq.size());
  }

  summary["scale"] = scale;
  summary["threshold"] = cfg.threshold;
  summary["mse"] = mse;
  summary["elements"] = t.size();
  summary["dims"] = t.dims;
  summary["payload_bytes"] = c.payload.size();
  if (!t.data.empty()) {
    summary["pair_stats"] = ovp::classify_pairs(t.data, cfg.threshold * scale);
    const int level = ovp::code_bits(dtype) == 4 ? 7 : 127;
    const auto base = ovp::search_clipped_int_scale(t.data, level, window);
    summary["baseline"] = {{"kind", level == 7 ? "clipped_int4" : "clipped_int8"},
                           {"scale", base.scale},
                           {"mse", base.mse}};
  } else {
    summary["pair_stats"] = nullptr;
    summary["baseline"] = nullptr;
  }
  emit(summary);
  return kOk;
}

// --- dequantize ------------------------------------------------------------

int run_dequantize(const std::string& in, const std::string& out) {
  const auto c = ovp::load_container(in);
  const auto t = ovp::decode_tensor(c);
  ovp::save_tensor(out, t);
  emit({{"command", "dequantize"},
        {"dtype", ovp::to_string(c.dtype)},
        {"bias", c.bias},
        {"scale", c.scale},
        {"dims", t.dims},
        {"elements", t.size()}});
  return kOk;
}

// --- matmul ----------------------------------------------------------------

int run_matmul(const std::string& a_path, const std::string& b_path, const std::string& out, bool check) {
  const auto a = ovp::load_container(a_path);
  const auto b = ovp::load_container(b_path);
  ovp::Matrix c;
  try {
    c = ovp::matmul_packed(a, b);
  } catch (const ovp::MatmulOverflow& e) {
    std::cerr << "ovp matmul: accumulator overflow at (i=" << e.site().row << ", j=" << e.site().col
              << ", lane=" << e.site().lane << ")\n";
    return kCheck;
  }

  std::size_t mismatches = 0;
  if (check) {
    const auto ref = ovp::reference_matmul(a, b);
    for (std::size_t i = 0; i < c.data.size(); ++i) {
      if (c.data[i] != ref.data[i]) {
        if (mismatches == 0) {
          std::cerr << "ovp matmul: mismatch at (" << i / c.cols << ", " << i % c.cols << "): pipeline "
                    << c.data[i] << " reference " << ref.data[i] << "\n";
        }
        ++mismatches;
      }
    }
  }
  ovp::save_tensor(out, {{static_cast<std::uint32_t>(c.rows), static_cast<std::uint32_t>(c.cols)},
                         std::vector<float>(c.data.begin(), c.data.end())});
  emit({{"command", "matmul"},
        {"m", c.rows},
        {"n", c.cols},
        {"k", a.dims[1]},
        {"check", check ? (mismatches == 0 ? "passed" : "failed") : "skipped"},
        {"mismatches", mismatches}});
  return mismatches == 0 ? kOk : kCheck;
}

// --- tables ----------------------------------------------------------------

struct TablesArgs {
  std::optional<std::string> dtype;
  bool abfloat = false;
  int width = 4;
  std::optional<int> bias;
  bool as_json = false;
};

int run_tables(const TablesArgs& args) {
  if (args.dtype.has_value() == args.abfloat) throw UsageError("tables needs exactly one of --dtype or --abfloat");
  json rows = json::array();
  std::vector<double> grid;
  std::string format;
  int bits = 0;

  if (args.dtype) {
    const auto dtype = require_dtype(*args.dtype);
    if (args.bias) throw UsageError("--bias applies to --abfloat tables only");
    format = std::string(ovp::to_string(dtype));
    bits = ovp::code_bits(dtype);
    for (unsigned code = 0; code < (1u << bits); ++code) {
      const auto c = static_cast<std::uint8_t>(code);
      if (c == ovp::identifier_code(dtype)) {
        rows.push_back({{"code", code_string(code, bits)}, {"role", "IDENTIFIER"}});
        continue;
      }
      const auto p = ovp::decode_normal(c, dtype);
      rows.push_back({{"code", code_string(code, bits)},
                      {"role", "normal"},
                      {"exponent", p.exponent},
                      {"integer", p.integer},
                      {"value", p.value()}});
    }
    grid = ovp::grid_values(dtype);
  } else {
    if (args.width != 4 && args.width != 8) throw UsageError("--width must be 4 or 8");
    ovp::AbfloatConfig cfg{args.width, args.bias.value_or(args.width == 4 ? 2 : 4), true};
    ovp::validate(cfg);
    format = (args.width == 4 ? "e2m1" : "e4m3") + std::string("_bias") + std::to_string(cfg.bias);
    bits = cfg.width;
    for (unsigned code = 0; code < (1u << bits); ++code) {
      const auto c = static_cast<std::uint8_t>(code);
      const auto p = ovp::decode_abfloat(c, cfg, ovp::DecodeMode::Lenient);
      const char* role = ovp::is_disabled_abfloat(c, cfg) ? "DISABLED"
                         : ovp::is_emittable_abfloat(c, cfg) ? "outlier"
                                                             : "CLIPPED";
      rows.push_back({{"code", code_string(code, bits)},
                      {"role", role},
                      {"exponent", p.exponent},
                      {"integer", p.integer},
                      {"value", p.value()}});
    }
    grid = ovp::grid_values(cfg);
  }

  if (args.as_json) {
    emit({{"format", format}, {"bits", bits}, {"codes", rows}, {"grid", grid}});
    return kOk;
  }
  std::cout << format << "\n";
  for (const auto& r : rows) {
    std::cout << r["code"].get<std::string>();
    if (r.contains("value")) {
      std::cout << "  " << r["value"].get<double>() << "  <" << r["exponent"].get<int>() << ", "
                << r["integer"].get<int>() << ">";
    }
    const auto role = r["role"].get<std::string>();
    if (role != "normal" && role != "outlier") std::cout << "  " << role;
    std::cout << "\n";
  }
  std::cout << "grid:";
  for (double g : grid) std::cout << " " << g;
  std::cout << "\n";
  return kOk;
}

// --- selftest --------------------------------------------------------------

int run_selftest() {
  std::vector<std::pair<std::string, bool>> results;
  const auto check = [&](std::string name, const std::function<bool()>& fn) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception&) {
      ok = false;
    }
    results.emplace_back(std::move(name), ok);
  };

  for (auto dtype : {ovp::NormalDType::Int4, ovp::NormalDType::Flint4, ovp::NormalDType::Int8}) {
    check(std::string(ovp::to_string(dtype)) + " normal round trip", [dtype] {
      for (unsigned code = 0; code < (1u << ovp::code_bits(dtype)); ++code) {
        const auto c = static_cast<std::uint8_t>(code);
        if (c == ovp::identifier_code(dtype)) continue;
        if (ovp::encode_normal(ovp::decode_normal(c, dtype).value(), dtype) != c) return false;
      }
      return true;
    });
  }
  for (const auto& cfg : {ovp::AbfloatConfig::e2m1(0), ovp::AbfloatConfig::e2m1(2), ovp::AbfloatConfig::e2m1(3),
                          ovp::AbfloatConfig::e4m3(4)}) {
    const std::string name = (cfg.width == 4 ? "e2m1" : "e4m3") + std::string(" bias ") + std::to_string(cfg.bias);
    check(name + " round trip", [cfg] {
      for (unsigned code = 0; code < (1u << cfg.width); ++code) {
        const auto c = static_cast<std::uint8_t>(code);
        if (!ovp::is_emittable_abfloat(c, cfg)) continue;
        if (ovp::encode_abfloat(ovp::decode_abfloat(c, cfg).value(), cfg) != c) return false;
      }
      return true;
    });
  }
  check("e2m1 bias 0 magnitude table", [] {
    return ovp::magnitude_table(ovp::AbfloatConfig::e2m1(0)) == std::vector<double>{0, 3, 4, 6, 8, 12, 16, 24};
  });
  check("0101 with bias 2 decodes to 48",
        [] { return ovp::decode_abfloat(0b0101, ovp::AbfloatConfig::e2m1(2)).value() == 48.0; });

  bool all = true;
  for (const auto& [name, ok] : results) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    all = all && ok;
  }
  return all ? kOk : kCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-victim pair quantization tools"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Outlier statistics of a float tensor");
  analyze_cmd->add_option("tensor", analyze.tensor, "Input f32 tensor")->required();
  analyze_cmd->add_option("--threshold-sigma", analyze.threshold_sigma, "Outlier threshold in sigmas");

  QuantizeArgs quantize;
  auto* quantize_cmd = app.add_subcommand("quantize", "Encode a float tensor into an .ovp container");
  quantize_cmd->add_option("tensor", quantize.tensor, "Input f32 tensor")->required();
  quantize_cmd->add_option("out", quantize.out, "Output .ovp container")->required();
  quantize_cmd->add_option("--dtype", quantize.dtype, "Normal data type")
      ->check(CLI::IsMember({"int4", "flint4", "int8"}));
  quantize_cmd->add_option("--bias", quantize.bias, "Abfloat exponent bias")->check(CLI::Range(0, 255));
  auto* scale_opt = quantize_cmd->add_option("--scale", quantize.scale, "Fixed scale factor");
  auto* search_opt = quantize_cmd->add_flag("--search", quantize.search, "Search the scale (default)");
  scale_opt->excludes(search_opt);
  quantize_cmd->add_option("--window-lo", quantize.window_lo, "Search window low multiplier");
  quantize_cmd->add_option("--window-hi", quantize.window_hi, "Search window high multiplier");
  quantize_cmd->add_option("--steps", quantize.steps, "Geometric search steps");
  quantize_cmd->add_flag("--columns", quantize.columns, "Pack a [k, n] matrix by columns for use as matmul B");
  quantize_cmd->add_flag("--no-clip", quantize.no_clip)->group("");

  std::string deq_in, deq_out;
  auto* dequantize_cmd = app.add_subcommand("dequantize", "Decode an .ovp container to a float tensor");
  dequantize_cmd->add_option("in", deq_in, "Input .ovp container")->required();
  dequantize_cmd->add_option("out", deq_out, "Output f32 tensor")->required();

  std::string mm_a, mm_b, mm_out;
  bool mm_check = false;
  auto* matmul_cmd = app.add_subcommand("matmul", "Multiply packed A [m,k] by B stored as columns [n,k]");
  matmul_cmd->add_option("a", mm_a, "A container, dims [m, k]")->required();
  matmul_cmd->add_option("b", mm_b, "B container holding B transposed, dims [n, k]")->required();
  matmul_cmd->add_option("out", mm_out, "Output f32 tensor [m, n]")->required();
  matmul_cmd->add_flag("--check", mm_check, "Compare against the float reference");

  TablesArgs tables;
  auto* tables_cmd = app.add_subcommand("tables", "Dump code tables");
  tables_cmd->add_option("--dtype", tables.dtype, "Normal data type");
  tables_cmd->add_flag("--abfloat", tables.abfloat, "Dump an abfloat table");
  tables_cmd->add_option("--width", tables.width, "Abfloat width (4 or 8)");
  tables_cmd->add_option("--bias", tables.bias, "Abfloat bias")->check(CLI::Range(0, 255));
  tables_cmd->add_flag("--json", tables.as_json, "JSON output");

  auto* selftest_cmd = app.add_subcommand("selftest", "Exhaustive checks of the format tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*analyze_cmd) return run_analyze(analyze);
    if (*quantize_cmd) return run_quantize(quantize);
    if (*dequantize_cmd) return run_dequantize(deq_in, deq_out);
    if (*matmul_cmd) return run_matmul(mm_a, mm_b, mm_out, mm_check);
    if (*tables_cmd) return run_tables(tables);
    if (*selftest_cmd) return run_selftest();
  } catch (const UsageError& e) {
    std::cerr << "ovp: " << e.what() << "\n";
    return kUsage;
  } catch (const ovp::Error& e) {
    std::cerr << "ovp: " << e.what();
    if (e.index()) std::cerr << " (element " << *e.index() << ")";
    std::cerr << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "ovp: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
