#include "xquant/cli.hpp"

#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xquant/crosslayer.hpp"
#include "xquant/errors.hpp"
#include "xquant/metrics.hpp"
#include "xquant/pipeline.hpp"
#include "xquant/tensor_io.hpp"

namespace xquant::cli {
namespace {

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ArgumentError("not a number: '" + text + "'");
  }
  return value;
}

std::vector<float> parse_grid(const std::string& text) {
  std::vector<float> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item =
        text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    grid.push_back(static_cast<float>(parse_real(item)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return grid;
}

// Flags mirroring XQuantConfig. Eta values are kept as text so that fractions
// such as 1/6 are accepted.
struct ConfigFlags {
  XQuantConfig cfg;
  std::string eta1 = "1/6";
  std::string eta2 = "0.045";

  void attach(CLI::App& app) {
    app.add_option("--kq", cfg.kq, "Key layers below kq use 2-bit codes, the rest 1-bit")
        ->capture_default_str();
    app.add_option("--vq", cfg.vq, "Value layers below vq use 2-bit codes, the rest 1-bit")
        ->capture_default_str();
    app.add_option("--km", cfg.km, "Odd key layers from km on borrow the previous layer's codes")
        ->capture_default_str();
    app.add_option("--vm", cfg.vm,
                   "Odd value layers from vm on borrow the previous layer's codes")
        ->capture_default_str();
    app.add_option("--eta1", eta1, "Calibration for 1-bit groups, in [0, 0.5)")
        ->capture_default_str();
    app.add_option("--eta2", eta2, "Calibration for 2-bit groups, in [0, 0.5)")
        ->capture_default_str();
    app.add_option("--group-size", cfg.group_size, "Elements per quantization group")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--residual", cfg.residual_length, "Recent tokens kept in full precision")
        ->capture_default_str();
  }

  // Checks everything that does not depend on the input's layer count.
  XQuantConfig resolve() {
    cfg.eta1 = static_cast<float>(parse_real(eta1));
    cfg.eta2 = static_cast<float>(parse_real(eta2));
    for (const auto& [value, name] : {std::pair{cfg.eta1, "--eta1"}, std::pair{cfg.eta2, "--eta2"}}) {
      if (!(value >= 0.0f && value < 0.5f)) {
        throw ConfigError(std::string(name) + " must lie in [0, 0.5)");
      }
    }
    return cfg;
  }
};

GroupingMode parse_mode(const std::string& text) {
  if (text == "channel" || text == "per-channel") return GroupingMode::per_channel;
  if (text == "token" || text == "per-token") return GroupingMode::per_token;
  throw ArgumentError("unknown grouping mode '" + text + "' (use channel or token)");
}

}  // namespace

double parse_real(const std::string& text) {
  const std::size_t slash = text.find('/');
  if (slash == std::string::npos) {
    return parse_number(text);
  }
  const double num = parse_number(text.substr(0, slash));
  const double den = parse_number(text.substr(slash + 1));
  if (den == 0.0) {
    throw ArgumentError("zero denominator in '" + text + "'");
  }
  return num / den;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ultra-low-bit KV-cache quantization with cross-layer code sharing", "xquant"};
  app.require_subcommand(1);

  // gen
  SyntheticSpec synth;
  std::string gen_output;
  auto* gen = app.add_subcommand("gen", "Write a synthetic XQKV dump");
  gen->add_option("--layers", synth.num_layers, "Layer count")->capture_default_str();
  gen->add_option("--tokens", synth.num_tokens, "Token count")->capture_default_str();
  gen->add_option("--channels", synth.num_channels, "Channel count")->capture_default_str();
  gen->add_option("--scale-spread", synth.per_channel_scale_spread,
                  "Log-normal spread of per-channel scales")
      ->capture_default_str();
  gen->add_option("--outlier-fraction", synth.outlier_channel_fraction,
                  "Fraction of outlier channels")
      ->capture_default_str();
  gen->add_option("--outlier-magnitude", synth.outlier_magnitude, "Outlier channel multiplier")
      ->capture_default_str();
  gen->add_option("--rho", synth.interlayer_correlation, "Correlation between adjacent layers")
      ->capture_default_str();
  gen->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  gen->add_option("-o,--output", gen_output, "Output XQKV path")->required();

  // quantize
  ConfigFlags quant_flags;
  std::string quant_input, quant_output;
  auto* quantize = app.add_subcommand("quantize", "Quantize an XQKV dump into an XQQC cache");
  quantize->add_option("-i,--input", quant_input, "Input XQKV path")
      ->required()
      ->check(CLI::ExistingFile);
  quantize->add_option("-o,--output", quant_output, "Output XQQC path")->required();
  quant_flags.attach(*quantize);

  // dequantize
  std::string deq_input, deq_output;
  auto* dequantize = app.add_subcommand("dequantize", "Reconstruct an XQKV dump from an XQQC cache");
  dequantize->add_option("-i,--input", deq_input, "Input XQQC path")
      ->required()
      ->check(CLI::ExistingFile);
  dequantize->add_option("-o,--output", deq_output, "Output XQKV path")->required();

  // simulate
  ConfigFlags sim_flags;
  std::string sim_input;
  bool sim_json = false;
  auto* simulate_cmd =
      app.add_subcommand("simulate", "Quantize and reconstruct a dump; report MSE and bit width");
  simulate_cmd->add_option("-i,--input", sim_input, "Input XQKV path")
      ->required()
      ->check(CLI::ExistingFile);
  sim_flags.attach(*simulate_cmd);
  simulate_cmd->add_flag("--json", sim_json, "Emit JSON instead of TSV");

  // bitwidth
  ConfigFlags bw_flags;
  std::size_t bw_layers = 32;
  bool bw_json = false;
  auto* bitwidth = app.add_subcommand("bitwidth", "Equivalent bit width of a configuration");
  bw_flags.attach(*bitwidth);
  bitwidth->add_option("--layers", bw_layers, "Layer count")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bitwidth->add_flag("--json", bw_json, "Emit JSON instead of TSV");

  // sweep-eta
  ConfigFlags sweep_flags;
  std::string sweep_input;
  std::string eta1_grid = "0,0.05,0.1,1/6,0.2,0.25,0.3,0.4";
  std::string eta2_grid = "0,0.045,0.09";
  bool sweep_json = false;
  auto* sweep = app.add_subcommand("sweep-eta", "Reconstruction MSE over a grid of eta1 x eta2");
  sweep->add_option("-i,--input", sweep_input, "Input XQKV path")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_flags.attach(*sweep);
  sweep->add_option("--eta1-grid", eta1_grid, "Comma-separated eta1 values")
      ->capture_default_str();
  sweep->add_option("--eta2-grid", eta2_grid, "Comma-separated eta2 values")
      ->capture_default_str();
  sweep->add_flag("--json", sweep_json, "Emit JSON instead of TSV");

  // delta-hist
  std::string hist_input;
  int hist_bits = 2;
  std::string hist_mode = "channel";
  std::size_t hist_group = 32;
  bool hist_json = false;
  auto* delta_hist =
      app.add_subcommand("delta-hist", "Adjacent-layer code difference histograms");
  delta_hist->add_option("-i,--input", hist_input, "Input XQKV path")
      ->required()
      ->check(CLI::ExistingFile);
  delta_hist->add_option("--bits", hist_bits, "Bit width (1 or 2)")
      ->capture_default_str()
      ->check(CLI::IsMember({1, 2}));
  delta_hist->add_option("--mode", hist_mode, "Grouping: channel or token")
      ->capture_default_str()
      ->check(CLI::IsMember({"channel", "token", "per-channel", "per-token"}));
  delta_hist->add_option("--group-size", hist_group, "Elements per group")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  delta_hist->add_flag("--json", hist_json, "Emit JSON instead of TSV");

  // classify-gamma
  std::string gamma_text;
  auto* classify = app.add_subcommand(
      "classify-gamma", "Interval of a two-layer merge weight gamma0 for 2-bit codes");
  classify->add_option("gamma0", gamma_text, "Weight of layer 0, in [0, 1]; fractions allowed")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  // Flag values are validated before any file is read. Invalid arguments or
  // configs exit with 1, everything raised while handling data with 2.
  try {
    if (*gen) {
      synth.validate();
      const TensorDump dump = gen_synthetic(synth);
      save_dump(dump, gen_output);
      out << "wrote " << gen_output << " (L=" << dump.num_layers() << ", T=" << dump.num_tokens
          << ", C=" << dump.num_channels << ")\n";
    } else if (*quantize) {
      const XQuantConfig cfg = quant_flags.resolve();
      const TensorDump dump = load_dump(quant_input);
      cfg.validate(dump.num_layers());
      const QuantizedKVCache cache = quantize_cache(dump, cfg);
      save_cache(cache, quant_output);
      out << "wrote " << quant_output << " (packed tokens " << cache.packed_tokens
          << ", residual tokens " << cache.residual_tokens() << ")\n";
    } else if (*dequantize) {
      const TensorDump dump = dequantize_cache(load_cache(deq_input));
      save_dump(dump, deq_output);
      out << "wrote " << deq_output << " (L=" << dump.num_layers() << ", T=" << dump.num_tokens
          << ", C=" << dump.num_channels << ")\n";
    } else if (*simulate_cmd) {
      const XQuantConfig cfg = sim_flags.resolve();
      const TensorDump dump = load_dump(sim_input);
      cfg.validate(dump.num_layers());
      const SimulationReport report = simulate(dump, cfg);
      sim_json ? write_json(out, report) : write_tsv(out, report);
    } else if (*bitwidth) {
      const XQuantConfig cfg = bw_flags.resolve();
      const BitwidthReport report = equivalent_bitwidth(cfg, bw_layers);
      bw_json ? write_json(out, report) : write_tsv(out, report);
    } else if (*sweep) {
      const XQuantConfig cfg = sweep_flags.resolve();
      const std::vector<float> grid1 = parse_grid(eta1_grid);
      const std::vector<float> grid2 = parse_grid(eta2_grid);
      for (const auto* grid : {&grid1, &grid2}) {
        for (float eta : *grid) {
          if (!(eta >= 0.0f && eta < 0.5f)) {
            throw ArgumentError("grid value " + std::to_string(eta) + " outside [0, 0.5)");
          }
        }
      }
      const TensorDump dump = load_dump(sweep_input);
      cfg.validate(dump.num_layers());
      const auto rows = sweep_eta(dump, cfg, grid1, grid2);
      sweep_json ? write_json(out, std::span<const SweepRow>(rows))
                 : write_tsv(out, std::span<const SweepRow>(rows));
    } else if (*delta_hist) {
      const GroupingMode mode = parse_mode(hist_mode);
      const TensorDump dump = load_dump(hist_input);
      const auto pairs = layer_similarity_report(dump, hist_bits, mode, hist_group);
      hist_json ? write_json(out, std::span<const LayerPairSimilarity>(pairs))
                : write_tsv(out, std::span<const LayerPairSimilarity>(pairs));
    } else if (*classify) {
      out << describe(classify_gamma(parse_real(gamma_text))) << '\n';
    }
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const AmbiguityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace xquant::cli
