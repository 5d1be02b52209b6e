// psram-sim: functional and performance simulator of a photonic in-memory
// compute array running MTTKRP and CP-ALS.
//
// Subcommands:
//   mttkrp    run one MTTKRP on the simulated array and against the
//             reference kernel, report the deviation and cost metrics
//   cp-als    rank-R decomposition of a tensor with the reference kernels
//   sweep     analytic frequency / channel design-space sweep (CSV, SVG)
//   validate  deterministic self-check battery on bundled fixtures
//
// Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psram/psram.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_freq(const std::string& text) {
  if (text.empty()) throw UsageError("empty frequency");
  double mult = 1.0;
  std::string body = text;
  switch (text.back()) {
    case 'k': case 'K': mult = 1e3; body.pop_back(); break;
    case 'M': mult = 1e6; body.pop_back(); break;
    case 'G': mult = 1e9; body.pop_back(); break;
    default: break;
  }
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(body, &pos);
  } catch (const std::exception&) {
    throw UsageError("bad frequency '" + text + "' (use plain hertz or k/M/G suffix)");
  }
  if (pos != body.size())
    throw UsageError("bad frequency '" + text + "' (use plain hertz or k/M/G suffix)");
  return v * mult;
}

// Range grammar: lo:hi[:step], inclusive of hi.
std::vector<double> parse_freq_range(const std::string& text, double default_step) {
  const auto parts = psram::detail::split(text, ':');
  if (parts.size() < 2 || parts.size() > 3)
    throw UsageError("bad range '" + text + "' (expected lo:hi[:step])");
  const double lo = parse_freq(parts[0]);
  const double hi = parse_freq(parts[1]);
  const double step = parts.size() == 3 ? parse_freq(parts[2]) : default_step;
  if (!(step > 0.0) || hi < lo) throw UsageError("bad range '" + text + "'");
  std::vector<double> out;
  for (double v = lo; v <= hi * (1.0 + 1e-12); v += step) out.push_back(v);
  return out;
}

std::vector<std::size_t> parse_count_range(const std::string& text) {
  const auto parts = psram::detail::split(text, ':');
  if (parts.size() < 2 || parts.size() > 3)
    throw UsageError("bad range '" + text + "' (expected lo:hi[:step])");
  auto num = [&](const std::string& t) -> std::size_t {
    try {
      const long long v = std::stoll(t);
      if (v < 0) throw std::invalid_argument(t);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw UsageError("bad count '" + t + "' in range '" + text + "'");
    }
  };
  const std::size_t lo = num(parts[0]);
  const std::size_t hi = num(parts[1]);
  const std::size_t step = parts.size() == 3 ? num(parts[2]) : 1;
  if (step == 0 || hi < lo) throw UsageError("bad range '" + text + "'");
  std::vector<std::size_t> out;
  for (std::size_t v = lo; v <= hi; v += step) out.push_back(v);
  return out;
}

std::array<std::size_t, 3> parse_dims3(const std::string& text) {
  const auto parts = psram::detail::split(text, ',');
  if (parts.size() != 3) throw UsageError("expected three comma-separated sizes");
  std::array<std::size_t, 3> dims{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      const double v = std::stod(parts[i]);
      if (v < 1 || v != std::floor(v)) throw std::invalid_argument(parts[i]);
      dims[i] = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw UsageError("bad mode size '" + parts[i] + "'");
    }
  }
  return dims;
}

psram::ArrayConfig load_config(const std::string& explicit_path) {
  std::string path = explicit_path;
  if (path.empty()) {
    if (const char* env = std::getenv("PSRAM_SIM_CONFIG")) path = env;
  }
  if (path.empty()) return psram::ArrayConfig{};
  if (!std::filesystem::exists(path)) throw IoError(path + ": config file not found");
  return psram::read_array_config_file(path);
}

void check_overwrite(const std::string& path, bool force) {
  if (path.empty()) return;
  if (!force && std::filesystem::exists(path))
    throw IoError(path + ": refusing to overwrite existing file (use --force)");
}

std::ofstream open_output(const std::string& path, bool force) {
  check_overwrite(path, force);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

psram::DenseTensor load_dense_tensor(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError(path + ": tensor file not found");
  if (ends_with(path, ".tns")) return psram::read_tns_file(path).densify();
  return psram::read_dense_file(path);
}

void write_result_matrix_csv(std::ostream& out, const psram::FactorMatrix& m) {
  out << "index";
  for (std::size_t r = 0; r < m.rank; ++r) out << ",comp" << r;
  out << '\n';
  for (std::size_t i = 0; i < m.rows; ++i) {
    out << i;
    for (std::size_t r = 0; r < m.rank; ++r) out << ',' << psram::format_double(m.at(i, r));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// mttkrp subcommand
// ---------------------------------------------------------------------------

struct MttkrpArgs {
  std::string tensor_path, config_path, out_prefix, dump_schedule;
  std::size_t rank = 8;
  std::size_t target = 0;
  std::uint64_t seed = 0;
  bool analog = false;
  double sigma = 0.001;
  bool no_double_buffer = false;
  bool force = false;
};

int run_mttkrp(const MttkrpArgs& a) {
  psram::ArrayConfig cfg = load_config(a.config_path);
  if (a.no_double_buffer) cfg.double_buffering = false;
  const psram::DenseTensor tensor = load_dense_tensor(a.tensor_path);
  if (tensor.mode_count() != 3)
    throw UsageError("mttkrp on the array needs a 3-mode tensor, got " +
                     std::to_string(tensor.mode_count()) + " modes");

  // Factor fixtures are seeded; signed configs draw from [-1, 1).
  const double lo = cfg.signed_data ? -1.0 : 0.0;
  std::vector<psram::FactorMatrix> factors;
  for (std::size_t m = 0; m < 3; ++m)
    factors.push_back(psram::FactorMatrix::random(m, tensor.shape[m], a.rank,
                                                  psram::mix_seed(a.seed, m), lo, 1.0));

  const psram::MttkrpOperands q =
      psram::quantize_mttkrp_operands(tensor, factors, a.target, cfg);
  const psram::FactorMatrix reference =
      psram::mttkrp_reference_on_quantized(tensor, q, a.target);
  psram::ExecutionOptions opt;
  opt.analog = a.analog;
  opt.sigma_rel = a.sigma;
  opt.seed = a.seed;
  const psram::ExecutionResult exec =
      psram::mttkrp_on_array(tensor, factors, a.target, cfg, opt);

  double max_dev = 0.0;
  for (std::size_t i = 0; i < reference.values.size(); ++i)
    max_dev = std::max(max_dev, std::abs(reference.values[i] - exec.values.values[i]));

  if (!a.dump_schedule.empty()) {
    auto out = open_output(a.dump_schedule, a.force);
    psram::write_schedule(out, exec.schedule);
  }
  {
    auto out = open_output(a.out_prefix + "_array.csv", a.force);
    write_result_matrix_csv(out, exec.values);
  }
  {
    auto out = open_output(a.out_prefix + "_reference.csv", a.force);
    write_result_matrix_csv(out, reference);
  }
  {
    auto out = open_output(a.out_prefix + "_summary.csv", a.force);
    out << "metric,value\n";
    out << "mode," << (a.analog ? "analog" : "ideal") << '\n';
    out << "target_mode," << a.target << '\n';
    out << "rank," << a.rank << '\n';
    out << "max_deviation," << psram::format_double(max_dev) << '\n';
    out << "compute_cycles," << exec.compute_cycles << '\n';
    out << "write_cycles," << exec.write_cycles << '\n';
    out << "utilization," << psram::format_double(exec.utilization) << '\n';
    out << "write_energy_j," << psram::format_double(exec.ledger.write_j) << '\n';
    out << "static_energy_j," << psram::format_double(exec.ledger.static_j) << '\n';
    out << "total_energy_j," << psram::format_double(exec.ledger.total_j()) << '\n';
    out << "operand_scale," << psram::format_double(exec.operand_scale) << '\n';
  }
  {
    auto out = open_output(a.out_prefix + "_energy.csv", a.force);
    psram::write_ledger_csv(out, exec.ledger);
  }
  std::cout << "mttkrp: mode=" << (a.analog ? "analog" : "ideal")
            << " max_deviation=" << psram::format_double(max_dev)
            << " compute_cycles=" << exec.compute_cycles
            << " write_cycles=" << exec.write_cycles << '\n';
  if (!a.analog && max_dev != 0.0) return kExitValidation;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cp-als subcommand
// ---------------------------------------------------------------------------

struct CpAlsArgs {
  std::string tensor_path, out_prefix;
  std::size_t rank = 1;
  std::size_t max_iters = 50;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  bool force = false;
};

int run_cp_als(const CpAlsArgs& a) {
  if (!std::filesystem::exists(a.tensor_path))
    throw IoError(a.tensor_path + ": tensor file not found");
  psram::CpAlsOptions opt;
  opt.rank = a.rank;
  opt.max_iters = a.max_iters;
  opt.tol = a.tol;
  opt.seed = a.seed;
  psram::CpAlsResult res = ends_with(a.tensor_path, ".tns")
                               ? psram::cp_als(psram::read_tns_file(a.tensor_path), opt)
                               : psram::cp_als(psram::read_dense_file(a.tensor_path), opt);

  for (std::size_t m = 0; m < res.model.factors.size(); ++m) {
    check_overwrite(a.out_prefix + "_factor" + std::to_string(m) + ".csv", a.force);
    psram::write_factor_csv_file(a.out_prefix + "_factor" + std::to_string(m) + ".csv",
                                 res.model.factors[m], res.model.weights);
  }
  {
    auto out = open_output(a.out_prefix + "_fit_trace.csv", a.force);
    out << "sweep,fit,abs_error\n";
    for (const psram::CpAlsSweepStat& s : res.trace)
      out << s.sweep << ',' << psram::format_double(s.fit) << ','
          << psram::format_double(s.abs_error) << '\n';
  }
  std::cout << "cp-als: sweeps=" << res.sweeps << " fit=" << psram::format_double(res.fit)
            << (res.converged ? " converged" : " max_iters") << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep subcommand
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config_path, out_path, plot_path;
  std::string freq_range = "1G:40G:1G";
  std::string channel_range = "1:64:1";
  std::string dims = "1000000,1000000,1000000";
  std::size_t rank = 52;
  unsigned mac_ops = 2;
  bool force = false;
};

int run_sweep(const SweepArgs& a) {
  psram::ArrayConfig cfg = load_config(a.config_path);
  psram::PerfQuery query;
  query.config = cfg;
  query.dims = parse_dims3(a.dims);
  query.rank = a.rank;
  query.ops_per_mac = a.mac_ops;
  const std::vector<double> freqs = parse_freq_range(a.freq_range, 1e9);
  const std::vector<std::size_t> chans = parse_count_range(a.channel_range);
  const std::vector<psram::SweepRow> rows = psram::sweep(freqs, chans, cfg, query);
  {
    auto out = open_output(a.out_path, a.force);
    psram::write_sweep_csv(out, rows);
  }
  if (!a.plot_path.empty()) {
    auto out = open_output(a.plot_path, a.force);
    psram::write_sweep_svg(out, rows);
  }
  std::cout << "sweep: " << rows.size() << " grid points -> " << a.out_path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate subcommand: deterministic oracle-equivalence battery.
// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string config_path, out_path = "validate_report.csv";
  std::uint64_t seed = 0;
  bool force = false;
};

int run_validate(const ValidateArgs& a) {
  const psram::ArrayConfig cfg = load_config(a.config_path);
  struct Row {
    std::string check, status, detail;
  };
  std::vector<Row> rows;
  bool all_ok = true;
  auto record = [&](const std::string& check, bool ok, const std::string& detail) {
    rows.push_back({check, ok ? "pass" : "FAIL", detail});
    all_ok = all_ok && ok;
    std::cout << (ok ? "pass" : "FAIL") << "  " << check << "  " << detail << '\n';
  };

  {
    const double peak = psram::peak_throughput(psram::ArrayConfig{}, 2);
    record("peak_calibration", peak == 8192.0 * 52.0 * 2.0 * 20e9,
           "peak=" + psram::format_double(peak));
  }
  {
    double worst = 0.0;
    bool ok = true;
    for (std::uint64_t k = 0; k < 10; ++k) {
      psram::SplitMix64 g(psram::mix_seed(a.seed, 1000 + k));
      std::vector<std::size_t> shape{2 + g.next_below(4), 2 + g.next_below(4),
                                     2 + g.next_below(4)};
      const std::size_t rank = 1 + g.next_below(8);
      const std::size_t target = g.next_below(3);
      const psram::DenseTensor t =
          psram::DenseTensor::random(shape, psram::mix_seed(a.seed, 2000 + k));
      std::vector<psram::FactorMatrix> factors;
      for (std::size_t m = 0; m < 3; ++m)
        factors.push_back(psram::FactorMatrix::random(
            m, shape[m], rank, psram::mix_seed(a.seed, 3000 + 10 * k + m)));
      const psram::MttkrpOperands q =
          psram::quantize_mttkrp_operands(t, factors, target, cfg);
      const psram::FactorMatrix ref = psram::mttkrp_reference_on_quantized(t, q, target);
      const psram::ExecutionResult exec = psram::mttkrp_on_array(t, factors, target, cfg);
      for (std::size_t i = 0; i < ref.values.size(); ++i)
        worst = std::max(worst, std::abs(ref.values[i] - exec.values.values[i]));
      ok = ok && exec.compute_cycles ==
                     psram::tile_plan({shape[0], shape[1], shape[2]}, rank, cfg, target)
                         .compute_cycles;
    }
    record("oracle_equivalence", worst == 0.0 && ok,
           "max_deviation=" + psram::format_double(worst));
  }
  {
    const psram::DenseTensor t = [&] {
      psram::FactorMatrix u = psram::FactorMatrix::random(0, 4, 1, psram::mix_seed(a.seed, 7));
      psram::FactorMatrix v = psram::FactorMatrix::random(1, 4, 1, psram::mix_seed(a.seed, 8));
      psram::FactorMatrix w = psram::FactorMatrix::random(2, 4, 1, psram::mix_seed(a.seed, 9));
      psram::CpModel model{{u, v, w}, {1.0}};
      return psram::reconstruct(model);
    }();
    psram::CpAlsOptions opt;
    opt.rank = 1;
    opt.max_iters = 10;
    opt.seed = a.seed;
    const psram::CpAlsResult res = psram::cp_als(t, opt);
    record("cp_als_rank1_fit", res.fit >= 0.9999, "fit=" + psram::format_double(res.fit));
  }
  {
    psram::ArraySim sim(psram::ArrayConfig{}, a.seed);
    std::vector<psram::WordWrite> writes;
    for (std::size_t r = 0; r < 256; ++r)
      for (std::size_t c = 0; c < 32; ++c)
        writes.push_back({r, c, static_cast<std::uint32_t>((r + c) & 0xFF)});
    const psram::WriteCost cost = sim.write_words(writes);
    const double expect = 8192.0 * 8.0 * 1.04e-12;
    record("write_energy_identity",
           cost.energy_j == expect && cost.cycles == 8192,
           "energy_j=" + psram::format_double(cost.energy_j));
  }
  {
    psram::PerfQuery query;
    query.config = cfg;
    std::vector<std::size_t> chans(52);
    for (std::size_t i = 0; i < 52; ++i) chans[i] = i + 1;
    const auto rows_s = psram::sweep({20e9}, chans, cfg, query);
    double sxx = 0.0, sxy = 0.0;
    for (const auto& r : rows_s) {
      sxx += double(r.channels) * double(r.channels);
      sxy += double(r.channels) * r.sustained_ops;
    }
    const double slope = sxy / sxx;
    double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
    for (const auto& r : rows_s) mean += r.sustained_ops;
    mean /= double(rows_s.size());
    for (const auto& r : rows_s) {
      ss_res += std::pow(r.sustained_ops - slope * double(r.channels), 2);
      ss_tot += std::pow(r.sustained_ops - mean, 2);
    }
    const double r2 = 1.0 - ss_res / ss_tot;
    record("sweep_linearity", r2 > 1.0 - 1e-12, "r2=" + psram::format_double(r2));
  }

  auto out = open_output(a.out_path, a.force);
  out << "check,status,detail\n";
  for (const Row& r : rows) out << r.check << ',' << r.status << ',' << r.detail << '\n';
  std::cout << "validate: " << (all_ok ? "all checks passed" : "FAILURES") << " -> "
            << a.out_path << '\n';
  return all_ok ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photonic in-memory MTTKRP array simulator"};
  app.require_subcommand(1);

  MttkrpArgs ma;
  CLI::App* mt = app.add_subcommand("mttkrp", "run MTTKRP on the array and the oracle");
  mt->add_option("--tensor", ma.tensor_path, "tensor file (.tns or dense text)")->required();
  mt->add_option("--rank", ma.rank, "rank R");
  mt->add_option("--target-mode", ma.target, "output mode");
  mt->add_option("--seed", ma.seed, "factor fixture seed");
  mt->add_option("--config", ma.config_path, "array config file (or PSRAM_SIM_CONFIG)");
  mt->add_flag("--analog", ma.analog, "add Gaussian readout noise");
  mt->add_option("--sigma", ma.sigma, "relative noise sigma (analog mode)");
  mt->add_flag("--no-double-buffer", ma.no_double_buffer, "serialize writes with compute");
  mt->add_option("--dump-schedule", ma.dump_schedule, "write the primitive schedule here");
  mt->add_option("--out-prefix", ma.out_prefix, "output file prefix")->required();
  mt->add_flag("--force", ma.force, "overwrite existing outputs");

  CpAlsArgs ca;
  CLI::App* cp = app.add_subcommand("cp-als", "rank-R decomposition via the reference kernels");
  cp->add_option("--tensor", ca.tensor_path, "tensor file (.tns or dense text)")->required();
  cp->add_option("--rank", ca.rank, "rank R")->required();
  cp->add_option("--max-iters", ca.max_iters, "maximum sweeps");
  cp->add_option("--tol", ca.tol, "fit-change stopping tolerance");
  cp->add_option("--seed", ca.seed, "factor initialization seed");
  cp->add_option("--out-prefix", ca.out_prefix, "output file prefix")->required();
  cp->add_flag("--force", ca.force, "overwrite existing outputs");

  SweepArgs sa;
  CLI::App* sw = app.add_subcommand("sweep", "frequency / channel design-space sweep");
  sw->add_option("--freq", sa.freq_range, "frequency range lo:hi[:step], k/M/G suffixes");
  sw->add_option("--channels", sa.channel_range, "channel range lo:hi[:step]");
  sw->add_option("--dims", sa.dims, "workload mode sizes I0,I1,I2");
  sw->add_option("--rank", sa.rank, "workload rank");
  sw->add_option("--mac-ops", sa.mac_ops, "operations counted per MAC (1 or 2)");
  sw->add_option("--config", sa.config_path, "array config file (or PSRAM_SIM_CONFIG)");
  sw->add_option("--out", sa.out_path, "sweep CSV path")->required();
  sw->add_option("--plot", sa.plot_path, "also emit an SVG line chart");
  sw->add_flag("--force", sa.force, "overwrite existing outputs");

  ValidateArgs va;
  CLI::App* vd = app.add_subcommand("validate", "run the bundled oracle-equivalence checks");
  vd->add_option("--seed", va.seed, "fixture seed");
  vd->add_option("--config", va.config_path, "array config file (or PSRAM_SIM_CONFIG)");
  vd->add_option("--out", va.out_path, "report CSV path");
  vd->add_flag("--force", va.force, "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (mt->parsed()) return run_mttkrp(ma);
    if (cp->parsed()) return run_cp_als(ca);
    if (sw->parsed()) return run_sweep(sa);
    if (vd->parsed()) return run_validate(va);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const psram::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}
