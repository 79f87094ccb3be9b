#include "lvot/commands.hpp"

#include "lvot/errors.hpp"
#include "lvot/market_model.hpp"
#include "lvot/mc_audit.hpp"
#include "lvot/multiscale.hpp"
#include "lvot/table_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <regex>
#include <stdexcept>

namespace lvot {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kResidualHeader{"scale",        "iteration",   "accepted",
                                               "e_max",        "price_err_l2", "mart_err_l2"};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double safe_iv(double price, double spot, const Instrument& inst, double t) {
  try {
    return implied_vol(price, spot, inst.strike, t, inst.kind);
  } catch (const DomainError&) {
    return nan();
  }
}

InstrumentSet load_or_generate(const RunConfig& config, const CommandOptions& options,
                               const fs::path& out) {
  if (options.instruments) {
    std::ifstream in = open_in(*options.instruments);
    return read_instruments(in);
  }
  InstrumentSet set = generate_market(config.market.ssvi, config.market.spot,
                                      config.market.calibration_times, config.market.strikes,
                                      config.solver.gamma);
  std::ofstream f = open_out(out / "instruments.csv");
  write_instruments(f, set);
  return set;
}

LadderConfig ladder_config(const RunConfig& config, const CommandOptions& options) {
  LadderConfig lc;
  if (options.scale_override) {
    lc.ladder.step_counts = {*options.scale_override};
  } else {
    lc.ladder.step_counts = config.ladder.step_counts;
  }
  lc.spot = config.market.spot;
  lc.initial_stdev = config.discretization.initial_stdev;
  lc.delta = config.discretization.delta;
  lc.points_per_std = config.discretization.points_per_std;
  lc.max_points = config.discretization.max_points;
  lc.variance_floor = config.discretization.variance_floor;
  lc.c_mart = config.solver.c_mart;
  lc.solver.stop_tol = config.solver.stop_tol;
  lc.solver.max_iterations = config.solver.max_iterations;
  lc.solver.newton_tol = config.solver.newton_tol;
  lc.solver.max_newton = config.solver.max_newton;
  lc.solver.max_halvings = config.solver.max_halvings;
  lc.solver.accelerate = config.acceleration.enabled;
  lc.solver.anderson.depth = config.acceleration.depth;
  lc.solver.anderson.ridge = config.acceleration.ridge;
  lc.solver.anderson.relative_ridge = config.acceleration.relative_ridge;
  lc.solver.anderson.tau = config.acceleration.tau;
  return lc;
}

void write_residuals(CsvWriter& csv, std::size_t scale, const std::vector<Residual>& history) {
  for (const Residual& r : history) {
    csv << scale << r.iteration << (r.accepted ? 1 : 0) << r.e_max << r.price_err_l2
        << r.mart_err_l2;
    csv.end_row();
  }
}

void write_implied_vols(std::ostream& out, const InstrumentSet& set, const Metrics& m,
                        double spot) {
  CsvWriter csv(out, {"maturity_time", "kind", "strike", "target_price", "model_price",
                      "target_iv", "model_iv", "rel_price_err"});
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Instrument& inst = set.instruments[i];
    const double t = set.maturity(inst);
    const double model = m.model_prices(static_cast<Eigen::Index>(i));
    csv << t << to_string(inst.kind) << inst.strike << inst.target_price << model
        << safe_iv(inst.target_price, spot, inst, t) << safe_iv(model, spot, inst, t)
        << std::abs(model - inst.target_price) / inst.target_price;
    csv.end_row();
  }
}

void write_marginals(std::ostream& out, const SinkhornSolver& solver) {
  const TiltedChain& chain = solver.chain();
  const ReferenceMeasure& ref = chain.reference();
  CsvWriter csv(out, {"step", "t", "x", "model", "reference"});
  const std::vector<Eigen::VectorXd> prior = ref.forward_marginals();
  for (std::size_t k = 0; k <= ref.n_steps(); ++k) {
    const Eigen::VectorXd nu = chain.marginal(k, solver.potentials(), solver.props());
    const double mass = nu.sum();
    for (Eigen::Index i = 0; i < nu.size(); ++i) {
      csv << k << ref.time.times[k] << ref.space.points(i) << nu(i) / mass << prior[k](i);
      csv.end_row();
    }
  }
}

void write_moments(std::ostream& out, const SinkhornSolver& solver) {
  const TiltedChain& chain = solver.chain();
  const ReferenceMeasure& ref = chain.reference();
  CsvWriter csv(out, {"step", "t", "x", "mass", "drift", "second_moment", "local_var",
                      "martingale_defect", "missing"});
  for (std::size_t k = 0; k < ref.n_steps(); ++k) {
    const ConditionalMoments cm = chain.conditional_moments(k, solver.potentials(), solver.props());
    for (Eigen::Index i = 0; i < cm.mass.size(); ++i) {
      const bool miss = cm.missing[static_cast<std::size_t>(i)];
      csv << k << ref.time.times[k] << ref.space.points(i) << cm.mass(i)
          << (miss ? nan() : cm.beta(i)) << (miss ? nan() : cm.alpha(i))
          << (miss ? nan() : cm.local_var(i)) << (miss ? nan() : cm.b(i, 0)) << (miss ? 1 : 0);
      csv.end_row();
    }
  }
}

std::ostream* logger(const RunConfig& config, const CommandOptions& options) {
  return config.output.verbosity > 0 ? options.log : nullptr;
}

}  // namespace

fs::path output_dir(const RunConfig& config, const CommandOptions& options) {
  return options.out_dir.empty() ? fs::path(config.output.directory) : options.out_dir;
}

int cmd_generate_market(const RunConfig& config, const CommandOptions& options) {
  const fs::path out = output_dir(config, options);
  fs::create_directories(out);
  const InstrumentSet set = generate_market(config.market.ssvi, config.market.spot,
                                            config.market.calibration_times,
                                            config.market.strikes, config.solver.gamma);
  std::ofstream f = open_out(out / "instruments.csv");
  write_instruments(f, set);
  if (std::ostream* log = logger(config, options)) {
    *log << "wrote " << set.size() << " instruments to " << (out / "instruments.csv").string()
         << "\n";
    for (const auto& w : set.warnings) *log << "warning: " << w << "\n";
  }
  return 0;
}

int cmd_calibrate(const RunConfig& config, const CommandOptions& options) {
  const fs::path out = output_dir(config, options);
  fs::create_directories(out);
  const InstrumentSet set = load_or_generate(config, options, out);
  const LadderConfig lc = ladder_config(config, options);
  std::ostream* log = logger(config, options);
  const bool residuals = config.output.emits("residuals");
  const bool surfaces = config.output.emits("surface");

  auto on_scale = [&](const ScaleResult& scale) {
    const std::string tag = std::to_string(scale.n_steps);
    if (residuals) {
      std::ofstream f = open_out(out / ("residuals_scale_" + tag + ".csv"));
      CsvWriter csv(f, kResidualHeader);
      write_residuals(csv, scale.n_steps, scale.report.history);
    }
    if (surfaces) {
      std::ofstream f = open_out(out / ("surface_scale_" + tag + ".csv"));
      write_surface(f, scale.surface);
    }
    if (log) {
      const Metrics& m = scale.report.final;
      *log << "scale N_T=" << scale.n_steps << ": " << scale.report.iterations
           << " iterations, " << (scale.report.converged ? "converged" : "not converged")
           << ", price_err_l2=" << format_double(m.price_err_l2)
           << ", max_rel_price_err=" << format_double(m.max_rel_price_err)
           << ", mart_err_l2=" << format_double(m.mart_err_l2) << ", "
           << format_double(scale.report.seconds) << " s\n";
      for (const auto& w : scale.warnings) *log << "warning: " << w << "\n";
    }
  };

  const LadderResult result = run_ladder(lc, set, on_scale);
  const Metrics& final = result.scales.back().report.final;

  if (residuals) {
    std::ofstream f = open_out(out / "residuals.csv");
    CsvWriter csv(f, kResidualHeader);
    for (const ScaleResult& s : result.scales) write_residuals(csv, s.n_steps, s.report.history);
  }
  if (surfaces) {
    std::ofstream f = open_out(out / "surface.csv");
    write_surface(f, result.scales.back().surface);
  }
  if (config.output.emits("implied_vols")) {
    std::ofstream f = open_out(out / "implied_vols.csv");
    write_implied_vols(f, set, final, config.market.spot);
  }
  if (config.output.emits("reference")) {
    std::ofstream f = open_out(out / "reference_summary.csv");
    write_reference_summary(f, *result.reference, result.bounds);
  }
  if (config.output.emits("marginals")) {
    std::ofstream f = open_out(out / "marginals.csv");
    write_marginals(f, *result.solver);
  }
  if (config.output.emits("moments")) {
    std::ofstream f = open_out(out / "moments.csv");
    write_moments(f, *result.solver);
  }

  nlohmann::ordered_json summary;
  summary["converged"] = result.converged;
  summary["grid"] = {{"lower", result.grid.lower},
                     {"upper", result.grid.upper},
                     {"dx", result.grid.dx},
                     {"n_points", result.grid.n_points}};
  summary["instruments"] = set.size();
  nlohmann::ordered_json scales = nlohmann::ordered_json::array();
  for (const ScaleResult& s : result.scales) {
    const Metrics& m = s.report.final;
    scales.push_back({{"n_steps", s.n_steps},
                      {"converged", s.report.converged},
                      {"iterations", s.report.iterations},
                      {"sweeps", s.report.sweeps},
                      {"seconds", s.report.seconds},
                      {"price_err_l2", m.price_err_l2},
                      {"max_rel_price_err", m.max_rel_price_err},
                      {"mart_err_l2", m.mart_err_l2},
                      {"mass", m.mass},
                      {"warnings", s.warnings}});
  }
  summary["scales"] = scales;
  summary["warnings"] = set.warnings;
  std::ofstream f = open_out(out / "calibration_summary.json");
  f << summary.dump(2) << "\n";

  return result.converged ? 0 : 2;
}

int cmd_verify(const RunConfig& config, const CommandOptions& options) {
  const std::optional<std::uint64_t> seed = options.seed ? options.seed : config.seed;
  if (!seed) throw ConfigError("seed", "verify needs a fixed seed (--seed or the config)");
  const fs::path out = output_dir(config, options);
  fs::create_directories(out);

  std::ifstream inst_in = open_in(options.instruments.value_or(out / "instruments.csv"));
  const InstrumentSet set = read_instruments(inst_in);
  if (set.calibration_times.empty()) throw DomainError("verify: instrument file is empty");
  std::ifstream surf_in = open_in(options.surface.value_or(out / "surface.csv"));
  const LocalVarianceTable surface = read_surface(surf_in, set.calibration_times.back());

  McConfig mc;
  mc.n_paths = options.paths.value_or(config.verify.n_paths);
  mc.block_size = config.verify.block_size;
  mc.seed = *seed;
  const std::vector<McQuote> quotes = mc_reprice(surface, set, config.market.spot, mc);
  std::ofstream f = open_out(out / "mc_audit.csv");
  write_mc_audit(f, set, quotes);
  if (std::ostream* log = logger(config, options)) {
    *log << "repriced " << set.size() << " instruments with " << mc.n_paths << " paths\n";
  }
  return 0;
}

std::vector<fs::path> find_residual_logs(const fs::path& dir) {
  static const std::regex pattern(R"(residuals_scale_(\d+)\.csv)");
  std::vector<std::pair<std::size_t, fs::path>> found;
  if (!fs::is_directory(dir)) return {};
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoul(m[1]), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> paths;
  for (auto& [n, p] : found) paths.push_back(p);
  return paths;
}

int cmd_report(const RunConfig& config, const CommandOptions& options) {
  const fs::path out = output_dir(config, options);
  const std::vector<fs::path> inputs =
      options.inputs.empty() ? find_residual_logs(out) : options.inputs;
  std::ostream* log = logger(config, options);

  std::vector<fs::path> missing;
  std::vector<CsvTable> tables;
  for (const fs::path& p : inputs) {
    try {
      CsvTable table = read_csv_file(p);
      for (const auto& col : kResidualHeader) {
        if (!table.has_column(col)) throw std::runtime_error("column " + col + " missing");
      }
      tables.push_back(std::move(table));
    } catch (const std::exception& e) {
      missing.push_back(p);
      if (log) *log << "missing or unreadable input: " << p.string() << " (" << e.what() << ")\n";
    }
  }
  if (tables.empty()) throw std::runtime_error("report: no readable residual logs");

  fs::create_directories(out);
  std::ofstream f = open_out(out / "convergence.csv");
  std::vector<std::string> header = kResidualHeader;
  header.push_back("boundary");
  CsvWriter csv(f, header);
  std::ofstream fb = open_out(out / "scale_boundaries.csv");
  CsvWriter bounds(fb, {"row", "from_scale", "to_scale"});
  std::size_t row = 0;
  std::string previous;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const CsvTable& table = tables[t];
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string scale = table.text(r, "scale");
      const bool boundary = row > 0 && scale != previous;
      if (boundary) {
        bounds << row << previous << scale;
        bounds.end_row();
      }
      for (const auto& col : kResidualHeader) csv << table.text(r, col);
      csv << (boundary ? 1 : 0);
      csv.end_row();
      previous = scale;
      ++row;
    }
  }
  if (log) {
    *log << "merged " << tables.size() << " residual logs (" << row << " rows)";
    if (!missing.empty()) *log << ", " << missing.size() << " missing";
    *log << "\n";
  }
  return missing.empty() ? 0 : 2;
}

}  // namespace lvot
