#include "lvot/config.hpp"

#include "lvot/discretization.hpp"
#include "lvot/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lvot {

namespace {

using json = nlohmann::json;

const std::vector<std::string> kTables{"residuals", "surface", "implied_vols",
                                       "reference", "marginals", "moments"};

// Reads the fields of one JSON object, remembering which keys were consumed
// so that misspelled keys can be reported.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "(root)" : path_, "must be an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "must be a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void count(const std::string& key, Int& out) {
    if (const json* v = find(key)) out = as_count<Int>(*v, field(key));
  }

  void flag(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "must be true or false");
      out = v->get<bool>();
    }
  }

  void text(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "must be a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "must be an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) {
          throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "must be a number");
        }
        out.push_back((*v)[i].get<double>());
      }
    }
  }

  template <typename Int>
  void counts(const std::string& key, std::vector<Int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "must be an array of integers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        out.push_back(as_count<Int>((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
      }
    }
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "must be an array of strings");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) {
          throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "must be a string");
        }
        out.push_back((*v)[i].get<std::string>());
      }
    }
  }

  /// Nested object, or nullptr when absent.
  const json* object(const std::string& key) { return find(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
    }
  }

 private:
  template <typename Int>
  static Int as_count(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return static_cast<Int>(v.get<std::uint64_t>());
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) throw ConfigError(where, "must not be negative");
      return static_cast<Int>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d))) {
        return static_cast<Int>(d);
      }
    }
    throw ConfigError(where, "must be a non-negative integer");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_market(const json& j, MarketBlock& m) {
  Block b(j, "market");
  if (const json* s = b.object("ssvi")) {
    Block sb(*s, "market.ssvi");
    sb.number("eta", m.ssvi.eta);
    sb.number("lambda", m.ssvi.lambda);
    sb.number("rho", m.ssvi.rho);
    sb.number("theta_slope", m.ssvi.theta_slope);
    sb.finish();
  }
  b.number("spot", m.spot);
  b.numbers("calibration_times", m.calibration_times);
  if (const json* s = b.object("strikes")) {
    Block sb(*s, "market.strikes");
    sb.counts("counts", m.strikes.counts);
    sb.number("offset", m.strikes.offset);
    sb.number("spacing", m.strikes.spacing);
    sb.finish();
  }
  b.finish();
}

void read_discretization(const json& j, DiscretizationBlock& d) {
  Block b(j, "discretization");
  b.number("delta", d.delta);
  b.number("points_per_std", d.points_per_std);
  b.count("max_points", d.max_points);
  b.number("initial_stdev", d.initial_stdev);
  b.number("variance_floor", d.variance_floor);
  b.finish();
}

void read_solver(const json& j, SolverBlock& s) {
  Block b(j, "solver");
  b.number("c_mart", s.c_mart);
  b.number("gamma", s.gamma);
  b.number("stop_tol", s.stop_tol);
  b.count("max_iterations", s.max_iterations);
  b.number("newton_tol", s.newton_tol);
  b.count("max_newton", s.max_newton);
  b.count("max_halvings", s.max_halvings);
  b.finish();
}

void read_acceleration(const json& j, AccelerationBlock& a) {
  Block b(j, "acceleration");
  b.flag("enabled", a.enabled);
  b.count("depth", a.depth);
  b.number("ridge", a.ridge);
  b.flag("relative_ridge", a.relative_ridge);
  b.number("tau", a.tau);
  b.finish();
}

void read_ladder(const json& j, LadderBlock& l) {
  Block b(j, "ladder");
  b.counts("step_counts", l.step_counts);
  b.finish();
}

void read_output(const json& j, OutputBlock& o) {
  Block b(j, "output");
  b.text("directory", o.directory);
  b.count("verbosity", o.verbosity);
  b.strings("tables", o.tables);
  b.finish();
}

void read_verify(const json& j, VerifyBlock& v) {
  Block b(j, "verify");
  b.count("n_paths", v.n_paths);
  b.count("block_size", v.block_size);
  b.finish();
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

bool OutputBlock::emits(const std::string& table) const {
  return std::find(tables.begin(), tables.end(), table) != tables.end();
}

void RunConfig::validate() const {
  const auto& s = market.ssvi;
  require(s.eta > 0.0, "market.ssvi.eta", "must be positive");
  require(s.lambda > 0.0 && s.lambda < 1.0, "market.ssvi.lambda", "must lie in (0, 1)");
  require(std::abs(s.rho) < 1.0, "market.ssvi.rho", "must lie in (-1, 1)");
  require(s.theta_slope > 0.0, "market.ssvi.theta_slope", "must be positive");
  require(market.spot > 0.0, "market.spot", "must be positive");
  require(!market.calibration_times.empty(), "market.calibration_times", "must not be empty");
  for (std::size_t i = 0; i < market.calibration_times.size(); ++i) {
    const double t = market.calibration_times[i];
    require(t > 0.0 && (i == 0 || t > market.calibration_times[i - 1]),
            "market.calibration_times", "must be positive and strictly increasing");
  }
  require(market.strikes.counts.size() == market.calibration_times.size(),
          "market.strikes.counts", "needs one entry per calibration time");
  for (int c : market.strikes.counts) {
    require(c >= 0, "market.strikes.counts", "must not be negative");
  }
  require(market.strikes.offset >= 0.0, "market.strikes.offset", "must not be negative");
  require(market.strikes.spacing > 0.0, "market.strikes.spacing", "must be positive");

  require(discretization.delta > 0.0, "discretization.delta", "must be positive");
  require(discretization.points_per_std >= 2.0, "discretization.points_per_std",
          "must be at least 2");
  require(discretization.max_points >= 2, "discretization.max_points", "must be at least 2");
  require(discretization.initial_stdev >= 0.0, "discretization.initial_stdev",
          "must not be negative");
  require(discretization.variance_floor > 0.0, "discretization.variance_floor",
          "must be positive");

  require(solver.c_mart > 0.0, "solver.c_mart", "must be positive");
  require(solver.gamma > 0.0, "solver.gamma", "must be positive");
  require(solver.stop_tol > 0.0, "solver.stop_tol", "must be positive");
  require(solver.max_iterations >= 1, "solver.max_iterations", "must be at least 1");
  require(solver.newton_tol > 0.0, "solver.newton_tol", "must be positive");
  require(solver.max_newton >= 1, "solver.max_newton", "must be at least 1");

  require(acceleration.depth >= 1, "acceleration.depth", "must be at least 1");
  require(acceleration.ridge >= 0.0, "acceleration.ridge", "must not be negative");
  require(acceleration.tau > 0.0, "acceleration.tau", "must be positive");

  require(!ladder.step_counts.empty(), "ladder.step_counts", "must not be empty");
  for (std::size_t i = 0; i < ladder.step_counts.size(); ++i) {
    require(ladder.step_counts[i] > 0 &&
                (i == 0 || ladder.step_counts[i] > ladder.step_counts[i - 1]),
            "ladder.step_counts", "must be positive and strictly increasing");
    require(calibration_aligned(market.calibration_times.back(), ladder.step_counts[i],
                                market.calibration_times),
            "ladder.step_counts",
            "every scale must keep the calibration times on the grid (failed for " +
                std::to_string(ladder.step_counts[i]) + " steps)");
  }

  require(!output.directory.empty(), "output.directory", "must not be empty");
  for (const auto& t : output.tables) {
    require(std::find(kTables.begin(), kTables.end(), t) != kTables.end(), "output.tables",
            "unknown table '" + t + "'");
  }
  require(verify.n_paths >= 2, "verify.n_paths", "must be at least 2");
  require(verify.block_size >= 1, "verify.block_size", "must be at least 1");
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("(root)", std::string("invalid JSON: ") + e.what());
  }
  RunConfig config;
  Block b(root, "");
  if (const json* j = b.object("market")) read_market(*j, config.market);
  if (const json* j = b.object("discretization")) read_discretization(*j, config.discretization);
  if (const json* j = b.object("solver")) read_solver(*j, config.solver);
  if (const json* j = b.object("acceleration")) read_acceleration(*j, config.acceleration);
  if (const json* j = b.object("ladder")) read_ladder(*j, config.ladder);
  if (const json* j = b.object("output")) read_output(*j, config.output);
  if (const json* j = b.object("verify")) read_verify(*j, config.verify);
  if (b.object("seed")) {
    std::uint64_t seed = 0;
    b.count("seed", seed);
    config.seed = seed;
  }
  b.finish();
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& c) {
  json root;
  root["market"] = {
      {"ssvi",
       {{"eta", c.market.ssvi.eta},
        {"lambda", c.market.ssvi.lambda},
        {"rho", c.market.ssvi.rho},
        {"theta_slope", c.market.ssvi.theta_slope}}},
      {"spot", c.market.spot},
      {"calibration_times", c.market.calibration_times},
      {"strikes",
       {{"counts", c.market.strikes.counts},
        {"offset", c.market.strikes.offset},
        {"spacing", c.market.strikes.spacing}}}};
  root["discretization"] = {{"delta", c.discretization.delta},
                            {"points_per_std", c.discretization.points_per_std},
                            {"max_points", c.discretization.max_points},
                            {"initial_stdev", c.discretization.initial_stdev},
                            {"variance_floor", c.discretization.variance_floor}};
  root["solver"] = {{"c_mart", c.solver.c_mart},
                    {"gamma", c.solver.gamma},
                    {"stop_tol", c.solver.stop_tol},
                    {"max_iterations", c.solver.max_iterations},
                    {"newton_tol", c.solver.newton_tol},
                    {"max_newton", c.solver.max_newton},
                    {"max_halvings", c.solver.max_halvings}};
  root["acceleration"] = {{"enabled", c.acceleration.enabled},
                          {"depth", c.acceleration.depth},
                          {"ridge", c.acceleration.ridge},
                          {"relative_ridge", c.acceleration.relative_ridge},
                          {"tau", c.acceleration.tau}};
  root["ladder"] = {{"step_counts", c.ladder.step_counts}};
  root["output"] = {{"directory", c.output.directory},
                    {"verbosity", c.output.verbosity},
                    {"tables", c.output.tables}};
  root["verify"] = {{"n_paths", c.verify.n_paths}, {"block_size", c.verify.block_size}};
  root["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return root.dump(2) + "\n";
}

}  // namespace lvot
