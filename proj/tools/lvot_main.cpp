// lvot: calibrate a discrete-time local volatility model to vanilla prices.

#include "lvot/commands.hpp"
#include "lvot/config.hpp"
#include "lvot/errors.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Entropic calibration of a discrete-time local volatility model"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t paths = 0;
  std::size_t scale_override = 0;
  std::string instruments;
  std::string surface;
  std::vector<std::string> inputs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: output.directory)");
  };

  CLI::App* gen = app.add_subcommand("generate-market", "write the synthetic instrument table");
  common(gen);

  CLI::App* cal = app.add_subcommand("calibrate", "run the scale ladder");
  common(cal);
  CLI::Option* scale_opt =
      cal->add_option("--scale-override", scale_override, "single scale with this many steps")
          ->check(CLI::PositiveNumber);
  CLI::Option* cal_inst = cal->add_option("--instruments", instruments,
                                          "instrument table (default: generated from config)");

  CLI::App* ver = app.add_subcommand("verify", "Monte-Carlo audit of a calibrated surface");
  common(ver);
  CLI::Option* seed_opt = ver->add_option("--seed", seed, "random seed (required)");
  CLI::Option* paths_opt =
      ver->add_option("--paths", paths, "number of paths")->check(CLI::PositiveNumber);
  CLI::Option* ver_inst = ver->add_option("--instruments", instruments, "instrument table");
  CLI::Option* ver_surf = ver->add_option("--surface", surface, "surface table");

  CLI::App* rep = app.add_subcommand("report", "merge per-scale residual logs");
  common(rep);
  rep->add_option("inputs", inputs, "residual logs (default: residuals_scale_*.csv in --out)");

  CLI11_PARSE(app, argc, argv);

  try {
    const lvot::RunConfig config =
        config_path.empty() ? lvot::RunConfig{} : lvot::load_config(config_path);
    config.validate();

    lvot::CommandOptions options;
    options.out_dir = out_dir;
    options.log = &std::cerr;
    if (*seed_opt) options.seed = seed;
    if (*paths_opt) options.paths = paths;
    if (*scale_opt) options.scale_override = scale_override;
    if (*cal_inst || *ver_inst) options.instruments = instruments;
    if (*ver_surf) options.surface = surface;
    for (const auto& p : inputs) options.inputs.emplace_back(p);

    if (gen->parsed()) return lvot::cmd_generate_market(config, options);
    if (cal->parsed()) return lvot::cmd_calibrate(config, options);
    if (ver->parsed()) return lvot::cmd_verify(config, options);
    if (rep->parsed()) return lvot::cmd_report(config, options);
  } catch (const lvot::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const lvot::ResourceError& e) {
    std::cerr << "resource limit at step " << e.step() << ": " << e.what() << "\n";
    return 1;
  } catch (const lvot::DegenerateMassError& e) {
    std::cerr << "degenerate mass at step " << e.step() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
