// Command-line front end: train from a config file, run the estimator lab,
// or run the built-in collapse and overfitting demos.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "routing/bench.hpp"
#include "routing/errors.hpp"
#include "routing/estimator_lab.hpp"

namespace fs = std::filesystem;
using namespace routing;

namespace {

constexpr int kConfigError = 1;
constexpr int kNumericAbort = 2;

// Returns an open stream for DIR/name, or stdout when dir is empty.
std::ostream& open_output(const std::string& dir, const std::string& name, std::unique_ptr<std::ofstream>& holder) {
  if (dir.empty()) return std::cout;
  fs::create_directories(dir);
  holder = std::make_unique<std::ofstream>(fs::path(dir) / name);
  if (!*holder) throw ConfigError("cannot write " + (fs::path(dir) / name).string());
  return *holder;
}

void summarize(const std::string& label, const bench::ExperimentResult& r) {
  const auto& tr = r.final_row("train");
  const auto& te = r.final_row("test");
  std::cerr << label << ": train loss " << tr.loss << " metric " << tr.metric << " entropy " << tr.entropy
            << " | test loss " << te.loss << " metric " << te.metric << (tr.collapse ? " | collapsed" : "") << '\n';
}

bench::ExperimentResult run_preset(const std::string& preset, std::optional<std::uint64_t> seed, const std::string& dir,
                                   const std::string& file) {
  bench::ExperimentConfig cfg = bench::parse_config(bench::preset_text(preset));
  if (seed) cfg.seed = *seed;
  std::unique_ptr<std::ofstream> holder;
  std::ostream& out = open_output(dir, file, holder);
  auto r = bench::run_experiment(cfg, dir.empty() ? nullptr : &out);
  summarize(preset, r);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Routing network trainer and gradient-estimator lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "Train from a key = value config file");
  train->add_option("--config", config_path, "Config file")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Output directory (CSV goes to stdout otherwise)");
  auto* defaults = app.add_subcommand("defaults", "Print every config key with its default");
  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "Print a built-in config (demo-collapse, demo-meta, ...)");
  preset->add_option("name", preset_name, "Preset name")->required();

  std::vector<std::size_t> ks{2, 4, 8, 16, 32};
  bool no_relax = false;
  auto* lab = app.add_subcommand("estimator-lab", "Estimator MSE/variance sweep over dimensions");
  lab->add_option("--seed", seed, "Seed");
  lab->add_option("--out", out_dir, "Output directory (CSV goes to stdout otherwise)");
  lab->add_option("--ks", ks, "Dimensions")->delimiter(',');
  lab->add_flag("--no-relax", no_relax, "Skip the RELAX rows");

  auto* collapse = app.add_subcommand("demo-collapse", "Single-decision routing on two-mode data, alpha 0 and -0.5");
  collapse->add_option("--config", config_path, "Config file replacing the alpha-0 preset");
  collapse->add_option("--seed", seed, "Seed");
  collapse->add_option("--out", out_dir, "Output directory");

  auto* overfit = app.add_subcommand("demo-overfit", "Depth-3 scalar routing vs a single module on 32 noisy points");
  overfit->add_option("--config", config_path, "Config file replacing the routed preset");
  overfit->add_option("--seed", seed, "Seed");
  overfit->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*defaults) {
      std::cout << bench::default_config_text();
    } else if (*preset) {
      std::cout << bench::preset_text(preset_name);
    } else if (*train) {
      bench::ExperimentConfig cfg = bench::load_config(config_path);
      if (seed) cfg.seed = *seed;
      const std::string dir = out_dir.empty() ? cfg.out : out_dir;
      std::unique_ptr<std::ofstream> holder;
      std::ostream& out = open_output(dir, "metrics.csv", holder);
      summarize("train", bench::run_experiment(cfg, &out));
    } else if (*lab) {
      lab::ProtocolConfig pc;
      pc.ks = ks;
      if (seed) pc.seed = *seed;
      if (no_relax) pc.estimators = {lab::Estimator::reinforce, lab::Estimator::reinforce_baseline, lab::Estimator::gumbel};
      std::unique_ptr<std::ofstream> holder;
      std::ostream& out = open_output(out_dir, "estimator_lab.csv", holder);
      lab::run_protocol(pc).write_csv(out);
    } else if (*collapse) {
      if (!config_path.empty()) {
        bench::ExperimentConfig cfg = bench::load_config(config_path);
        if (seed) cfg.seed = *seed;
        std::unique_ptr<std::ofstream> holder;
        std::ostream& out = open_output(out_dir.empty() ? "." : out_dir, "collapse.csv", holder);
        summarize("demo-collapse", bench::run_experiment(cfg, &out));
      } else {
        run_preset("demo-collapse", seed, out_dir.empty() ? "." : out_dir, "collapse.csv");
      }
      run_preset("demo-collapse-diverse", seed, out_dir.empty() ? "." : out_dir, "collapse_diverse.csv");
    } else if (*overfit) {
      if (!config_path.empty()) {
        bench::ExperimentConfig cfg = bench::load_config(config_path);
        if (seed) cfg.seed = *seed;
        std::unique_ptr<std::ofstream> holder;
        std::ostream& out = open_output(out_dir.empty() ? "." : out_dir, "overfit_routed.csv", holder);
        summarize("demo-overfit", bench::run_experiment(cfg, &out));
      } else {
        run_preset("demo-overfit", seed, out_dir.empty() ? "." : out_dir, "overfit_routed.csv");
      }
      run_preset("demo-overfit-baseline", seed, out_dir.empty() ? "." : out_dir, "overfit_baseline.csv");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return 0;
}
