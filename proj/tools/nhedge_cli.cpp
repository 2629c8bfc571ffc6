// nhedge: command line front end for simulation, training, pricing and the
// two experiments.

#include "nhedge/experiment.hpp"
#include "nhedge/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace nhedge;
using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string scale;
  std::optional<int> threads;
  bool quiet = false;
};

// Missing input artifacts; reported with the offending path (exit code 1).
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig resolve_config(const Globals& g, const std::string& file) {
  ExperimentConfig cfg;
  if (!file.empty()) {
    cfg = load_config(file, g.scale);
  } else {
    cfg = ExperimentConfig::preset(g.scale.empty() ? "desk" : g.scale);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  cfg.validate();
  return cfg;
}

Logger make_logger(const Globals& g) {
  if (g.quiet) return {};
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%8.1fs] %s\n", s, msg.c_str());
  };
}

json read_json_file(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ArtifactError("missing artifact: " + file.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ArtifactError("cannot parse " + file.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& file, const json& j) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << j.dump(2) << '\n';
}

void write_paths(const fs::path& file, const PathSet& paths) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  write_paths_csv(os, paths);
}

std::string option_name(const Instrument& instr) { return std::string(to_string(instr.kind)); }

fs::path primary_file(const fs::path& dir, double cost, const Instrument& instr) {
  return dir / ("primary_c" + cost_label(cost) + "_" + option_name(instr) + ".json");
}

void write_config_copy(const fs::path& dir, const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j["config_hash"] = hex64(config_hash(cfg));
  write_json_file(dir / "config.json", j);
}

int cmd_simulate(const Globals& g, const std::string& config, const fs::path& out) {
  const auto cfg = resolve_config(g, config);
  fs::create_directories(out);
  ExperimentRunner runner(cfg, make_logger(g));
  write_paths(out / "secondary_train.csv", runner.secondary_train_paths());
  write_paths(out / "secondary_test.csv", runner.secondary_test_paths());
  const auto options = cfg.hedge_options();
  for (std::size_t i = 0; i < options.size(); ++i) {
    const auto paths = simulate_heston(cfg.heston, cfg.grid, cfg.paths.primary_train,
                                       runner.seeds().primary_paths(static_cast<int>(i)));
    write_paths(out / ("primary_" + option_name(options[i]) + ".csv"), paths);
  }
  write_config_copy(out, cfg);
  std::cout << "wrote path sets to " << out.string() << '\n';
  return 0;
}

int cmd_train_primary(const Globals& g, const std::string& config, const fs::path& out) {
  const auto cfg = resolve_config(g, config);
  fs::create_directories(out);
  ExperimentRunner runner(cfg, make_logger(g));
  for (double c : cfg.cost_levels) {
    for (const auto& t : runner.primaries(c)) {
      const auto file = primary_file(out, c, t->instrument);
      write_json_file(file, t->to_json());
      std::cout << file.string() << '\n';
    }
  }
  write_config_copy(out, cfg);
  return 0;
}

int cmd_price(const Globals& g, const std::string& trader_file, double spot, double variance, int steps,
              bool bs, std::optional<Eigen::Index> branches) {
  const json j = read_json_file(trader_file);
  PrimaryTrader trader;
  try {
    trader = PrimaryTrader::from_json(j);
  } catch (const std::exception& e) {
    throw ArtifactError("cannot load trader " + trader_file + ": " + e.what());
  }
  const json& meta = trader.metadata;
  TimeGrid grid;
  if (meta.contains("grid")) {
    grid.n_steps = meta["grid"].at("n_steps").get<int>();
    grid.dt = meta["grid"].at("dt").get<double>();
  }
  if (steps < 0 || steps > grid.n_steps)
    throw ConfigError("--steps must lie in [0, " + std::to_string(grid.n_steps) + "]");
  if (!(variance >= 0.0)) throw ConfigError("--variance must be non-negative");
  if (!(spot > 0.0)) throw ConfigError("--spot must be positive");
  double price = 0.0;
  if (bs) {
    price = price_black_scholes(trader.instrument, grid, spot, variance, steps);
  } else {
    HestonParams market;
    if (meta.contains("heston")) {
      const json& h = meta["heston"];
      market = {h.at("s0").get<double>(), h.at("v0").get<double>(), h.at("kappa").get<double>(),
                h.at("theta").get<double>(), h.at("sigma").get<double>(), h.at("rho").get<double>()};
    }
    const Eigen::Index n = branches ? *branches : meta.value("pricing_branches", Eigen::Index{256});
    std::uint64_t base = meta.value("pricing_seed", std::uint64_t{0});
    if (g.seed) base = *g.seed;
    const std::uint64_t seed = derive_seed(base, "pricing", static_cast<std::uint64_t>(trader.id));
    price = price_deep(trader, market, grid, spot, variance, steps, n, seed);
  }
  std::cout << std::setprecision(10) << price << '\n';
  return 0;
}

std::vector<std::shared_ptr<const PrimaryTrader>> load_primaries(const fs::path& dir, const ExperimentConfig& cfg,
                                                                 double cost) {
  std::vector<std::shared_ptr<const PrimaryTrader>> out;
  for (const auto& instr : cfg.hedge_options()) {
    const auto file = primary_file(dir, cost, instr);
    const json j = read_json_file(file);
    try {
      out.push_back(std::make_shared<const PrimaryTrader>(PrimaryTrader::from_json(j)));
    } catch (const std::exception& e) {
      throw ArtifactError("cannot load trader " + file.string() + ": " + e.what());
    }
  }
  return out;
}

int cmd_train_secondary(const Globals& g, const std::string& config, const fs::path& primaries,
                        const fs::path& out, const std::string& utility_name, std::vector<std::string> methods) {
  auto cfg = resolve_config(g, config);
  if (utility_name != "erm" && utility_name != "cvar") throw ConfigError("--utility must be erm or cvar");
  const UtilitySpec utility = utility_name == "erm" ? cfg.exp1_utility : cfg.exp2_utility;
  if (methods.empty()) methods = {"black-scholes", "stock-only", "proposed"};
  fs::create_directories(out);
  ExperimentRunner runner(cfg, make_logger(g));
  std::vector<TableRow> rows;
  for (double c : cfg.cost_levels) {
    if (std::find(methods.begin(), methods.end(), "proposed") != methods.end())
      runner.set_primaries(c, load_primaries(primaries, cfg, c));
    for (const auto& m : methods) {
      const auto result = runner.run_method(m, c, utility, utility.kind == UtilityKind::Cvar);
      write_json_file(out / ("secondary_c" + cost_label(c) + "_" + m + ".json"), result.trader.to_json());
      write_pl_csv(out / ("pl_c" + cost_label(c) + "_" + m + ".csv"), result.evaluation.pl);
      if (!result.greeks.empty()) write_greeks_csv(out / ("greeks_c" + cost_label(c) + "_" + m + ".csv"), result.greeks);
      rows.push_back({c, m, result.hedge_cost});
    }
  }
  write_table_csv(out / "table.csv", rows);
  write_config_copy(out, cfg);
  std::cout << render_table(rows, "Hedge cost, " + utility.label());
  return 0;
}

int cmd_experiment(const Globals& g, const std::string& config, const fs::path& out, int which) {
  const auto cfg = resolve_config(g, config);
  ExperimentRunner runner(cfg, make_logger(g));
  auto report = which == 1 ? runner.run_experiment1() : runner.run_experiment2();
  write_report(report, cfg, runner.seeds(), out);
  const std::string title = which == 1 ? "Hedge cost of secondary traders, " + report.utility + " (arbitrage test)"
                                       : "Hedge cost of secondary traders, " + report.utility;
  std::cout << render_table(table_rows(report), title);
  std::cout << "artifacts in " << out.string() << " (config " << hex64(report.config_hash) << ")\n";
  return 0;
}

int cmd_report(const fs::path& in, bool csv) {
  const auto table = in / "table.csv";
  if (!fs::exists(table)) throw ArtifactError("missing artifact: " + table.string());
  const auto rows = read_table_csv(table);
  std::string title = "Hedge cost of secondary traders";
  if (fs::exists(in / "report.json")) {
    const json r = read_json_file(in / "report.json");
    title += ", " + r.value("utility", std::string()) + " [" + r.value("experiment", std::string()) + "]";
  }
  std::cout << render_table(rows, title);
  if (csv) {
    std::cout << "\ncost_level,method,hedge_cost\n" << std::setprecision(17);
    for (const auto& r : rows) std::cout << cost_label(r.cost_level) << ',' << r.method << ',' << r.hedge_cost << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested deep hedging: primary pricing traders and secondary hedgers"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--scale", g.scale, "Scale preset for path/epoch counts")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g.quiet, "No progress log on stderr");

  std::string config;
  std::string out;
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile); };

  auto* simulate = app.add_subcommand("simulate", "Write the simulated path sets as CSV");
  add_config(simulate);
  simulate->add_option("--out", out, "Output directory")->required();

  auto* train_primary = app.add_subcommand("train-primary", "Train and save the primary traders");
  add_config(train_primary);
  train_primary->add_option("--out", out, "Output directory")->required();

  auto* price = app.add_subcommand("price", "Print one option price from a saved primary trader");
  std::string trader_file;
  double spot = 1.0, variance = 0.04;
  int steps = 0;
  bool bs = false;
  std::optional<Eigen::Index> branches;
  price->add_option("--trader", trader_file, "Primary trader JSON")->required();
  price->add_option("--spot", spot, "Spot")->required();
  price->add_option("--variance", variance, "Instantaneous variance")->required();
  price->add_option("--steps", steps, "Steps to maturity")->required();
  price->add_option("--branches", branches, "Branch count (default: the trader's training config)")
      ->check(CLI::PositiveNumber);
  price->add_flag("--bs", bs, "Black-Scholes price at sqrt(variance) instead");

  auto* train_secondary = app.add_subcommand("train-secondary", "Train secondary traders against saved primaries");
  add_config(train_secondary);
  std::string primaries;
  std::string utility = "erm";
  std::vector<std::string> methods;
  train_secondary->add_option("--primaries", primaries, "Directory from train-primary")->required();
  train_secondary->add_option("--out", out, "Output directory")->required();
  train_secondary->add_option("--utility", utility, "erm or cvar")->check(CLI::IsMember({"erm", "cvar"}));
  train_secondary->add_option("--method", methods, "Subset of black-scholes, stock-only, proposed")
      ->check(CLI::IsMember({"black-scholes", "stock-only", "proposed"}));

  auto* exp1 = app.add_subcommand("exp1", "Arbitrage test over the cost grid");
  add_config(exp1);
  exp1->add_option("--out", out, "Output directory")->required();
  auto* exp2 = app.add_subcommand("exp2", "Hedging performance over the cost grid");
  add_config(exp2);
  exp2->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Render an experiment table");
  std::string in;
  bool csv = false;
  report->add_option("--in", in, "Experiment output directory")->required();
  report->add_flag("--csv", csv, "Also print the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(g, config, out);
    if (*train_primary) return cmd_train_primary(g, config, out);
    if (*price) return cmd_price(g, trader_file, spot, variance, steps, bs, branches);
    if (*train_secondary) return cmd_train_secondary(g, config, primaries, out, utility, methods);
    if (*exp1) return cmd_experiment(g, config, out, 1);
    if (*exp2) return cmd_experiment(g, config, out, 2);
    if (*report) return cmd_report(in, csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
