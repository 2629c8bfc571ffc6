#pragma once

// Experiment configuration and orchestration: the arbitrage test (ERM) and
// the hedging-performance comparison (CVaR) over a grid of proportional
// cost levels, with CSV/JSON artifacts.

#include "nhedge/market_sim.hpp"
#include "nhedge/primary_pricer.hpp"
#include "nhedge/secondary_hedger.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhedge {

// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PathCounts {
  Eigen::Index primary_train = 5000;
  Eigen::Index pricing_branches = 256;
  Eigen::Index secondary_train = 1000;
  Eigen::Index secondary_test = 1000;
};

struct EpochCounts {
  int primary = 100;
  int secondary = 100;
};

struct ExperimentConfig {
  std::string scale = "desk";
  std::uint64_t seed = 20240601;
  int threads = 1;
  HestonParams heston;
  TimeGrid grid;
  double target_strike = 1.00;
  double call_strike = 1.02;
  double put_strike = 0.98;
  // Each level is applied to the stock and to the hedge options alike.
  std::vector<double> cost_levels{0.0001, 0.0005, 0.001, 0.005, 0.01};
  PathCounts paths;
  EpochCounts epochs;
  double learning_rate = 1e-3;
  Eigen::Index primary_minibatch = 0;
  Eigen::Index secondary_minibatch = 0;
  bool resample_primary_paths = false;
  UtilitySpec exp1_utility = UtilitySpec::erm(1.0);
  UtilitySpec exp2_utility = UtilitySpec::cvar(0.1);
  bool single_token = false;

  // "paper" or "desk"; throws ConfigError otherwise.
  static ExperimentConfig preset(const std::string& scale);
  void validate() const;

  Instrument target() const;
  std::vector<Instrument> hedge_options() const;  // call, then put
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Overlays the fields present in `j` on top of `base`. Unknown or mistyped
// fields raise ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& j, const ExperimentConfig& base);
// Parses a JSON file (// comments allowed). The base preset is taken from
// the file's "scale" field, or `scale_override` when given.
ExperimentConfig load_config(const std::filesystem::path& file, const std::string& scale_override = "");
// Stable hash of every result-relevant field (threads excluded).
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hex64(std::uint64_t v);

// Sub-seeds, all derived from the master seed by role tag.
struct SeedPlan {
  std::uint64_t master;
  std::uint64_t primary_paths(int instrument, int epoch_block = 0) const;
  std::uint64_t primary_init(int instrument) const;
  std::uint64_t pricing() const;
  std::uint64_t secondary_train() const;
  std::uint64_t secondary_test() const;
  std::uint64_t secondary_init(int n_hedge_options) const;
  std::uint64_t secondary_shuffle() const;
  nlohmann::json to_json() const;
};

struct MethodResult {
  std::string method;  // "black-scholes", "stock-only", "proposed"
  double hedge_cost = 0.0;
  double train_cost = 0.0;
  std::vector<double> epoch_costs;
  SecondaryEvaluation evaluation;
  std::vector<GreekBand> greeks;
  SecondaryTrader trader;
};

struct CostLevelResult {
  double cost = 0.0;
  std::vector<MethodResult> methods;
  const MethodResult& method(const std::string& name) const;
};

struct ExperimentReport {
  std::string experiment;  // "exp1" or "exp2"
  std::string utility;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::vector<CostLevelResult> rows;
  std::vector<std::string> artifacts;  // file names relative to the output dir
};

using Logger = std::function<void(const std::string&)>;

// Holds the path sets, primary traders and deep price tables of one config
// so that both experiments can share them. Everything is a pure function of
// the config.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig cfg, Logger log = {});

  const ExperimentConfig& config() const { return cfg_; }
  const SeedPlan& seeds() const { return seeds_; }
  const PathSet& secondary_train_paths();
  const PathSet& secondary_test_paths();

  // Trained, frozen primary traders (call, put) for a cost level.
  const std::vector<std::shared_ptr<const PrimaryTrader>>& primaries(double cost);
  // Installs previously trained primaries (call, put) instead of training.
  void set_primaries(double cost, std::vector<std::shared_ptr<const PrimaryTrader>> traders);
  // Deep price tables for the secondary train or test paths.
  const std::vector<Matrix>& deep_prices(double cost, bool test);
  std::vector<Matrix> bs_prices(bool test);

  // Trains and evaluates one secondary trader. method is one of
  // "black-scholes", "stock-only", "proposed".
  MethodResult run_method(const std::string& method, double cost, const UtilitySpec& utility,
                          bool with_greeks);

  ExperimentReport run_experiment1();
  ExperimentReport run_experiment2();

 private:
  PathSet primary_paths(int instrument, int epoch) const;

  ExperimentConfig cfg_;
  SeedPlan seeds_;
  Logger log_;
  std::unique_ptr<PathSet> train_paths_;
  std::unique_ptr<PathSet> test_paths_;
  std::map<double, std::vector<std::shared_ptr<const PrimaryTrader>>> primaries_;
  std::map<std::pair<double, bool>, std::vector<Matrix>> deep_prices_;
};

// Convenience wrappers that build a fresh runner.
ExperimentReport run_experiment1(const ExperimentConfig& cfg, const Logger& log = {});
ExperimentReport run_experiment2(const ExperimentConfig& cfg, const Logger& log = {});

std::string cost_label(double cost);  // "0.0001"

// Writes table.csv, per-method PL (and greeks for exp2) CSVs and report.json
// into dir; fills report.artifacts.
void write_report(ExperimentReport& report, const ExperimentConfig& cfg, const SeedPlan& seeds,
                  const std::filesystem::path& dir);

struct TableRow {
  double cost_level;
  std::string method;
  double hedge_cost;
};

void write_table_csv(const std::filesystem::path& file, const std::vector<TableRow>& rows);
std::vector<TableRow> read_table_csv(const std::filesystem::path& file);
// Cost levels as rows, methods as columns, in first-seen method order.
std::string render_table(const std::vector<TableRow>& rows, const std::string& title);

std::vector<TableRow> table_rows(const ExperimentReport& report);

}  // namespace nhedge
