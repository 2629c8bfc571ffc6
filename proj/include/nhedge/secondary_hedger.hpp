#pragma once

// The secondary trader: short one target option, hedging with the stock and
// the hedge options at prices served by a PriceProvider. Also the hedge-cost
// risk measures and portfolio greek reporting.

#include "nhedge/adam.hpp"
#include "nhedge/instruments.hpp"
#include "nhedge/market_sim.hpp"
#include "nhedge/policy.hpp"
#include "nhedge/primary_pricer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nhedge {

enum class UtilityKind { Erm, Cvar };

struct UtilitySpec {
  UtilityKind kind = UtilityKind::Erm;
  double lambda = 1.0;
  double alpha = 0.1;

  static UtilitySpec erm(double lambda) { return {UtilityKind::Erm, lambda, 0.1}; }
  static UtilitySpec cvar(double alpha) { return {UtilityKind::Cvar, 1.0, alpha}; }
  void validate() const;
  std::string label() const;  // "ERM(1)", "CVaR(0.1)"
};

// (1/lambda) log mean exp(-lambda PL), shifted by the max for stability.
Tensor erm_cost(const Tensor& pl, double lambda);
double erm_cost(std::span<const double> pl, double lambda);
// Minus the mean of the ceil(alpha N) smallest PL values; ties to lower index.
Tensor cvar_cost(const Tensor& pl, double alpha);
double cvar_cost(std::span<const double> pl, double alpha);

Tensor hedge_cost(const Tensor& pl, const UtilitySpec& utility);
double hedge_cost(std::span<const double> pl, const UtilitySpec& utility);

struct SecondaryTrader {
  Instrument target;
  // cost_coeffs[0] is the stock, then one per layout hedge option.
  std::vector<double> cost_coeffs;
  PolicyNetwork net;

  // An empty hedge set gives the stock-only trader.
  static SecondaryTrader create(const Instrument& target, std::vector<Instrument> hedge_options,
                                double stock_cost, double option_cost, InitOptions init,
                                bool single_token = false);
  const std::vector<Instrument>& hedge_options() const { return net.layout().hedge_options; }

  nlohmann::json to_json() const;
  static SecondaryTrader from_json(const nlohmann::json& j);
};

struct SecondarySchedule {
  int epochs = 100;
  // Paths per update. 0 means one full-batch update per epoch; otherwise
  // each epoch is a shuffled pass over the training set.
  Eigen::Index minibatch = 0;
  std::uint64_t shuffle_seed = 0;
  ad::AdamConfig adam;
};

// PL tensor [B, 1] of the trader over `paths` with hedge option prices
// `hedge_prices` (one [B, n_columns] table per hedge option, payoff last).
Tensor secondary_pl(const SecondaryTrader& trader, const PathSet& paths,
                    std::span<const Matrix> hedge_prices);

struct SecondaryTrainResult {
  std::vector<double> epoch_costs;  // mean of the per-update costs in each epoch
  double final_cost = 0.0;          // full training set after the last update
};

using EpochObserver = std::function<void(int epoch, double cost)>;

SecondaryTrainResult train_secondary(SecondaryTrader& trader, const PathSet& paths,
                                     std::span<const Matrix> hedge_prices, const UtilitySpec& utility,
                                     const SecondarySchedule& schedule,
                                     const EpochObserver& observer = {});

struct SecondaryEvaluation {
  double hedge_cost = 0.0;
  Eigen::VectorXd pl;
  std::vector<Matrix> positions;  // per step k = 0..n-1: [B, n_outputs]
};

SecondaryEvaluation evaluate_secondary(const SecondaryTrader& trader, const PathSet& paths,
                                       std::span<const Matrix> hedge_prices,
                                       const UtilitySpec& utility);

// Prices for the trader's hedge options from `provider` (empty for stock-only).
std::vector<Matrix> hedge_price_tables(const SecondaryTrader& trader, const PriceProvider* provider,
                                       const PathSet& paths);

// Net greeks per path at step k of the short target plus holdings
// `positions` ([B, 1 + O], stock first), Black-Scholes at sqrt(V_k).
std::vector<Greeks> portfolio_greeks(const Instrument& target, std::span<const Instrument> hedge_options,
                                     const Matrix& positions, const PathSet& paths, int step);

struct GreekBand {
  int step = 0;
  std::string greek;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Mean and normal 95% interval of the mean of each greek over the paths, for
// every step 0..n-1.
std::vector<GreekBand> greek_bands(const SecondaryTrader& trader, const PathSet& paths,
                                   const SecondaryEvaluation& evaluation);

void write_pl_csv(const std::filesystem::path& file, const Eigen::VectorXd& pl);
void write_greeks_csv(const std::filesystem::path& file, std::span<const GreekBand> bands);

}  // namespace nhedge
