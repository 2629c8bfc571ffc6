#pragma once

// Deep-hedging primary traders: one policy per hedge option, trained
// jointly over every start step with zero positions before the start, in
// descending start order, on unbranched paths. Frozen traders then price
// their option at any (spot, variance, remaining steps) by branched Monte
// Carlo under the policy.

#include "nhedge/adam.hpp"
#include "nhedge/instruments.hpp"
#include "nhedge/market_sim.hpp"
#include "nhedge/policy.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhedge {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PrimaryTrader {
  int id = 0;
  Instrument instrument;
  PolicyNetwork net;
  double underlier_cost = 0.0;
  bool frozen = false;
  // Free-form provenance: market, grid and seeds the trader was trained with.
  nlohmann::json metadata = nlohmann::json::object();

  static PrimaryTrader create(int id, const Instrument& instrument, double underlier_cost,
                              InitOptions init, bool single_token = false);

  nlohmann::json to_json() const;
  static PrimaryTrader from_json(const nlohmann::json& j);
};

struct TrainingSchedule {
  int epochs = 100;
  // Paths per (epoch, start step) update; 0 uses the whole set. Start step
  // j of epoch e uses block (e + n - 1 - j) mod (paths / minibatch).
  Eigen::Index minibatch = 0;
  ad::AdamConfig adam;
};

// Mean over paths of the hedge cost from start step j, i.e. -CF without the
// price placeholder: payoff - trading gains + costs.
Tensor hedge_cost_loss(const PrimaryTrader& trader, const PathSet& paths, int start_step);

struct UpdateRecord {
  int epoch;
  int start_step;
  double loss;
};

using UpdateObserver = std::function<void(const UpdateRecord&)>;
// Supplies the training paths for an epoch (fixed set or resampled).
using PathSource = std::function<const PathSet&(int epoch)>;

void train_primary(PrimaryTrader& trader, const PathSource& source, const TrainingSchedule& schedule,
                   const UpdateObserver& observer = {});
void train_primary(PrimaryTrader& trader, const PathSet& paths, const TrainingSchedule& schedule,
                   const UpdateObserver& observer = {});

// Price that makes the expected cash flow zero: mean hedge cost over
// n_branches continuations of (spot, variance) under the frozen policy.
// The policy's trading gains (zero mean under the martingale spot) are
// replaced by Black-Scholes delta gains as a control variate, so the
// estimator is the mean of payoff + costs - delta gains.
double price_deep(const PrimaryTrader& trader, const HestonParams& market, const TimeGrid& grid,
                  double spot, double variance, int remaining_steps, Eigen::Index n_branches,
                  std::uint64_t seed);

// Many states sharing remaining_steps, priced with the same branch seed.
std::vector<double> price_deep_batch(const PrimaryTrader& trader, const HestonParams& market,
                                     const TimeGrid& grid, std::span<const double> spots,
                                     std::span<const double> variances, int remaining_steps,
                                     Eigen::Index n_branches, std::uint64_t seed);

double price_black_scholes(const Instrument& instrument, const TimeGrid& grid, double spot,
                           double variance, int remaining_steps);

// Per-(path, step) prices of the hedge options along a PathSet. Column n is
// the payoff.
class PriceProvider {
 public:
  virtual ~PriceProvider() = default;
  virtual const std::vector<Instrument>& instruments() const = 0;
  // One [n_paths, n_columns] matrix per instrument.
  virtual std::vector<Matrix> price_table(const PathSet& paths) const = 0;
  virtual std::string name() const = 0;
};

class BlackScholesPricing : public PriceProvider {
 public:
  explicit BlackScholesPricing(std::vector<Instrument> instruments);
  const std::vector<Instrument>& instruments() const override { return instruments_; }
  std::vector<Matrix> price_table(const PathSet& paths) const override;
  std::string name() const override { return "black-scholes"; }

 private:
  std::vector<Instrument> instruments_;
};

class DeepPricing : public PriceProvider {
 public:
  // Traders must be frozen. All queries of trader i share the branch seed
  // derive_seed(seed, "pricing", id).
  DeepPricing(std::vector<std::shared_ptr<const PrimaryTrader>> traders, HestonParams market,
              Eigen::Index n_branches, std::uint64_t seed, int threads = 1);
  const std::vector<Instrument>& instruments() const override { return instruments_; }
  std::vector<Matrix> price_table(const PathSet& paths) const override;
  std::string name() const override { return "deep"; }

 private:
  std::vector<std::shared_ptr<const PrimaryTrader>> traders_;
  std::vector<Instrument> instruments_;
  HestonParams market_;
  Eigen::Index n_branches_;
  std::uint64_t seed_;
  int threads_;
};

}  // namespace nhedge
