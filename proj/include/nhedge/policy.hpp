#pragma once

// The attention-MLP hedging policy shared by primary and secondary traders.
//
// Inputs are tokenized per instrument. Every token has kTokenWidth features:
//
//   [is_underlier, is_hedge, is_reference, is_global, payoff_sign, x1, x2, x3]
//
//   underlier:  x1 = 0,               x2 = spot,          x3 = previous position
//   hedge opt:  x1 = log(spot/strike), x2 = option price,  x3 = previous position
//   reference:  x1 = log(spot/strike), x2 = 0,             x3 = 0
//   global:     x1 = time to maturity, x2 = sqrt(variance), x3 = 0
//
// Token order: underlier, hedge options, reference options, global.
// payoff_sign is +1 for calls, -1 for puts, 0 otherwise. In single-token
// mode the tokens are concatenated into one row.

#include "nhedge/autodiff.hpp"
#include "nhedge/instruments.hpp"
#include "nhedge/market_sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nhedge {

using ad::Tensor;

inline constexpr int kTokenWidth = 8;

struct TraderLayout {
  std::vector<Instrument> hedge_options;      // tradable, one output each after the stock
  std::vector<Instrument> reference_options;  // observed through moneyness only
  bool single_token = false;
  int embed_width = 32;

  int n_outputs() const { return 1 + static_cast<int>(hedge_options.size()); }
  int n_instrument_tokens() const {
    return 2 + static_cast<int>(hedge_options.size() + reference_options.size());
  }
  int n_tokens() const { return single_token ? 1 : n_instrument_tokens(); }
  int token_width() const { return single_token ? kTokenWidth * n_instrument_tokens() : kTokenWidth; }
  // Column of previous position `output` within the flattened feature row.
  int prev_position_column(int output) const { return output * kTokenWidth + 7; }
};

struct MarketState {
  double spot = 1.0;
  double variance = 0.0;
  int step = 0;
  TimeGrid grid;
  std::vector<double> hedge_prices;  // one per layout hedge option
};

struct FeatureVector {
  std::vector<double> log_moneyness;  // hedge options, then reference options
  double time_to_maturity = 0.0;
  std::vector<double> prices;  // underlier, then hedge options
  double volatility = 0.0;
  std::vector<double> prev_positions;  // one per output

  // Flattened feature row [1, n_instrument_tokens * kTokenWidth].
  Matrix row(const TraderLayout& layout) const;
};

// Throws std::invalid_argument on a non-positive spot/strike, a non-finite
// option price or a wrong number of prices/positions.
FeatureVector build_features(const TraderLayout& layout, const MarketState& state,
                             std::span<const double> prev_positions);

struct InitOptions {
  std::uint64_t seed = 0;
  // Output layer starts at zero so a fresh policy never trades.
  bool zero_output_layer = true;
};

class PolicyNetwork {
 public:
  struct Linear {
    Tensor weight;
    Tensor bias;
  };
  struct Norm {
    Tensor gain;
    Tensor shift;
  };
  struct AttentionLayer {
    Linear query, key, value, output;
    Norm norm;
  };

  PolicyNetwork() = default;
  PolicyNetwork(TraderLayout layout, InitOptions init);

  // rows: flattened feature rows [B, n_instrument_tokens * kTokenWidth].
  // Returns positions [B, n_outputs].
  Tensor forward(const Tensor& rows) const;
  // Same computation on plain matrices, without recording; used for pricing
  // and evaluation under NoGradGuard.
  Matrix infer(const Matrix& rows) const;

  const TraderLayout& layout() const { return layout_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;

  // Deep copy with fresh parameter storage.
  PolicyNetwork clone() const;
  void set_all_parameters(double value);
  std::uint64_t parameter_hash() const;
  double parameter_norm() const;

  nlohmann::json to_json() const;
  static PolicyNetwork from_json(const nlohmann::json& j);

 private:
  TraderLayout layout_;
  Linear embed_;
  Norm embed_norm_;
  AttentionLayer attn_[2];
  Linear head_;
};

nlohmann::json layout_to_json(const TraderLayout& layout);
TraderLayout layout_from_json(const nlohmann::json& j);
nlohmann::json instrument_to_json(const Instrument& instr);
Instrument instrument_from_json(const nlohmann::json& j);

std::vector<double> policy_step(const PolicyNetwork& net, const FeatureVector& features);

// Market data for a batch of episodes. Column c of every matrix is the
// absolute step paths->first_step + c.
struct EpisodeMarket {
  const PathSet* paths = nullptr;
  std::vector<Matrix> hedge_prices;  // one [B, cols] matrix per layout hedge option
};

// Constant part of the flattened feature rows at absolute step k (previous
// positions left at zero).
Matrix feature_rows(const TraderLayout& layout, const EpisodeMarket& market, int step);

// Positions [B, n_outputs] for absolute steps start_step .. n-1, produced
// recurrently; earlier positions are zero and not represented.
std::vector<Tensor> unroll_positions(const PolicyNetwork& net, const EpisodeMarket& market,
                                     int start_step);

// Per-path record of one hedging episode over the whole grid.
struct HedgeLedger {
  int start_step = 0;
  std::vector<Matrix> positions;       // per tradable asset [B, n]; zero before start_step
  std::vector<Matrix> trade_notional;  // per asset [B, n]: (delta_k - delta_{k-1}) * price_k
  std::vector<Matrix> costs;           // per asset [B, n]: c * |delta_k - delta_{k-1}| * price_k
  Eigen::VectorXd payoff;              // liability settled at maturity
  Eigen::VectorXd pl;                  // -payoff + trading gains - costs

  double total_cost(Eigen::Index path) const;
};

// Runs the policy from start_step on every path while short one unit of
// `liability`, trading the stock (cost c0) and the layout's hedge options.
HedgeLedger unroll_policy(const PolicyNetwork& net, const EpisodeMarket& market, int start_step,
                          const Instrument& liability, double underlier_cost);

}  // namespace nhedge
