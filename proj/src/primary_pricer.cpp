#include "nhedge/primary_pricer.hpp"

#include "nhedge/cash_flow.hpp"
#include "nhedge/parallel.hpp"
#include "nhedge/rng.hpp"

#include <cmath>
#include <sstream>

namespace nhedge {

namespace {

// Keeps branch batches to a few thousand rows per forward pass.
constexpr Eigen::Index kPricingRowsPerChunk = 2048;

Matrix terminal_payoff(const Instrument& instr, const PathSet& paths) {
  const int c = paths.column(paths.grid.n_steps);
  Matrix out(paths.n_paths(), 1);
  for (Eigen::Index b = 0; b < paths.n_paths(); ++b) out(b, 0) = payoff(instr, paths.spot(b, c));
  return out;
}

std::string diagnostics(const PrimaryTrader& t, int epoch, int j) {
  std::ostringstream os;
  os << "primary trader " << t.id << ": non-finite loss at epoch " << epoch << ", start step " << j
     << "; parameter norms:";
  for (const auto& [name, p] : t.net.named_parameters()) os << ' ' << name << '=' << p.value().norm();
  return os.str();
}

// Mean hedge cost per query for queries stacked as consecutive blocks of
// n_branches rows.
std::vector<double> mean_hedge_cost(const PrimaryTrader& trader, const PathSet& stacked,
                                    int start_step, Eigen::Index n_branches) {
  ad::NoGradGuard guard;
  EpisodeMarket market{&stacked, {}};
  const auto positions = unroll_positions(trader.net, market, start_step);
  std::vector<Matrix> pos;
  pos.reserve(positions.size());
  for (const auto& p : positions) pos.push_back(p.value());
  const int c0 = stacked.column(start_step);
  const std::vector<Matrix> prices{stacked.spot.middleCols(c0, stacked.n_columns() - c0)};
  const std::vector<double> costs{trader.underlier_cost};
  const Matrix liability = terminal_payoff(trader.instrument, stacked);
  const PlBreakdown pl = pl_breakdown(pos, prices, liability, costs);
  // The policy's own gains have zero mean under the martingale spot, so they
  // are swapped for Black-Scholes delta gains, which cancel most of the
  // payoff noise. The policy still enters through its costs.
  const Eigen::Index rows = stacked.n_paths();
  const double strike = trader.instrument.strike_or_throw();
  Eigen::VectorXd control = Eigen::VectorXd::Zero(rows);
  for (int k = start_step; k < stacked.grid.n_steps; ++k) {
    const int c = stacked.column(k);
    const double tau = stacked.grid.time_to_maturity(k);
    for (Eigen::Index b = 0; b < rows; ++b) {
      const double delta =
          bs_greeks(trader.instrument.kind, stacked.spot(b, c), strike, std::sqrt(stacked.variance(b, c)), tau).delta;
      control(b) += delta * (stacked.spot(b, c + 1) - stacked.spot(b, c));
    }
  }
  const Eigen::Index queries = rows / n_branches;
  std::vector<double> out(static_cast<std::size_t>(queries));
  for (Eigen::Index q = 0; q < queries; ++q)
    out[static_cast<std::size_t>(q)] = (liability.col(0).segment(q * n_branches, n_branches) +
                                        pl.costs.segment(q * n_branches, n_branches) -
                                        control.segment(q * n_branches, n_branches))
                                           .mean();
  return out;
}

}  // namespace

PrimaryTrader PrimaryTrader::create(int id, const Instrument& instrument, double underlier_cost,
                                    InitOptions init, bool single_token) {
  instrument.validate();
  if (!instrument.is_option()) throw std::invalid_argument("primary traders price options only");
  TraderLayout layout;
  layout.reference_options = {instrument};
  layout.single_token = single_token;
  PrimaryTrader t;
  t.id = id;
  t.instrument = instrument;
  t.net = PolicyNetwork(std::move(layout), init);
  t.underlier_cost = underlier_cost;
  return t;
}

nlohmann::json PrimaryTrader::to_json() const {
  return {{"format", "nhedge-primary"}, {"version", 1},
          {"id", id},
          {"instrument", instrument_to_json(instrument)},
          {"underlier_cost", underlier_cost},
          {"frozen", frozen},
          {"metadata", metadata},
          {"policy", net.to_json()}};
}

PrimaryTrader PrimaryTrader::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nhedge-primary")
    throw std::invalid_argument("trader file: unexpected format tag");
  PrimaryTrader t;
  t.id = j.at("id").get<int>();
  t.instrument = instrument_from_json(j.at("instrument"));
  t.underlier_cost = j.at("underlier_cost").get<double>();
  t.frozen = j.at("frozen").get<bool>();
  t.net = PolicyNetwork::from_json(j.at("policy"));
  t.metadata = j.value("metadata", nlohmann::json::object());
  return t;
}

Tensor hedge_cost_loss(const PrimaryTrader& trader, const PathSet& paths, int start_step) {
  EpisodeMarket market{&paths, {}};
  const auto positions = unroll_positions(trader.net, market, start_step);
  const int c0 = paths.column(start_step);
  const std::vector<Matrix> prices{paths.spot.middleCols(c0, paths.n_columns() - c0)};
  const std::vector<double> costs{trader.underlier_cost};
  const Tensor pl = pl_total(positions, prices, terminal_payoff(trader.instrument, paths), costs);
  return ad::neg(ad::mean(pl));
}

void train_primary(PrimaryTrader& trader, const PathSource& source, const TrainingSchedule& schedule,
                   const UpdateObserver& observer) {
  if (trader.frozen) throw std::logic_error("cannot train a frozen primary trader");
  ad::Adam adam(trader.net.parameters(), schedule.adam);
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const PathSet& all = source(epoch);
    const int n = all.grid.n_steps;
    const Eigen::Index total = all.n_paths();
    const Eigen::Index mb =
        schedule.minibatch > 0 && schedule.minibatch < total ? schedule.minibatch : total;
    const Eigen::Index blocks = total / mb;
    for (int j = n - 1; j >= 0; --j) {
      // Shifted by the epoch so every start step cycles through all blocks,
      // whatever the ratio of blocks to steps.
      const Eigen::Index block = (epoch + (n - 1 - j)) % blocks;
      const PathSet batch = mb == total ? PathSet{} : all.rows(block * mb, mb);
      const PathSet& used = mb == total ? all : batch;
      const Tensor loss = hedge_cost_loss(trader, used, j);
      const double value = loss.item();
      if (!std::isfinite(value)) throw TrainingError(diagnostics(trader, epoch, j));
      adam.zero_grad();
      ad::backward(loss);
      adam.step();
      if (observer) observer({epoch, j, value});
    }
  }
  adam.zero_grad();
  trader.frozen = true;
}

void train_primary(PrimaryTrader& trader, const PathSet& paths, const TrainingSchedule& schedule,
                   const UpdateObserver& observer) {
  train_primary(trader, [&paths](int) -> const PathSet& { return paths; }, schedule, observer);
}

std::vector<double> price_deep_batch(const PrimaryTrader& trader, const HestonParams& market,
                                     const TimeGrid& grid, std::span<const double> spots,
                                     std::span<const double> variances, int remaining_steps,
                                     Eigen::Index n_branches, std::uint64_t seed) {
  if (!trader.frozen) throw std::logic_error("pricing queries require a frozen trader");
  if (spots.size() != variances.size())
    throw std::invalid_argument("price_deep_batch: spots and variances differ in length");
  if (remaining_steps < 0 || remaining_steps > grid.n_steps)
    throw std::invalid_argument("price_deep: remaining_steps out of range");
  std::vector<double> out(spots.size());
  if (remaining_steps == 0) {
    for (std::size_t i = 0; i < spots.size(); ++i) out[i] = payoff(trader.instrument, spots[i]);
    return out;
  }
  if (n_branches < 1) throw std::invalid_argument("price_deep: need at least one branch");
  const int start = grid.n_steps - remaining_steps;
  const std::size_t per_chunk =
      static_cast<std::size_t>(std::max<Eigen::Index>(1, kPricingRowsPerChunk / n_branches));
  for (std::size_t first = 0; first < spots.size(); first += per_chunk) {
    const std::size_t count = std::min(per_chunk, spots.size() - first);
    PathSet stacked;
    stacked.grid = grid;
    stacked.first_step = start;
    stacked.seed = seed;
    stacked.spot.resize(static_cast<Eigen::Index>(count) * n_branches, remaining_steps + 1);
    stacked.variance.resize(stacked.spot.rows(), remaining_steps + 1);
    for (std::size_t q = 0; q < count; ++q) {
      const PathSet b = branch_from_state(market, grid, spots[first + q], variances[first + q],
                                          remaining_steps, n_branches, seed);
      stacked.spot.middleRows(static_cast<Eigen::Index>(q) * n_branches, n_branches) = b.spot;
      stacked.variance.middleRows(static_cast<Eigen::Index>(q) * n_branches, n_branches) = b.variance;
    }
    const auto prices = mean_hedge_cost(trader, stacked, start, n_branches);
    std::copy(prices.begin(), prices.end(), out.begin() + static_cast<std::ptrdiff_t>(first));
  }
  return out;
}

double price_deep(const PrimaryTrader& trader, const HestonParams& market, const TimeGrid& grid,
                  double spot, double variance, int remaining_steps, Eigen::Index n_branches,
                  std::uint64_t seed) {
  const double s[] = {spot};
  const double v[] = {variance};
  return price_deep_batch(trader, market, grid, s, v, remaining_steps, n_branches, seed).front();
}

double price_black_scholes(const Instrument& instrument, const TimeGrid& grid, double spot,
                           double variance, int remaining_steps) {
  if (!(variance >= 0.0)) throw std::invalid_argument("price_black_scholes: variance must be >= 0");
  if (remaining_steps < 0) throw std::invalid_argument("price_black_scholes: negative remaining steps");
  return bs_price(instrument.kind, spot, instrument.strike_or_throw(), std::sqrt(variance),
                  remaining_steps * grid.dt);
}

BlackScholesPricing::BlackScholesPricing(std::vector<Instrument> instruments)
    : instruments_(std::move(instruments)) {
  for (const auto& i : instruments_) i.validate();
}

std::vector<Matrix> BlackScholesPricing::price_table(const PathSet& paths) const {
  std::vector<Matrix> out;
  const int n = paths.grid.n_steps;
  for (const auto& instr : instruments_) {
    Matrix table(paths.n_paths(), paths.n_columns());
    for (Eigen::Index b = 0; b < paths.n_paths(); ++b) {
      for (int c = 0; c < paths.n_columns(); ++c) {
        const int remaining = n - (paths.first_step + c);
        table(b, c) = price_black_scholes(instr, paths.grid, paths.spot(b, c), paths.variance(b, c),
                                          remaining);
      }
    }
    out.push_back(std::move(table));
  }
  return out;
}

DeepPricing::DeepPricing(std::vector<std::shared_ptr<const PrimaryTrader>> traders,
                         HestonParams market, Eigen::Index n_branches, std::uint64_t seed,
                         int threads)
    : traders_(std::move(traders)),
      market_(market),
      n_branches_(n_branches),
      seed_(seed),
      threads_(threads) {
  for (const auto& t : traders_) {
    if (!t->frozen) throw std::logic_error("deep pricing requires frozen primary traders");
    instruments_.push_back(t->instrument);
  }
}

std::vector<Matrix> DeepPricing::price_table(const PathSet& paths) const {
  const int n = paths.grid.n_steps;
  const Eigen::Index n_paths = paths.n_paths();
  std::vector<Matrix> out;
  for (const auto& trader : traders_) {
    Matrix table(n_paths, paths.n_columns());
    const std::uint64_t seed = derive_seed(seed_, "pricing", static_cast<std::uint64_t>(trader->id));
    // Work items: (column, block of paths), each writing a disjoint slice.
    const Eigen::Index block = std::max<Eigen::Index>(1, kPricingRowsPerChunk / n_branches_);
    const Eigen::Index blocks_per_col = (n_paths + block - 1) / block;
    const auto items = static_cast<std::size_t>(paths.n_columns() * blocks_per_col);
    parallel_for(items, threads_, [&](std::size_t item) {
      const int c = static_cast<int>(static_cast<Eigen::Index>(item) / blocks_per_col);
      const Eigen::Index b0 = (static_cast<Eigen::Index>(item) % blocks_per_col) * block;
      const Eigen::Index count = std::min(block, n_paths - b0);
      const int remaining = n - (paths.first_step + c);
      std::vector<double> s(static_cast<std::size_t>(count));
      std::vector<double> v(static_cast<std::size_t>(count));
      for (Eigen::Index i = 0; i < count; ++i) {
        s[static_cast<std::size_t>(i)] = paths.spot(b0 + i, c);
        v[static_cast<std::size_t>(i)] = paths.variance(b0 + i, c);
      }
      const auto prices = price_deep_batch(*trader, market_, paths.grid, s, v, remaining,
                                           n_branches_, seed);
      for (Eigen::Index i = 0; i < count; ++i) table(b0 + i, c) = prices[static_cast<std::size_t>(i)];
    });
    out.push_back(std::move(table));
  }
  return out;
}

}  // namespace nhedge
