#include "nhedge/secondary_hedger.hpp"

#include "nhedge/cash_flow.hpp"
#include "nhedge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace nhedge {

namespace {

Eigen::Index tail_count(double alpha, Eigen::Index n) {
  // The small slack keeps alpha*n that should be integral from rounding up.
  const auto k = static_cast<Eigen::Index>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
  return std::clamp<Eigen::Index>(k, 1, n);
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("CVaR alpha must lie in (0, 1]");
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("ERM lambda must be > 0");
}

Matrix select(const Matrix& m, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

PathSet select(const PathSet& p, std::span<const Eigen::Index> rows) {
  PathSet out;
  out.spot = select(p.spot, rows);
  out.variance = select(p.variance, rows);
  out.grid = p.grid;
  out.first_step = p.first_step;
  out.seed = p.seed;
  return out;
}

void check_tables(const SecondaryTrader& trader, const PathSet& paths,
                  std::span<const Matrix> hedge_prices) {
  if (paths.first_step != 0 || paths.last_step() != paths.grid.n_steps)
    throw std::invalid_argument("secondary trader needs paths covering steps 0..n");
  if (hedge_prices.size() != trader.hedge_options().size())
    throw std::invalid_argument("secondary trader: one price table per hedge option required");
  for (const auto& t : hedge_prices) {
    if (t.rows() != paths.n_paths() || t.cols() != paths.n_columns())
      throw std::invalid_argument("secondary trader: price table shape does not match paths");
  }
}

std::string diagnostics(const SecondaryTrader& t, int epoch) {
  std::ostringstream os;
  os << "secondary trader: non-finite cost at epoch " << epoch << "; parameter norms:";
  for (const auto& [name, p] : t.net.named_parameters()) os << ' ' << name << '=' << p.value().norm();
  return os.str();
}

}  // namespace

void UtilitySpec::validate() const {
  if (kind == UtilityKind::Erm) check_lambda(lambda);
  else check_alpha(alpha);
}

std::string UtilitySpec::label() const {
  std::ostringstream os;
  if (kind == UtilityKind::Erm) os << "ERM(" << lambda << ')';
  else os << "CVaR(" << alpha << ')';
  return os.str();
}

Tensor erm_cost(const Tensor& pl, double lambda) {
  check_lambda(lambda);
  if (pl.value().size() == 0) throw std::invalid_argument("erm_cost: empty sample set");
  const Tensor x = ad::scale(pl, -lambda);
  const double shift = x.value().maxCoeff();
  const Tensor lme = ad::log(ad::mean(ad::exp(ad::add_scalar(x, -shift))));
  return ad::scale(ad::add_scalar(lme, shift), 1.0 / lambda);
}

double erm_cost(std::span<const double> pl, double lambda) {
  check_lambda(lambda);
  if (pl.empty()) throw std::invalid_argument("erm_cost: empty sample set");
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : pl) shift = std::max(shift, -lambda * v);
  double acc = 0.0;
  for (double v : pl) acc += std::exp(-lambda * v - shift);
  return (shift + std::log(acc / static_cast<double>(pl.size()))) / lambda;
}

Tensor cvar_cost(const Tensor& pl, double alpha) {
  check_alpha(alpha);
  const Eigen::Index n = pl.value().size();
  if (n == 0) throw std::invalid_argument("cvar_cost: empty sample set");
  return ad::neg(ad::k_worst_mean(pl, tail_count(alpha, n)));
}

double cvar_cost(std::span<const double> pl, double alpha) {
  check_alpha(alpha);
  if (pl.empty()) throw std::invalid_argument("cvar_cost: empty sample set");
  const Matrix column = Eigen::Map<const Eigen::VectorXd>(pl.data(), static_cast<Eigen::Index>(pl.size()));
  const auto worst = ad::k_smallest_rows(column, tail_count(alpha, column.rows()));
  double acc = 0.0;
  for (auto i : worst) acc += pl[static_cast<std::size_t>(i)];
  return -acc / static_cast<double>(worst.size());
}

Tensor hedge_cost(const Tensor& pl, const UtilitySpec& utility) {
  return utility.kind == UtilityKind::Erm ? erm_cost(pl, utility.lambda) : cvar_cost(pl, utility.alpha);
}

double hedge_cost(std::span<const double> pl, const UtilitySpec& utility) {
  return utility.kind == UtilityKind::Erm ? erm_cost(pl, utility.lambda) : cvar_cost(pl, utility.alpha);
}

SecondaryTrader SecondaryTrader::create(const Instrument& target, std::vector<Instrument> hedge_options,
                                        double stock_cost, double option_cost, InitOptions init,
                                        bool single_token) {
  target.validate();
  if (!target.is_option()) throw std::invalid_argument("secondary target must be an option");
  if (stock_cost < 0.0 || option_cost < 0.0) throw std::invalid_argument("cost coefficients must be >= 0");
  TraderLayout layout;
  for (auto& h : hedge_options) {
    h.role = InstrumentRole::HedgeOption;
    h.cost_coeff = option_cost;
  }
  layout.hedge_options = std::move(hedge_options);
  layout.reference_options = {target};
  layout.single_token = single_token;
  SecondaryTrader t;
  t.target = target;
  t.cost_coeffs.assign(1 + layout.hedge_options.size(), option_cost);
  t.cost_coeffs[0] = stock_cost;
  t.net = PolicyNetwork(std::move(layout), init);
  return t;
}

nlohmann::json SecondaryTrader::to_json() const {
  return {{"format", "nhedge-secondary"}, {"version", 1},
          {"target", instrument_to_json(target)},
          {"cost_coeffs", cost_coeffs},
          {"policy", net.to_json()}};
}

SecondaryTrader SecondaryTrader::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nhedge-secondary")
    throw std::invalid_argument("trader file: unexpected format tag");
  SecondaryTrader t;
  t.target = instrument_from_json(j.at("target"));
  t.cost_coeffs = j.at("cost_coeffs").get<std::vector<double>>();
  t.net = PolicyNetwork::from_json(j.at("policy"));
  if (t.cost_coeffs.size() != static_cast<std::size_t>(t.net.layout().n_outputs()))
    throw std::invalid_argument("trader file: cost_coeffs does not match the policy outputs");
  return t;
}

Tensor secondary_pl(const SecondaryTrader& trader, const PathSet& paths,
                    std::span<const Matrix> hedge_prices) {
  check_tables(trader, paths, hedge_prices);
  EpisodeMarket market{&paths, {hedge_prices.begin(), hedge_prices.end()}};
  const auto positions = unroll_positions(trader.net, market, 0);
  std::vector<Matrix> prices{paths.spot};
  prices.insert(prices.end(), hedge_prices.begin(), hedge_prices.end());
  Matrix liability(paths.n_paths(), 1);
  const int last = paths.n_columns() - 1;
  for (Eigen::Index b = 0; b < paths.n_paths(); ++b) liability(b, 0) = payoff(trader.target, paths.spot(b, last));
  return pl_total(positions, prices, liability, trader.cost_coeffs);
}

SecondaryTrainResult train_secondary(SecondaryTrader& trader, const PathSet& paths,
                                     std::span<const Matrix> hedge_prices, const UtilitySpec& utility,
                                     const SecondarySchedule& schedule, const EpochObserver& observer) {
  utility.validate();
  check_tables(trader, paths, hedge_prices);
  ad::Adam adam(trader.net.parameters(), schedule.adam);
  const Eigen::Index total = paths.n_paths();
  const Eigen::Index mb = schedule.minibatch > 0 && schedule.minibatch < total ? schedule.minibatch : total;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  SecondaryTrainResult result;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (mb < total) {
      std::mt19937_64 rng(derive_seed(schedule.shuffle_seed, "secondary-shuffle",
                                      static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
    }
    double acc = 0.0;
    int updates = 0;
    for (Eigen::Index begin = 0; begin < total; begin += mb) {
      const Eigen::Index count = std::min(mb, total - begin);
      const std::span<const Eigen::Index> rows(order.data() + begin, static_cast<std::size_t>(count));
      Tensor cost;
      if (count == total && mb == total) {
        cost = hedge_cost(secondary_pl(trader, paths, hedge_prices), utility);
      } else {
        const PathSet batch = select(paths, rows);
        std::vector<Matrix> tables;
        for (const auto& t : hedge_prices) tables.push_back(select(t, rows));
        cost = hedge_cost(secondary_pl(trader, batch, tables), utility);
      }
      const double value = cost.item();
      if (!std::isfinite(value)) throw TrainingError(diagnostics(trader, epoch));
      adam.zero_grad();
      ad::backward(cost);
      adam.step();
      acc += value;
      ++updates;
    }
    result.epoch_costs.push_back(acc / updates);
    if (observer) observer(epoch, result.epoch_costs.back());
  }
  adam.zero_grad();
  result.final_cost = evaluate_secondary(trader, paths, hedge_prices, utility).hedge_cost;
  return result;
}

SecondaryEvaluation evaluate_secondary(const SecondaryTrader& trader, const PathSet& paths,
                                       std::span<const Matrix> hedge_prices, const UtilitySpec& utility) {
  utility.validate();
  check_tables(trader, paths, hedge_prices);
  ad::NoGradGuard guard;
  EpisodeMarket market{&paths, {hedge_prices.begin(), hedge_prices.end()}};
  const auto positions = unroll_positions(trader.net, market, 0);
  SecondaryEvaluation out;
  std::vector<Matrix> prices{paths.spot};
  prices.insert(prices.end(), hedge_prices.begin(), hedge_prices.end());
  Matrix liability(paths.n_paths(), 1);
  const int last = paths.n_columns() - 1;
  for (Eigen::Index b = 0; b < paths.n_paths(); ++b) liability(b, 0) = payoff(trader.target, paths.spot(b, last));
  for (const auto& p : positions) out.positions.push_back(p.value());
  out.pl = pl_breakdown(out.positions, prices, liability, trader.cost_coeffs).pl;
  out.hedge_cost = hedge_cost(std::span<const double>(out.pl.data(), static_cast<std::size_t>(out.pl.size())),
                              utility);
  return out;
}

std::vector<Matrix> hedge_price_tables(const SecondaryTrader& trader, const PriceProvider* provider,
                                       const PathSet& paths) {
  const auto& wanted = trader.hedge_options();
  if (wanted.empty()) return {};
  if (provider == nullptr) throw std::invalid_argument("hedge options need a price provider");
  const auto& offered = provider->instruments();
  if (offered.size() != wanted.size())
    throw std::invalid_argument("price provider instruments do not match the trader's hedge options");
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    if (offered[i].kind != wanted[i].kind || offered[i].strike != wanted[i].strike)
      throw std::invalid_argument("price provider instruments do not match the trader's hedge options");
  }
  return provider->price_table(paths);
}

std::vector<Greeks> portfolio_greeks(const Instrument& target, std::span<const Instrument> hedge_options,
                                     const Matrix& positions, const PathSet& paths, int step) {
  if (step < 0 || step >= paths.grid.n_steps) throw std::invalid_argument("portfolio_greeks: step out of range");
  if (positions.rows() != paths.n_paths() ||
      positions.cols() != static_cast<Eigen::Index>(1 + hedge_options.size()))
    throw std::invalid_argument("portfolio_greeks: positions shape mismatch");
  const int c = paths.column(step);
  const double tau = paths.grid.time_to_maturity(step);
  std::vector<Greeks> out(static_cast<std::size_t>(paths.n_paths()));
  for (Eigen::Index b = 0; b < paths.n_paths(); ++b) {
    const double s = paths.spot(b, c);
    const double vol = std::sqrt(std::max(paths.variance(b, c), 0.0));
    Greeks g = bs_greeks(target, s, vol, tau) * -1.0;
    g.delta += positions(b, 0);
    for (std::size_t i = 0; i < hedge_options.size(); ++i)
      g += bs_greeks(hedge_options[i], s, vol, tau) * positions(b, static_cast<Eigen::Index>(i + 1));
    out[static_cast<std::size_t>(b)] = g;
  }
  return out;
}

std::vector<GreekBand> greek_bands(const SecondaryTrader& trader, const PathSet& paths,
                                   const SecondaryEvaluation& evaluation) {
  std::vector<GreekBand> out;
  const auto& hedges = trader.hedge_options();
  const double n = static_cast<double>(paths.n_paths());
  for (int k = 0; k < paths.grid.n_steps; ++k) {
    const auto greeks = portfolio_greeks(trader.target, hedges, evaluation.positions[static_cast<std::size_t>(k)],
                                         paths, k);
    const std::pair<const char*, double Greeks::*> fields[] = {
        {"delta", &Greeks::delta}, {"gamma", &Greeks::gamma}, {"theta", &Greeks::theta}, {"vega", &Greeks::vega}};
    for (const auto& [name, field] : fields) {
      double mean = 0.0;
      for (const auto& g : greeks) mean += g.*field;
      mean /= n;
      double ss = 0.0;
      for (const auto& g : greeks) ss += (g.*field - mean) * (g.*field - mean);
      const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
      const double half = 1.96 * sd / std::sqrt(n);
      out.push_back({k, name, mean, mean - half, mean + half});
    }
  }
  return out;
}

void write_pl_csv(const std::filesystem::path& file, const Eigen::VectorXd& pl) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os.precision(17);
  os << "path_id,pl\n";
  for (Eigen::Index i = 0; i < pl.size(); ++i) os << i << ',' << pl(i) << '\n';
}

void write_greeks_csv(const std::filesystem::path& file, std::span<const GreekBand> bands) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os.precision(17);
  os << "step,greek,mean,ci_low,ci_high\n";
  for (const auto& b : bands) os << b.step << ',' << b.greek << ',' << b.mean << ',' << b.ci_low << ',' << b.ci_high << '\n';
}

}  // namespace nhedge
