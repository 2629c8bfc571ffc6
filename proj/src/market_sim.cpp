#include "nhedge/market_sim.hpp"

#include "nhedge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace nhedge {

namespace {

// Random slots per (stream, step).
constexpr std::uint64_t kVarianceSlot = 0;
constexpr std::uint64_t kSpotSlot = 1;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// (1 - e^{-kappa dt}) / kappa, continuous at kappa = 0.
double decay_integral(double kappa, double dt) {
  if (kappa == 0.0) return dt;
  return -std::expm1(-kappa * dt) / kappa;
}

struct FullStep {
  double next;
  QeRegime regime;
  double log_m;  // log E[exp(A V')], NaN when the correction does not exist
};

FullStep qe_full_step(const HestonParams& p, double v, double dt, double z) {
  const QeMoments mo = qe_moments(p, v, dt);
  const double A = p.sigma > 0.0
                       ? 0.5 * dt * (p.kappa * p.rho / p.sigma - 0.5) + p.rho / p.sigma +
                             0.25 * dt * (1.0 - p.rho * p.rho)
                       : 0.0;
  if (p.sigma == 0.0 || mo.mean <= 0.0) {
    return {mo.mean, QeRegime::Deterministic, 0.0};
  }
  if (mo.psi <= kQeCriticalPsi) {
    const double inv = 2.0 / mo.psi;
    const double b2 = inv - 1.0 + std::sqrt(inv) * std::sqrt(inv - 1.0);
    const double a = mo.mean / (1.0 + b2);
    const double b = std::sqrt(b2);
    const double next = a * (b + z) * (b + z);
    const double denom = 1.0 - 2.0 * A * a;
    const double log_m = denom > 0.0 ? A * b2 * a / denom - 0.5 * std::log(denom) : std::nan("");
    return {next, QeRegime::Quadratic, log_m};
  }
  const double prob_zero = (mo.psi - 1.0) / (mo.psi + 1.0);
  const double beta = (1.0 - prob_zero) / mo.mean;
  const double u = normal_cdf(z);
  const double next = u <= prob_zero ? 0.0 : std::log((1.0 - prob_zero) / (1.0 - u)) / beta;
  const double log_m =
      A < beta ? std::log(prob_zero + beta * (1.0 - prob_zero) / (beta - A)) : std::nan("");
  return {next, QeRegime::Exponential, log_m};
}

double spot_step_with(const HestonParams& p, double s, double v, const FullStep& st, double dt,
                      double z) {
  if (st.regime == QeRegime::Deterministic) {
    const double integrated = 0.5 * dt * (v + st.next);
    return s * std::exp(-0.5 * integrated + std::sqrt(integrated) * z);
  }
  constexpr double g1 = 0.5;
  constexpr double g2 = 0.5;
  const double k0 = -p.rho * p.kappa * p.theta * dt / p.sigma;
  const double k1 = g1 * dt * (p.kappa * p.rho / p.sigma - 0.5) - p.rho / p.sigma;
  const double k2 = g2 * dt * (p.kappa * p.rho / p.sigma - 0.5) + p.rho / p.sigma;
  const double k3 = g1 * dt * (1.0 - p.rho * p.rho);
  const double k4 = g2 * dt * (1.0 - p.rho * p.rho);
  const double drift0 = std::isnan(st.log_m) ? k0 : -st.log_m - (k1 + 0.5 * k3) * v;
  const double diffusion = std::sqrt(std::max(k3 * v + k4 * st.next, 0.0));
  return s * std::exp(drift0 + k1 * v + k2 * st.next + diffusion * z);
}

void fill_heston(const HestonParams& params, const TimeGrid& grid, Matrix& spot, Matrix& var,
                 int first_step, std::uint64_t seed) {
  const Eigen::Index cols = spot.cols();
  for (Eigen::Index i = 0; i < spot.rows(); ++i) {
    const auto stream = static_cast<std::uint64_t>(i);
    for (Eigen::Index c = 1; c < cols; ++c) {
      const auto step = static_cast<std::uint64_t>(first_step + c - 1);
      const double v = var(i, c - 1);
      const double zv = counter_normal(seed, stream, step, kVarianceSlot);
      const double zs = counter_normal(seed, stream, step, kSpotSlot);
      const FullStep st = qe_full_step(params, v, grid.dt, zv);
      var(i, c) = st.next;
      spot(i, c) = spot_step_with(params, spot(i, c - 1), v, st, grid.dt, zs);
    }
  }
}

}  // namespace

void HestonParams::validate() const {
  if (!(s0 > 0.0)) throw std::invalid_argument("heston: s0 must be positive");
  if (!(v0 >= 0.0)) throw std::invalid_argument("heston: v0 must be non-negative");
  if (!(theta >= 0.0)) throw std::invalid_argument("heston: theta must be non-negative");
  if (!(kappa >= 0.0)) throw std::invalid_argument("heston: kappa must be non-negative");
  if (!(sigma >= 0.0)) throw std::invalid_argument("heston: sigma must be non-negative");
  if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("heston: |rho| must be <= 1");
}

PathSet PathSet::rows(Eigen::Index begin, Eigen::Index count) const {
  PathSet out;
  out.spot = spot.middleRows(begin, count);
  out.variance = variance.middleRows(begin, count);
  out.grid = grid;
  out.first_step = first_step;
  out.seed = seed;
  return out;
}

QeMoments qe_moments(const HestonParams& p, double v, double dt) {
  const double decay = std::exp(-p.kappa * dt);
  const double integral = decay_integral(p.kappa, dt);  // (1-e)/kappa
  const double one_minus = 1.0 - decay;
  const double mean = p.theta + (v - p.theta) * decay;
  const double s2 = v * p.sigma * p.sigma * decay * integral +
                    p.theta * p.sigma * p.sigma * one_minus * integral * 0.5;
  const double psi = mean > 0.0 ? s2 / (mean * mean) : 0.0;
  return {mean, s2, psi};
}

QeStep qe_variance_step(const HestonParams& p, double v, double dt, double z) {
  const FullStep st = qe_full_step(p, v, dt, z);
  return {st.next, st.regime};
}

double qe_spot_step(const HestonParams& p, double s, double v, double v_next, double dt,
                    double z) {
  // Regime constants depend only on v; the draw that produced v_next is
  // irrelevant to the correction term.
  FullStep st = qe_full_step(p, v, dt, 0.0);
  st.next = v_next;
  return spot_step_with(p, s, v, st, dt, z);
}

PathSet simulate_heston(const HestonParams& params, const TimeGrid& grid, Eigen::Index n_paths,
                        std::uint64_t seed) {
  return branch_from_state(params, grid, params.s0, params.v0, grid.n_steps, n_paths, seed);
}

PathSet branch_from_state(const HestonParams& params, const TimeGrid& grid, double spot,
                          double variance, int remaining_steps, Eigen::Index n_branches,
                          std::uint64_t seed) {
  params.validate();
  if (!(spot > 0.0)) throw std::invalid_argument("branch_from_state: spot must be positive");
  if (!(variance >= 0.0))
    throw std::invalid_argument("branch_from_state: variance must be non-negative");
  if (remaining_steps < 0 || remaining_steps > grid.n_steps)
    throw std::invalid_argument("branch_from_state: remaining_steps out of range");
  if (n_branches < 1) throw std::invalid_argument("simulation needs at least one path");

  PathSet out;
  out.grid = grid;
  out.first_step = grid.n_steps - remaining_steps;
  out.seed = seed;
  out.spot.resize(n_branches, remaining_steps + 1);
  out.variance.resize(n_branches, remaining_steps + 1);
  out.spot.col(0).setConstant(spot);
  out.variance.col(0).setConstant(variance);
  fill_heston(params, grid, out.spot, out.variance, out.first_step, seed);
  return out;
}

PathSet simulate_gbm(double s0, double vol, const TimeGrid& grid, Eigen::Index n_paths,
                     std::uint64_t seed) {
  if (!(vol >= 0.0)) throw std::invalid_argument("simulate_gbm: vol must be non-negative");
  if (!(s0 > 0.0)) throw std::invalid_argument("simulate_gbm: s0 must be positive");
  if (n_paths < 1) throw std::invalid_argument("simulation needs at least one path");
  PathSet out;
  out.grid = grid;
  out.seed = seed;
  out.spot.resize(n_paths, grid.n_steps + 1);
  out.variance = Matrix::Constant(n_paths, grid.n_steps + 1, vol * vol);
  const double drift = -0.5 * vol * vol * grid.dt;
  const double diffusion = vol * std::sqrt(grid.dt);
  for (Eigen::Index i = 0; i < n_paths; ++i) {
    out.spot(i, 0) = s0;
    for (int k = 1; k <= grid.n_steps; ++k) {
      const double z = counter_normal(seed, static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(k - 1), kSpotSlot);
      out.spot(i, k) = out.spot(i, k - 1) * std::exp(drift + diffusion * z);
    }
  }
  return out;
}

void write_paths_csv(std::ostream& os, const PathSet& paths) {
  os << "path_id,step,spot,variance\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < paths.n_paths(); ++i) {
    for (int c = 0; c < paths.n_columns(); ++c) {
      os << i << ',' << paths.first_step + c << ',' << paths.spot(i, c) << ','
         << paths.variance(i, c) << '\n';
    }
  }
}

}  // namespace nhedge
