#pragma once

#include "nhedge/autodiff.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace nhedge {

using ad::Matrix;

struct HestonParams {
  double s0 = 1.0;
  double v0 = 0.04;
  double kappa = 1.0;
  double theta = 0.04;
  double sigma = 0.3;
  double rho = -0.7;

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
  // 2 kappa theta >= sigma^2. Reported, never enforced.
  bool feller_satisfied() const { return 2.0 * kappa * theta >= sigma * sigma; }

  // Constant-volatility market expressed as a degenerate Heston model; its
  // paths coincide with simulate_gbm under the same seed.
  static HestonParams gbm(double s0, double vol) { return {s0, vol * vol, 0.0, vol * vol, 0.0, 0.0}; }
};

struct TimeGrid {
  int n_steps = 20;
  double dt = 1.0 / 250.0;

  double maturity() const { return n_steps * dt; }
  double time(int k) const { return k * dt; }
  // Years to maturity at absolute step k.
  double time_to_maturity(int k) const { return (n_steps - k) * dt; }
};

// Simulated trajectories. Column c holds absolute grid step first_step + c,
// so a branched set starting mid-grid keeps its calendar position.
struct PathSet {
  Matrix spot;
  Matrix variance;
  TimeGrid grid;
  int first_step = 0;
  std::uint64_t seed = 0;

  Eigen::Index n_paths() const { return spot.rows(); }
  int n_columns() const { return static_cast<int>(spot.cols()); }
  int last_step() const { return first_step + n_columns() - 1; }
  // Column index of absolute step k.
  int column(int k) const { return k - first_step; }

  // Rows [begin, begin + count) as a new PathSet.
  PathSet rows(Eigen::Index begin, Eigen::Index count) const;
};

enum class QeRegime { Deterministic, Quadratic, Exponential };

struct QeMoments {
  double mean;
  double variance;
  double psi;
};

inline constexpr double kQeCriticalPsi = 1.5;

// Exact CIR conditional mean/variance of V(t+dt) given V(t) = v.
QeMoments qe_moments(const HestonParams& p, double v, double dt);

struct QeStep {
  double next;
  QeRegime regime;
};

// Andersen's quadratic-exponential variance step driven by a standard
// normal; the exponential branch uses Phi(z) as its uniform.
QeStep qe_variance_step(const HestonParams& p, double v, double dt, double z);

// One martingale-corrected log-spot step given the variance endpoints.
double qe_spot_step(const HestonParams& p, double s, double v, double v_next, double dt,
                    double z);

PathSet simulate_heston(const HestonParams& params, const TimeGrid& grid, Eigen::Index n_paths,
                        std::uint64_t seed);

PathSet simulate_gbm(double s0, double vol, const TimeGrid& grid, Eigen::Index n_paths,
                     std::uint64_t seed);

// n_branches Heston continuations from (spot, variance) covering the last
// remaining_steps steps of `grid`. Draws are keyed by absolute step, so a
// branch queried one step later reuses the tail of the same stream.
PathSet branch_from_state(const HestonParams& params, const TimeGrid& grid, double spot,
                          double variance, int remaining_steps, Eigen::Index n_branches,
                          std::uint64_t seed);

// `path_id,step,spot,variance`, one row per path per step.
void write_paths_csv(std::ostream& os, const PathSet& paths);

}  // namespace nhedge
