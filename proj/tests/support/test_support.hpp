#pragma once

// Shared oracles for the unit and acceptance tests.

#include "nhedge/autodiff.hpp"
#include "nhedge/instruments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace nhedge::testing {

using ad::Matrix;
using ad::Tensor;

// Cox-Ross-Rubinstein tree, zero rate. Averaging the n and n+1 step trees
// cancels most of the odd/even oscillation.
inline double crr_tree(InstrumentKind kind, double spot, double strike, double vol, double tau, int steps) {
  const double dt = tau / steps;
  const double u = std::exp(vol * std::sqrt(dt));
  const double d = 1.0 / u;
  const double p = (1.0 - d) / (u - d);
  std::vector<double> v(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double s = spot * std::pow(u, steps - i) * std::pow(d, i);
    v[static_cast<std::size_t>(i)] =
        kind == InstrumentKind::EuropeanCall ? std::max(s - strike, 0.0) : std::max(strike - s, 0.0);
  }
  for (int n = steps - 1; n >= 0; --n) {
    for (int i = 0; i <= n; ++i) {
      v[static_cast<std::size_t>(i)] = p * v[static_cast<std::size_t>(i)] + (1 - p) * v[static_cast<std::size_t>(i) + 1];
    }
  }
  return v[0];
}

inline double binomial_price(InstrumentKind kind, double spot, double strike, double vol, double tau,
                             int steps = 10000) {
  return 0.5 * (crr_tree(kind, spot, strike, vol, tau, steps) + crr_tree(kind, spot, strike, vol, tau, steps + 1));
}

// Relative error of an analytic gradient against central differences,
// measured as ||g - g_fd|| / max(||g||, ||g_fd||, floor).
inline double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-10) {
  const double scale = std::max({analytic.norm(), numeric.norm(), floor});
  return (analytic - numeric).norm() / scale;
}

// Worst relative error over all inputs of d loss / d input, with the loss
// rebuilt from scratch for each perturbation.
inline double gradient_check(std::vector<Tensor> inputs,
                             const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                             double h = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  ad::backward(loss_fn(inputs));
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const Matrix analytic = t.grad();
    Matrix numeric(analytic.rows(), analytic.cols());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      double& x = t.mutable_value().data()[i];
      const double x0 = x;
      x = x0 + h;
      const double up = loss_fn(inputs).item();
      x = x0 - h;
      const double down = loss_fn(inputs).item();
      x = x0;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
    t.zero_grad();
  }
  return worst;
}

// Uniform entries in [lo, hi], optionally kept at least `gap` away from 0.
inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                            double hi = 1.0, double gap = 0.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double x = dist(rng);
    while (std::abs(x) < gap) x = dist(rng);
    m.data()[i] = x;
  }
  return m;
}

}  // namespace nhedge::testing
