#pragma once

// Terminal profit and loss of a short liability hedged by trading a set of
// assets:
//
//   PL = -Z + sum_i [ d_i(m-1) P_i(m) - sum_k (d_i(k) - d_i(k-1)) P_i(k) ]
//           - sum_i sum_k c_i |d_i(k) - d_i(k-1)| P_i(k)
//
// over trading columns k = 0..m-1 with d_i(-1) = 0. P_i(m) of an option is its
// payoff, so holdings are settled at maturity.

#include "nhedge/autodiff.hpp"

#include <span>

namespace nhedge {

using ad::Matrix;
using ad::Tensor;

// positions[k]: [B, A] holdings after trading at column k.
// prices: A matrices [B, m + 1]. liability_payoff: [B, 1].
Tensor pl_total(std::span<const Tensor> positions, std::span<const Matrix> prices,
                const Matrix& liability_payoff, std::span<const double> cost_coeffs);

// Components of the same computation, as plain per-path columns.
struct PlBreakdown {
  Eigen::VectorXd trading_gains;  // (delta . S)_T
  Eigen::VectorXd costs;          // C_T
  Eigen::VectorXd pl;
};

PlBreakdown pl_breakdown(std::span<const Matrix> positions, std::span<const Matrix> prices,
                         const Matrix& liability_payoff, std::span<const double> cost_coeffs);

}  // namespace nhedge
