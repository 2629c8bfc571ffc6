#include "nhedge/cash_flow.hpp"

#include <string>

namespace nhedge {

namespace {

void check_shapes(std::size_t n_positions, Eigen::Index rows, Eigen::Index assets,
                  std::span<const Matrix> prices, const Matrix& liability_payoff,
                  std::span<const double> cost_coeffs) {
  if (prices.size() != static_cast<std::size_t>(assets) || cost_coeffs.size() != prices.size())
    throw ad::ShapeError("pl_total: need one price series and one cost per asset");
  for (const auto& p : prices) {
    if (p.rows() != rows || p.cols() != static_cast<Eigen::Index>(n_positions) + 1)
      throw ad::ShapeError("pl_total: price series must be [paths, trading steps + 1]");
  }
  if (liability_payoff.rows() != rows || liability_payoff.cols() != 1)
    throw ad::ShapeError("pl_total: liability payoff must be [paths, 1]");
}

Matrix price_column(std::span<const Matrix> prices, Eigen::Index k) {
  Matrix out(prices.front().rows(), static_cast<Eigen::Index>(prices.size()));
  for (std::size_t a = 0; a < prices.size(); ++a) out.col(static_cast<Eigen::Index>(a)) = prices[a].col(k);
  return out;
}

}  // namespace

Tensor pl_total(std::span<const Tensor> positions, std::span<const Matrix> prices,
                const Matrix& liability_payoff, std::span<const double> cost_coeffs) {
  if (positions.empty()) throw ad::ShapeError("pl_total: no trading steps");
  const Eigen::Index rows = positions.front().rows();
  const Eigen::Index assets = positions.front().cols();
  check_shapes(positions.size(), rows, assets, prices, liability_payoff, cost_coeffs);

  Matrix coeffs(1, assets);
  for (Eigen::Index a = 0; a < assets; ++a) coeffs(0, a) = cost_coeffs[static_cast<std::size_t>(a)];
  const Tensor cost_row = Tensor::constant(coeffs);

  // Accumulates -(trade notional) - cost per asset, then the settlement value.
  Tensor running;
  Tensor prev;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Tensor& pos = positions[k];
    if (pos.rows() != rows || pos.cols() != assets)
      throw ad::ShapeError("pl_total: position shapes differ across steps");
    const Tensor px = Tensor::constant(price_column(prices, static_cast<Eigen::Index>(k)));
    const Tensor trade = prev.defined() ? pos - prev : pos;
    const Tensor notional = trade * px;
    const Tensor cost = ad::abs_value(trade) * px * cost_row;
    const Tensor step = -(notional + cost);
    running = running.defined() ? running + step : step;
    prev = pos;
  }
  const Tensor settle =
      prev * Tensor::constant(price_column(prices, static_cast<Eigen::Index>(positions.size())));
  return ad::row_sum(running + settle) - Tensor::constant(liability_payoff);
}

PlBreakdown pl_breakdown(std::span<const Matrix> positions, std::span<const Matrix> prices,
                         const Matrix& liability_payoff, std::span<const double> cost_coeffs) {
  if (positions.empty()) throw ad::ShapeError("pl_total: no trading steps");
  const Eigen::Index rows = positions.front().rows();
  const Eigen::Index assets = positions.front().cols();
  check_shapes(positions.size(), rows, assets, prices, liability_payoff, cost_coeffs);

  PlBreakdown out;
  out.trading_gains = Eigen::VectorXd::Zero(rows);
  out.costs = Eigen::VectorXd::Zero(rows);
  Matrix prev = Matrix::Zero(rows, assets);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Matrix px = price_column(prices, static_cast<Eigen::Index>(k));
    const Matrix trade = positions[k] - prev;
    const Matrix notional = trade.cwiseProduct(px);
    out.trading_gains -= notional.rowwise().sum();
    for (Eigen::Index a = 0; a < assets; ++a)
      out.costs += cost_coeffs[static_cast<std::size_t>(a)] *
                   trade.col(a).cwiseAbs().cwiseProduct(px.col(a));
    prev = positions[k];
  }
  out.trading_gains +=
      prev.cwiseProduct(price_column(prices, static_cast<Eigen::Index>(positions.size())))
          .rowwise()
          .sum();
  out.pl = out.trading_gains - out.costs - liability_payoff.col(0);
  return out;
}

}  // namespace nhedge
