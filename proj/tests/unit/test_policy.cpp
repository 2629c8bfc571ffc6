#include <doctest.h>

#include "nhedge/policy.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace nhedge;
using testing::gradient_check;
using testing::random_matrix;

namespace {

Instrument hedge_call() { return Instrument::call(1.02, 0.0, InstrumentRole::HedgeOption); }
Instrument hedge_put() { return Instrument::put(0.98, 0.0, InstrumentRole::HedgeOption); }
Instrument target() { return Instrument::call(1.0, 0.0, InstrumentRole::Target); }

TraderLayout secondary_layout(bool single = false) {
  TraderLayout l;
  l.hedge_options = {hedge_call(), hedge_put()};
  l.reference_options = {target()};
  l.single_token = single;
  return l;
}

TraderLayout primary_layout() {
  TraderLayout l;
  l.reference_options = {hedge_call()};
  return l;
}

void set_constant_policy(PolicyNetwork& net, double value) {
  for (auto& [name, t] : net.named_parameters()) {
    if (name == "head.weight") t.mutable_value().setZero();
    if (name == "head.bias") t.mutable_value().setConstant(value);
  }
}

PathSet hand_path(std::initializer_list<double> spots) {
  PathSet p;
  p.grid.n_steps = static_cast<int>(spots.size()) - 1;
  p.spot.resize(1, static_cast<Eigen::Index>(spots.size()));
  Eigen::Index i = 0;
  for (double s : spots) p.spot(0, i++) = s;
  p.variance = Matrix::Constant(1, p.spot.cols(), 0.04);
  return p;
}

}  // namespace

TEST_CASE("feature construction") {
  const auto layout = secondary_layout();
  MarketState st;
  st.spot = 1.0;
  st.variance = 0.04;
  st.step = st.grid.n_steps - 1;
  st.hedge_prices = {0.01, 0.02};
  const double zeros[] = {0.0, 0.0, 0.0};
  const auto f = build_features(layout, st, zeros);
  CHECK(f.time_to_maturity == doctest::Approx(0.004).epsilon(1e-12));
  CHECK(f.volatility == doctest::Approx(0.2).epsilon(1e-15));
  REQUIRE(f.log_moneyness.size() == 3);
  CHECK(f.log_moneyness[2] == 0.0);  // target K = 1.00 at spot 1.0
  CHECK(f.log_moneyness[0] == doctest::Approx(std::log(1.0 / 1.02)));
  CHECK(f.prices == std::vector<double>{1.0, 0.01, 0.02});
  CHECK(f.prev_positions == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(f.row(layout).cols() == layout.n_instrument_tokens() * kTokenWidth);

  MarketState bad = st;
  bad.spot = 0.0;
  CHECK_THROWS_AS(build_features(layout, bad, zeros), std::invalid_argument);
  bad = st;
  bad.hedge_prices = {0.01};
  CHECK_THROWS_AS(build_features(layout, bad, zeros), std::invalid_argument);
  bad = st;
  bad.hedge_prices = {0.01, std::nan("")};
  CHECK_THROWS_AS(build_features(layout, bad, zeros), std::invalid_argument);
  const double two[] = {0.0, 0.0};
  CHECK_THROWS_AS(build_features(layout, st, two), std::invalid_argument);
}

TEST_CASE("network shape and trivial outputs") {
  PolicyNetwork net(secondary_layout(), {3, false});
  CHECK(net.layout().n_outputs() == 3);
  MarketState st;
  st.hedge_prices = {0.01, 0.02};
  const double zeros[] = {0.0, 0.0, 0.0};
  const auto f = build_features(net.layout(), st, zeros);
  const auto a = policy_step(net, f);
  CHECK(a.size() == 3);
  CHECK(a == policy_step(net, f));

  PolicyNetwork zero(secondary_layout(), {3, false});
  zero.set_all_parameters(0.0);
  for (double x : policy_step(zero, f)) CHECK(x == 0.0);

  // Default initialization starts with a silent head.
  PolicyNetwork fresh(secondary_layout(), {3, true});
  for (double x : policy_step(fresh, f)) CHECK(x == 0.0);

  CHECK_THROWS_AS(net.forward(Tensor::constant(Matrix::Zero(2, 5))), ad::ShapeError);
}

TEST_CASE("fused inference matches the recorded forward pass") {
  std::mt19937_64 rng(4);
  for (bool single : {false, true}) {
    PolicyNetwork net(secondary_layout(single), {9, false});
    const Matrix rows = random_matrix(rng, 37, net.layout().n_instrument_tokens() * kTokenWidth);
    const Matrix a = net.forward(Tensor::constant(rows)).value();
    const Matrix b = net.infer(rows);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
  }
  PolicyNetwork p(primary_layout(), {2, false});
  const Matrix rows = random_matrix(rng, 11, p.layout().n_instrument_tokens() * kTokenWidth);
  CHECK((p.forward(Tensor::constant(rows)).value() - p.infer(rows)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identical features on different paths give identical positions") {
  PolicyNetwork net(secondary_layout(), {1, false});
  std::mt19937_64 rng(2);
  Matrix rows(2, net.layout().n_instrument_tokens() * kTokenWidth);
  rows.row(0) = random_matrix(rng, 1, rows.cols());
  rows.row(1) = rows.row(0);
  const Matrix out = net.infer(rows);
  // Within a batch, vectorized row blocking may differ by an ulp.
  CHECK((out.row(0) - out.row(1)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(net.infer(rows.row(0)) == net.infer(rows.row(1)));
}

TEST_CASE("serialization round trip") {
  PolicyNetwork net(secondary_layout(), {21, false});
  const auto copy = PolicyNetwork::from_json(net.to_json());
  CHECK(copy.parameter_hash() == net.parameter_hash());
  const auto c2 = net.clone();
  CHECK(c2.parameter_hash() == net.parameter_hash());
  c2.parameters()[0].mutable_value()(0, 0) += 1.0;
  CHECK(c2.parameter_hash() != net.parameter_hash());
  auto j = net.to_json();
  j["layers"].erase("head.bias");
  CHECK_THROWS(PolicyNetwork::from_json(j));
}

TEST_CASE("zero prefix for every start step") {
  HestonParams hp;
  const auto paths = simulate_heston(hp, TimeGrid{}, 16, 5);
  PolicyNetwork net(primary_layout(), {8, false});
  EpisodeMarket market{&paths, {}};
  for (int j = 0; j < paths.grid.n_steps; ++j) {
    const auto ledger = unroll_policy(net, market, j, hedge_call(), 0.01);
    CHECK(ledger.positions.size() == 1);
    if (j > 0) {
      CHECK(ledger.positions[0].leftCols(j).isZero(0.0));
      CHECK(ledger.costs[0].leftCols(j).isZero(0.0));
      CHECK(ledger.trade_notional[0].leftCols(j).isZero(0.0));
    }
    CHECK_FALSE(ledger.positions[0].col(j).isZero(0.0));
    CHECK(unroll_positions(net, market, j).size() == static_cast<std::size_t>(paths.grid.n_steps - j));
  }
  CHECK_THROWS_AS(unroll_positions(net, market, paths.grid.n_steps), std::invalid_argument);
}

TEST_CASE("ledger of trivial and hand-specified policies") {
  HestonParams hp;
  const auto paths = simulate_heston(hp, TimeGrid{}, 8, 1);
  EpisodeMarket market{&paths, {}};
  const int n = paths.grid.n_steps;

  PolicyNetwork zero(primary_layout(), {1, true});
  const auto z = unroll_policy(zero, market, 0, hedge_call(), 0.01);
  for (Eigen::Index b = 0; b < 8; ++b) {
    CHECK(z.total_cost(b) == 0.0);
    CHECK(z.pl(b) == -payoff(hedge_call(), paths.spot(b, n)));
  }

  // Last start step: a single trade at n-1, cleared at maturity.
  PolicyNetwork net(primary_layout(), {1, false});
  const auto last = unroll_policy(net, market, n - 1, hedge_call(), 0.01);
  CHECK(last.positions[0].leftCols(n - 1).isZero(0.0));
  CHECK((last.trade_notional[0].col(n - 1).array() != 0.0).all());

  // Constant 0.5 on the path 1.0 -> 1.1 -> 1.2, short a call struck at 1.
  const auto hand = hand_path({1.0, 1.1, 1.2});
  PolicyNetwork half(primary_layout(), {1, true});
  set_constant_policy(half, 0.5);
  EpisodeMarket hm{&hand, {}};
  const auto l = unroll_policy(half, hm, 0, Instrument::call(1.0, 0.0, InstrumentRole::Target), 0.01);
  CHECK(l.positions[0](0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(l.positions[0](0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(l.trade_notional[0](0, 0) == doctest::Approx(0.5));
  CHECK(l.trade_notional[0](0, 1) == doctest::Approx(0.0));
  CHECK(l.costs[0](0, 0) == doctest::Approx(0.005));
  CHECK(l.payoff(0) == doctest::Approx(0.2));
  // -0.2 + (0.5 * 1.2 - 0.5) - 0.005
  CHECK(l.pl(0) == doctest::Approx(-0.105).epsilon(1e-12));
}

TEST_CASE("positions feed back into the next step") {
  HestonParams hp;
  const auto paths = simulate_heston(hp, TimeGrid{}, 4, 3);
  PolicyNetwork net(primary_layout(), {6, false});
  EpisodeMarket market{&paths, {}};
  const auto pos = unroll_positions(net, market, 0);
  const Matrix without_feedback = net.infer(feature_rows(net.layout(), market, 1));
  CHECK((pos[1].value() - without_feedback).norm() > 0.0);
}

TEST_CASE("gradient through a 3-step recurrence") {
  HestonParams hp;
  TimeGrid g;
  g.n_steps = 3;
  const auto paths = simulate_heston(hp, g, 3, 12);
  PolicyNetwork net(secondary_layout(), {10, false});
  std::mt19937_64 rng(10);
  std::vector<Matrix> tables{random_matrix(rng, 3, 4, 0.0, 0.05), random_matrix(rng, 3, 4, 0.0, 0.05)};
  EpisodeMarket market{&paths, tables};
  std::vector<Tensor> params;
  for (auto& [name, t] : net.named_parameters()) {
    if (name == "embed.weight" || name == "attn0.query.weight" || name == "head.bias") params.push_back(t);
  }
  const Matrix w = random_matrix(rng, 3, 3);
  const double err = gradient_check(params, [&](const std::vector<Tensor>&) {
    const auto pos = unroll_positions(net, market, 0);
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t k = 0; k < pos.size(); ++k)
      total = total + ad::sum(ad::mul(pos[k], Tensor::constant(w.row(static_cast<Eigen::Index>(k)))));
    return total;
  });
  CHECK(err <= 1e-4);
}
