#include <doctest.h>

#include "nhedge/instruments.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace nhedge;
using K = InstrumentKind;

TEST_CASE("instrument invariants") {
  CHECK_NOTHROW(Instrument::call(1.02, 0.0, InstrumentRole::HedgeOption).validate());
  CHECK_THROWS_AS(Instrument::call(-1.0, 0.0, InstrumentRole::HedgeOption).validate(), std::invalid_argument);
  CHECK_THROWS_AS(Instrument::put(1.0, -0.1, InstrumentRole::HedgeOption).validate(), std::invalid_argument);
  CHECK_THROWS(Instrument::stock(0.0).strike_or_throw());
  CHECK_FALSE(Instrument::call(1.0, 0.0, InstrumentRole::Target).tradable());
  CHECK(kind_from_string(to_string(K::EuropeanPut)) == K::EuropeanPut);
  CHECK(role_from_string(to_string(InstrumentRole::Target)) == InstrumentRole::Target);
}

TEST_CASE("payoffs") {
  CHECK(payoff(K::EuropeanCall, 1.02, 1.05) == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(payoff(K::EuropeanPut, 0.98, 1.05) == 0.0);
  CHECK(payoff(K::EuropeanCall, 1.00, 1.00) == 0.0);
  CHECK(payoff(Instrument::stock(0.0), 1.3) == 1.3);
}

TEST_CASE("black-scholes against the binomial oracle") {
  // The tree itself is checked against a closed-form value first: ATM,
  // zero rate, the call equals 2 N(sigma sqrt(tau) / 2) - 1.
  const double atm = std::erf(0.2 * std::sqrt(0.08) / 2 / std::sqrt(2.0));
  CHECK(std::abs(testing::binomial_price(K::EuropeanCall, 1, 1, 0.2, 0.08) - atm) <= 1e-5);
  for (double strike : {0.9, 0.98, 1.0, 1.02, 1.1}) {
    for (K kind : {K::EuropeanCall, K::EuropeanPut}) {
      CAPTURE(strike);
      CHECK(std::abs(bs_price(kind, 1.0, strike, 0.2, 0.08) - testing::binomial_price(kind, 1.0, strike, 0.2, 0.08)) <=
            1e-5);
    }
  }
}

TEST_CASE("degenerate limits") {
  CHECK(bs_price(K::EuropeanCall, 1.05, 1.02, 0.2, 0.0) == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(bs_price(K::EuropeanPut, 0.9, 1.0, 0.0, 0.5) == doctest::Approx(0.1).epsilon(1e-12));
  for (double s : {0.8, 0.95, 1.05, 1.2}) {
    CHECK(std::abs(bs_price(K::EuropeanCall, s, 1.0, 0.2, 1e-10) - payoff(K::EuropeanCall, 1.0, s)) <= 1e-12);
  }
  const auto g = bs_greeks(K::EuropeanCall, 1.0, 1.0, 0.2, 0.0);
  CHECK(g.delta == 0.0);
  CHECK(g.gamma == 0.0);
  CHECK(g.theta == 0.0);
  CHECK(g.vega == 0.0);
  CHECK(bs_greeks(K::EuropeanCall, 1.1, 1.0, 0.2, 0.0).delta == 1.0);
  CHECK(bs_greeks(K::EuropeanPut, 0.9, 1.0, 0.2, 0.0).delta == -1.0);
  const auto stock = bs_greeks(Instrument::stock(0.0), 1.3, 0.2, 0.05);
  CHECK(stock.delta == 1.0);
  CHECK(stock.gamma == 0.0);
  CHECK(stock.vega == 0.0);
}

TEST_CASE("parity and greeks") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> spot(0.7, 1.3), strike(0.8, 1.2), vol(0.05, 0.6), tau(0.01, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double s = spot(rng), k = strike(rng), v = vol(rng), t = tau(rng);
    CHECK(std::abs(bs_price(K::EuropeanCall, s, k, v, t) - bs_price(K::EuropeanPut, s, k, v, t) - (s - k)) <= 1e-12);
    const auto c = bs_greeks(K::EuropeanCall, s, k, v, t);
    const auto p = bs_greeks(K::EuropeanPut, s, k, v, t);
    CHECK(std::abs(c.delta - p.delta - 1.0) <= 1e-12);
    for (K kind : {K::EuropeanCall, K::EuropeanPut}) {
      const auto g = bs_greeks(kind, s, k, v, t);
      const double h = 1e-5;
      auto f = [&](double ss, double vv, double tt) { return bs_price(kind, ss, k, vv, tt); };
      const double delta = (f(s + h, v, t) - f(s - h, v, t)) / (2 * h);
      const double gamma = (f(s + h, v, t) - 2 * f(s, v, t) + f(s - h, v, t)) / (h * h);
      const double vega = (f(s, v + h, t) - f(s, v - h, t)) / (2 * h);
      // theta: value change per year of calendar time, i.e. -d/dtau
      const double theta = -(f(s, v, t + h) - f(s, v, t - h)) / (2 * h);
      auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); };
      CHECK(rel(g.delta, delta) <= 1e-4);
      CHECK(rel(g.gamma, gamma) <= 1e-4);
      CHECK(rel(g.vega, vega) <= 1e-4);
      CHECK(rel(g.theta, theta) <= 1e-4);
    }
  }
  CHECK(std::abs(bs_greeks(K::EuropeanCall, 2.0, 1.0, 0.2, 0.08).delta - 1.0) <= 1e-6);
}

TEST_CASE("shape properties") {
  double prev_c = -1, prev_p = 1e9;
  for (double s = 0.7; s <= 1.3; s += 0.01) {
    const double c = bs_price(K::EuropeanCall, s, 1.0, 0.2, 0.08);
    const double p = bs_price(K::EuropeanPut, s, 1.0, 0.2, 0.08);
    CHECK(c >= prev_c);
    CHECK(p <= prev_p);
    prev_c = c;
    prev_p = p;
  }
  double prev = -1;
  for (double v = 0.01; v <= 1.0; v += 0.01) {
    const double c = bs_price(K::EuropeanCall, 1.0, 1.02, v, 0.08);
    CHECK(c >= prev);
    prev = c;
  }
  for (double k = 0.8; k <= 1.2; k += 0.01) {
    const double fly = bs_price(K::EuropeanCall, 1.0, k - 0.01, 0.2, 0.08) -
                       2 * bs_price(K::EuropeanCall, 1.0, k, 0.2, 0.08) +
                       bs_price(K::EuropeanCall, 1.0, k + 0.01, 0.2, 0.08);
    CHECK(fly >= 0.0);
  }
}
