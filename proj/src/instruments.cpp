#include "nhedge/instruments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nhedge {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

void check_inputs(double spot, double strike, double vol, double tau) {
  if (!(spot > 0.0)) throw std::invalid_argument("black-scholes: spot must be positive");
  if (!(strike > 0.0)) throw std::invalid_argument("black-scholes: strike must be positive");
  if (!(vol >= 0.0)) throw std::invalid_argument("black-scholes: vol must be non-negative");
  if (!(tau >= 0.0)) throw std::invalid_argument("black-scholes: tau must be non-negative");
}

}  // namespace

Instrument Instrument::stock(double cost_coeff) {
  return {InstrumentKind::Stock, std::nullopt, cost_coeff, InstrumentRole::Underlier};
}

Instrument Instrument::call(double strike, double cost_coeff, InstrumentRole role) {
  return {InstrumentKind::EuropeanCall, strike, cost_coeff, role};
}

Instrument Instrument::put(double strike, double cost_coeff, InstrumentRole role) {
  return {InstrumentKind::EuropeanPut, strike, cost_coeff, role};
}

double Instrument::strike_or_throw() const {
  if (!strike) throw std::invalid_argument("instrument has no strike");
  return *strike;
}

void Instrument::validate() const {
  if (!(cost_coeff >= 0.0)) throw std::invalid_argument("cost coefficient must be >= 0");
  if (is_option()) {
    if (!strike || !(*strike > 0.0)) throw std::invalid_argument("option strike must be > 0");
    if (role == InstrumentRole::Underlier)
      throw std::invalid_argument("an option cannot play the underlier role");
  } else if (role != InstrumentRole::Underlier) {
    throw std::invalid_argument("the stock can only play the underlier role");
  }
}

std::string_view to_string(InstrumentKind kind) {
  switch (kind) {
    case InstrumentKind::Stock: return "stock";
    case InstrumentKind::EuropeanCall: return "call";
    case InstrumentKind::EuropeanPut: return "put";
  }
  return "?";
}

std::string_view to_string(InstrumentRole role) {
  switch (role) {
    case InstrumentRole::Underlier: return "underlier";
    case InstrumentRole::HedgeOption: return "hedge";
    case InstrumentRole::Target: return "target";
  }
  return "?";
}

InstrumentKind kind_from_string(std::string_view s) {
  if (s == "stock") return InstrumentKind::Stock;
  if (s == "call") return InstrumentKind::EuropeanCall;
  if (s == "put") return InstrumentKind::EuropeanPut;
  throw std::invalid_argument("unknown instrument kind '" + std::string(s) + "'");
}

InstrumentRole role_from_string(std::string_view s) {
  if (s == "underlier") return InstrumentRole::Underlier;
  if (s == "hedge") return InstrumentRole::HedgeOption;
  if (s == "target") return InstrumentRole::Target;
  throw std::invalid_argument("unknown instrument role '" + std::string(s) + "'");
}

double payoff(InstrumentKind kind, double strike, double terminal_spot) {
  switch (kind) {
    case InstrumentKind::Stock: return terminal_spot;
    case InstrumentKind::EuropeanCall: return std::max(terminal_spot - strike, 0.0);
    case InstrumentKind::EuropeanPut: return std::max(strike - terminal_spot, 0.0);
  }
  return 0.0;
}

double payoff(const Instrument& instr, double terminal_spot) {
  return payoff(instr.kind, instr.strike.value_or(0.0), terminal_spot);
}

double bs_price(InstrumentKind kind, double spot, double strike, double vol, double tau) {
  if (kind == InstrumentKind::Stock) return spot;
  check_inputs(spot, strike, vol, tau);
  const double total_vol = vol * std::sqrt(tau);
  if (total_vol == 0.0) return payoff(kind, strike, spot);
  const double d1 = (std::log(spot / strike) + 0.5 * total_vol * total_vol) / total_vol;
  const double d2 = d1 - total_vol;
  if (kind == InstrumentKind::EuropeanCall) return spot * norm_cdf(d1) - strike * norm_cdf(d2);
  return strike * norm_cdf(-d2) - spot * norm_cdf(-d1);
}

Greeks& Greeks::operator+=(const Greeks& o) {
  delta += o.delta;
  gamma += o.gamma;
  theta += o.theta;
  vega += o.vega;
  return *this;
}

Greeks Greeks::operator*(double w) const { return {delta * w, gamma * w, theta * w, vega * w}; }

Greeks bs_greeks(InstrumentKind kind, double spot, double strike, double vol, double tau) {
  if (kind == InstrumentKind::Stock) return {1.0, 0.0, 0.0, 0.0};
  check_inputs(spot, strike, vol, tau);
  const double total_vol = vol * std::sqrt(tau);
  const bool call = kind == InstrumentKind::EuropeanCall;
  if (total_vol == 0.0) {
    Greeks g;
    if (call && spot > strike) g.delta = 1.0;
    if (!call && spot < strike) g.delta = -1.0;
    return g;
  }
  const double d1 = (std::log(spot / strike) + 0.5 * total_vol * total_vol) / total_vol;
  const double pdf = norm_pdf(d1);
  Greeks g;
  g.delta = call ? norm_cdf(d1) : norm_cdf(d1) - 1.0;
  g.gamma = pdf / (spot * total_vol);
  g.vega = spot * pdf * std::sqrt(tau);
  g.theta = -spot * pdf * vol / (2.0 * std::sqrt(tau));
  return g;
}

Greeks bs_greeks(const Instrument& instr, double spot, double vol, double tau) {
  return bs_greeks(instr.kind, spot, instr.strike.value_or(1.0), vol, tau);
}

}  // namespace nhedge
