#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace nhedge {

enum class InstrumentKind { Stock, EuropeanCall, EuropeanPut };
enum class InstrumentRole { Underlier, HedgeOption, Target };

struct Instrument {
  InstrumentKind kind = InstrumentKind::Stock;
  std::optional<double> strike;
  double cost_coeff = 0.0;
  InstrumentRole role = InstrumentRole::Underlier;

  static Instrument stock(double cost_coeff);
  static Instrument call(double strike, double cost_coeff, InstrumentRole role);
  static Instrument put(double strike, double cost_coeff, InstrumentRole role);

  bool is_option() const { return kind != InstrumentKind::Stock; }
  bool tradable() const { return role != InstrumentRole::Target; }
  double strike_or_throw() const;
  // Throws std::invalid_argument when strike/cost invariants fail.
  void validate() const;
};

std::string_view to_string(InstrumentKind kind);
std::string_view to_string(InstrumentRole role);
InstrumentKind kind_from_string(std::string_view s);
InstrumentRole role_from_string(std::string_view s);

double payoff(InstrumentKind kind, double strike, double terminal_spot);
double payoff(const Instrument& instr, double terminal_spot);

// Zero-rate Black-Scholes. tau == 0 or vol == 0 returns intrinsic value.
double bs_price(InstrumentKind kind, double spot, double strike, double vol, double tau);

struct Greeks {
  double delta = 0.0;
  double gamma = 0.0;
  double theta = 0.0;  // value per year of calendar time
  double vega = 0.0;   // per unit of absolute volatility

  Greeks& operator+=(const Greeks& o);
  Greeks operator*(double w) const;
};

// Zero-rate Black-Scholes greeks. At tau == 0 (or vol == 0) delta is the
// payoff slope with 0 at the kink and the other greeks are 0.
Greeks bs_greeks(InstrumentKind kind, double spot, double strike, double vol, double tau);
Greeks bs_greeks(const Instrument& instr, double spot, double vol, double tau);

}  // namespace nhedge
