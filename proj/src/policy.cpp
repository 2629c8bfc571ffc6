#include "nhedge/policy.hpp"

#include "nhedge/cash_flow.hpp"
#include "nhedge/rng.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace nhedge {

namespace {

double payoff_sign(const Instrument& instr) {
  switch (instr.kind) {
    case InstrumentKind::EuropeanCall: return 1.0;
    case InstrumentKind::EuropeanPut: return -1.0;
    default: return 0.0;
  }
}

PolicyNetwork::Linear make_linear(int in, int out, std::mt19937_64& rng, bool zero) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(in, out);
  Matrix b(1, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = zero ? 0.0 : dist(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = zero ? 0.0 : dist(rng);
  return {Tensor::parameter(std::move(w)), Tensor::parameter(std::move(b))};
}

PolicyNetwork::Norm make_norm(int width) {
  return {Tensor::parameter(Matrix::Ones(1, width)), Tensor::parameter(Matrix::Zero(1, width))};
}

Tensor apply(const PolicyNetwork::Linear& l, const Tensor& x) {
  return ad::linear(x, l.weight, l.bias);
}

Tensor apply(const PolicyNetwork::Norm& n, const Tensor& x) {
  return ad::layer_norm(x, n.gain, n.shift);
}

// Plain-matrix counterparts used by PolicyNetwork::infer.
Matrix affine(const Eigen::Ref<const Matrix>& x, const Matrix& w, const Matrix& b) {
  Matrix out(x.rows(), w.cols());
  out.noalias() = x * w;
  const double* bias = b.data();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double* o = out.row(r).data();
    for (Eigen::Index c = 0; c < out.cols(); ++c) o[c] += bias[c];
  }
  return out;
}

template <Eigen::Index D>
void norm_relu_rows(Matrix& h, const Matrix& gain, const Matrix& shift) {
  const Eigen::Index d = D > 0 ? D : h.cols();
  const double* g = gain.data();
  const double* s = shift.data();
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    double* x = h.row(r).data();
    double mu = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) mu += x[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) var += (x[c] - mu) * (x[c] - mu);
    const double inv_std = 1.0 / std::sqrt(var / static_cast<double>(d) + 1e-5);
    for (Eigen::Index c = 0; c < d; ++c) x[c] = std::max((x[c] - mu) * inv_std * g[c] + s[c], 0.0);
  }
}

void norm_relu_inplace(Matrix& h, const Matrix& gain, const Matrix& shift) {
  if (h.cols() == 32) norm_relu_rows<32>(h, gain, shift);
  else norm_relu_rows<0>(h, gain, shift);
}

// Attention over groups of `group` rows; qkv holds [Q | K | V] side by side.
template <Eigen::Index D>
Matrix grouped_attention_rows(const Matrix& qkv, Eigen::Index d_dyn, Eigen::Index group) {
  const Eigen::Index d = D > 0 ? D : d_dyn;
  const Eigen::Index rows = qkv.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix out = Matrix::Zero(rows, d);
  std::vector<double> w(static_cast<std::size_t>(group));
  for (Eigen::Index s0 = 0; s0 < rows; s0 += group) {
    for (Eigen::Index i = 0; i < group; ++i) {
      const double* q = qkv.row(s0 + i).data();
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < group; ++j) {
        const double* k = qkv.row(s0 + j).data() + d;
        double acc = 0.0;
        for (Eigen::Index c = 0; c < d; ++c) acc += q[c] * k[c];
        w[static_cast<std::size_t>(j)] = acc * inv_sqrt_d;
        top = std::max(top, w[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (auto& v : w) z += (v = std::exp(v - top));
      double* o = out.row(s0 + i).data();
      for (Eigen::Index j = 0; j < group; ++j) {
        const double a = w[static_cast<std::size_t>(j)] / z;
        const double* v = qkv.row(s0 + j).data() + 2 * d;
        for (Eigen::Index c = 0; c < d; ++c) o[c] += a * v[c];
      }
    }
  }
  return out;
}

Matrix grouped_attention(const Matrix& qkv, Eigen::Index d, Eigen::Index group) {
  return d == 32 ? grouped_attention_rows<32>(qkv, d, group) : grouped_attention_rows<0>(qkv, d, group);
}

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> values(m.data(), m.data() + m.size());
  return {{"shape", {m.rows(), m.cols()}}, {"values", values}};
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(values.size()))
    throw std::invalid_argument("policy blob: malformed tensor '" + name + "'");
  Matrix m(shape[0], shape[1]);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

void fill_token(Matrix& rows, Eigen::Index r, int token, int type, double sign, double x1,
                double x2) {
  const Eigen::Index base = static_cast<Eigen::Index>(token) * kTokenWidth;
  rows(r, base + type) = 1.0;
  rows(r, base + 4) = sign;
  rows(r, base + 5) = x1;
  rows(r, base + 6) = x2;
}

}  // namespace

Matrix FeatureVector::row(const TraderLayout& layout) const {
  const int h = static_cast<int>(layout.hedge_options.size());
  const int r = static_cast<int>(layout.reference_options.size());
  Matrix out = Matrix::Zero(1, layout.n_instrument_tokens() * kTokenWidth);
  fill_token(out, 0, 0, 0, 0.0, 0.0, prices.at(0));
  out(0, layout.prev_position_column(0)) = prev_positions.at(0);
  for (int i = 0; i < h; ++i) {
    fill_token(out, 0, 1 + i, 1, payoff_sign(layout.hedge_options[i]), log_moneyness.at(i),
               prices.at(1 + i));
    out(0, layout.prev_position_column(1 + i)) = prev_positions.at(1 + i);
  }
  for (int i = 0; i < r; ++i)
    fill_token(out, 0, 1 + h + i, 2, payoff_sign(layout.reference_options[i]),
               log_moneyness.at(h + i), 0.0);
  fill_token(out, 0, 1 + h + r, 3, 0.0, time_to_maturity, volatility);
  return out;
}

FeatureVector build_features(const TraderLayout& layout, const MarketState& state,
                             std::span<const double> prev_positions) {
  if (!(state.spot > 0.0)) throw std::invalid_argument("features: spot must be positive");
  if (!(state.variance >= 0.0)) throw std::invalid_argument("features: variance must be >= 0");
  if (state.hedge_prices.size() != layout.hedge_options.size())
    throw std::invalid_argument("features: one price per hedge option required");
  if (prev_positions.size() != static_cast<std::size_t>(layout.n_outputs()))
    throw std::invalid_argument("features: one previous position per output required");
  if (state.step < 0 || state.step > state.grid.n_steps)
    throw std::invalid_argument("features: step outside the grid");

  FeatureVector f;
  f.prices.push_back(state.spot);
  for (std::size_t i = 0; i < layout.hedge_options.size(); ++i) {
    const double p = state.hedge_prices[i];
    if (!std::isfinite(p)) throw std::invalid_argument("features: option price is not finite");
    f.prices.push_back(p);
    f.log_moneyness.push_back(std::log(state.spot / layout.hedge_options[i].strike_or_throw()));
  }
  for (const auto& ref : layout.reference_options)
    f.log_moneyness.push_back(std::log(state.spot / ref.strike_or_throw()));
  f.time_to_maturity = state.grid.time_to_maturity(state.step);
  f.volatility = std::sqrt(state.variance);
  f.prev_positions.assign(prev_positions.begin(), prev_positions.end());
  return f;
}

PolicyNetwork::PolicyNetwork(TraderLayout layout, InitOptions init) : layout_(std::move(layout)) {
  for (const auto& i : layout_.hedge_options) i.validate();
  for (const auto& i : layout_.reference_options) i.validate();
  if (layout_.embed_width < 1) throw std::invalid_argument("embedding width must be >= 1");
  std::mt19937_64 rng(derive_seed(init.seed, "policy-init"));
  const int d = layout_.embed_width;
  embed_ = make_linear(layout_.token_width(), d, rng, false);
  embed_norm_ = make_norm(d);
  for (auto& a : attn_) {
    a.query = make_linear(d, d, rng, false);
    a.key = make_linear(d, d, rng, false);
    a.value = make_linear(d, d, rng, false);
    a.output = make_linear(d, d, rng, false);
    a.norm = make_norm(d);
  }
  head_ = make_linear(d, layout_.n_outputs(), rng, init.zero_output_layer);
}

Tensor PolicyNetwork::forward(const Tensor& rows) const {
  const int width = layout_.n_instrument_tokens() * kTokenWidth;
  if (rows.cols() != width)
    throw ad::ShapeError("policy: feature width " + std::to_string(rows.cols()) +
                         " does not match network width " + std::to_string(width));
  const Eigen::Index batch = rows.rows();
  const int n_tok = layout_.n_tokens();
  Tensor x = layout_.single_token ? rows : ad::reshape(rows, batch * n_tok, kTokenWidth);
  Tensor h = ad::relu(apply(embed_norm_, apply(embed_, x)));
  for (const auto& a : attn_) {
    Tensor att = ad::attention(apply(a.query, h), apply(a.key, h), apply(a.value, h), n_tok);
    h = ad::relu(apply(a.norm, apply(a.output, att)));
  }
  Tensor pooled = n_tok > 1 ? ad::group_mean(h, n_tok) : h;
  return apply(head_, pooled);
}

Matrix PolicyNetwork::infer(const Matrix& rows) const {
  const int width = layout_.n_instrument_tokens() * kTokenWidth;
  if (rows.cols() != width)
    throw ad::ShapeError("policy: feature width " + std::to_string(rows.cols()) +
                         " does not match network width " + std::to_string(width));
  const Eigen::Index batch = rows.rows();
  const int n_tok = layout_.n_tokens();
  const int tw = layout_.token_width();
  const Eigen::Map<const Matrix> x(rows.data(), batch * n_tok, tw);
  Matrix h = affine(x, embed_.weight.value(), embed_.bias.value());
  norm_relu_inplace(h, embed_norm_.gain.value(), embed_norm_.shift.value());
  const Eigen::Index d = h.cols();
  for (const auto& a : attn_) {
    Matrix w(d, 3 * d);
    w << a.query.weight.value(), a.key.weight.value(), a.value.weight.value();
    Matrix b(1, 3 * d);
    b << a.query.bias.value(), a.key.bias.value(), a.value.bias.value();
    const Matrix att = grouped_attention(affine(h, w, b), d, n_tok);
    h = affine(att, a.output.weight.value(), a.output.bias.value());
    norm_relu_inplace(h, a.norm.gain.value(), a.norm.shift.value());
  }
  if (n_tok == 1) return affine(h, head_.weight.value(), head_.bias.value());
  Matrix pooled = Matrix::Zero(batch, d);
  const double inv = 1.0 / static_cast<double>(n_tok);
  for (Eigen::Index r = 0; r < batch; ++r) {
    for (int t = 0; t < n_tok; ++t) pooled.row(r) += h.row(r * n_tok + t);
    pooled.row(r) *= inv;
  }
  return affine(pooled, head_.weight.value(), head_.bias.value());
}

std::vector<std::pair<std::string, Tensor>> PolicyNetwork::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto lin = [&](const std::string& name, const Linear& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
  };
  auto norm = [&](const std::string& name, const Norm& n) {
    out.emplace_back(name + ".gain", n.gain);
    out.emplace_back(name + ".shift", n.shift);
  };
  lin("embed", embed_);
  norm("embed_norm", embed_norm_);
  for (int i = 0; i < 2; ++i) {
    const std::string p = "attn" + std::to_string(i);
    lin(p + ".query", attn_[i].query);
    lin(p + ".key", attn_[i].key);
    lin(p + ".value", attn_[i].value);
    lin(p + ".output", attn_[i].output);
    norm(p + ".norm", attn_[i].norm);
  }
  lin("head", head_);
  return out;
}

std::vector<Tensor> PolicyNetwork::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

PolicyNetwork PolicyNetwork::clone() const { return from_json(to_json()); }

void PolicyNetwork::set_all_parameters(double value) {
  for (auto& t : parameters()) t.mutable_value().setConstant(value);
}

std::uint64_t PolicyNetwork::parameter_hash() const {
  std::uint64_t h = hash_tag("policy");
  for (const auto& t : parameters()) {
    const Matrix& m = t.value();
    h = combine(h, static_cast<std::uint64_t>(m.rows()));
    h = combine(h, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) h = combine(h, std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  return h;
}

double PolicyNetwork::parameter_norm() const {
  double s = 0.0;
  for (const auto& t : parameters()) s += t.value().squaredNorm();
  return std::sqrt(s);
}

nlohmann::json instrument_to_json(const Instrument& instr) {
  nlohmann::json j = {{"kind", to_string(instr.kind)},
                      {"role", to_string(instr.role)},
                      {"cost", instr.cost_coeff}};
  if (instr.strike) j["strike"] = *instr.strike;
  return j;
}

Instrument instrument_from_json(const nlohmann::json& j) {
  Instrument i;
  i.kind = kind_from_string(j.at("kind").get<std::string>());
  i.role = role_from_string(j.at("role").get<std::string>());
  i.cost_coeff = j.value("cost", 0.0);
  if (j.contains("strike")) i.strike = j.at("strike").get<double>();
  i.validate();
  return i;
}

nlohmann::json layout_to_json(const TraderLayout& layout) {
  nlohmann::json hedges = nlohmann::json::array();
  for (const auto& i : layout.hedge_options) hedges.push_back(instrument_to_json(i));
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& i : layout.reference_options) refs.push_back(instrument_to_json(i));
  return {{"hedge_options", hedges},
          {"reference_options", refs},
          {"single_token", layout.single_token},
          {"embed_width", layout.embed_width}};
}

TraderLayout layout_from_json(const nlohmann::json& j) {
  TraderLayout l;
  for (const auto& i : j.at("hedge_options")) l.hedge_options.push_back(instrument_from_json(i));
  for (const auto& i : j.at("reference_options"))
    l.reference_options.push_back(instrument_from_json(i));
  l.single_token = j.value("single_token", false);
  l.embed_width = j.value("embed_width", 32);
  return l;
}

nlohmann::json PolicyNetwork::to_json() const {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [name, t] : named_parameters()) layers[name] = matrix_to_json(t.value());
  return {{"format", "nhedge-policy"}, {"version", 1}, {"layout", layout_to_json(layout_)},
          {"layers", layers}};
}

PolicyNetwork PolicyNetwork::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nhedge-policy")
    throw std::invalid_argument("policy blob: unexpected format tag");
  if (j.value("version", 0) != 1) throw std::invalid_argument("policy blob: unsupported version");
  PolicyNetwork net(layout_from_json(j.at("layout")), InitOptions{});
  const auto& layers = j.at("layers");
  for (auto& [name, t] : net.named_parameters()) {
    if (!layers.contains(name)) throw std::invalid_argument("policy blob: missing layer '" + name + "'");
    Matrix m = matrix_from_json(layers.at(name), name);
    if (m.rows() != t.rows() || m.cols() != t.cols())
      throw std::invalid_argument("policy blob: shape mismatch for '" + name + "'");
    t.mutable_value() = std::move(m);
  }
  return net;
}

std::vector<double> policy_step(const PolicyNetwork& net, const FeatureVector& features) {
  ad::NoGradGuard guard;
  const Tensor out = net.forward(Tensor::constant(features.row(net.layout())));
  return {out.value().data(), out.value().data() + out.size()};
}

Matrix feature_rows(const TraderLayout& layout, const EpisodeMarket& market, int step) {
  const PathSet& paths = *market.paths;
  const int c = paths.column(step);
  if (c < 0 || c >= paths.n_columns()) throw std::invalid_argument("features: step outside paths");
  if (market.hedge_prices.size() != layout.hedge_options.size())
    throw std::invalid_argument("features: one price series per hedge option required");
  const int h = static_cast<int>(layout.hedge_options.size());
  const int r = static_cast<int>(layout.reference_options.size());
  const Eigen::Index batch = paths.n_paths();
  const double tau = paths.grid.time_to_maturity(step);

  Matrix rows = Matrix::Zero(batch, layout.n_instrument_tokens() * kTokenWidth);
  std::vector<double> log_strike_h, log_strike_r, sign_h, sign_r;
  for (const auto& i : layout.hedge_options) {
    log_strike_h.push_back(std::log(i.strike_or_throw()));
    sign_h.push_back(payoff_sign(i));
  }
  for (const auto& i : layout.reference_options) {
    log_strike_r.push_back(std::log(i.strike_or_throw()));
    sign_r.push_back(payoff_sign(i));
  }
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double s = paths.spot(b, c);
    if (!(s > 0.0)) throw std::invalid_argument("features: spot must be positive");
    const double log_s = std::log(s);
    fill_token(rows, b, 0, 0, 0.0, 0.0, s);
    for (int i = 0; i < h; ++i)
      fill_token(rows, b, 1 + i, 1, sign_h[i], log_s - log_strike_h[i], market.hedge_prices[i](b, c));
    for (int i = 0; i < r; ++i) fill_token(rows, b, 1 + h + i, 2, sign_r[i], log_s - log_strike_r[i], 0.0);
    fill_token(rows, b, 1 + h + r, 3, 0.0, tau, std::sqrt(paths.variance(b, c)));
  }
  return rows;
}

std::vector<Tensor> unroll_positions(const PolicyNetwork& net, const EpisodeMarket& market,
                                     int start_step) {
  const TraderLayout& layout = net.layout();
  const PathSet& paths = *market.paths;
  const int n = paths.grid.n_steps;
  if (start_step < paths.first_step || start_step > n - 1)
    throw std::invalid_argument("unroll: start step outside the tradable range");
  if (paths.last_step() != n) throw std::invalid_argument("unroll: paths must reach maturity");

  std::vector<Eigen::Index> prev_cols;
  for (int o = 0; o < layout.n_outputs(); ++o) prev_cols.push_back(layout.prev_position_column(o));
  const Eigen::Index width = layout.n_instrument_tokens() * kTokenWidth;

  std::vector<Tensor> positions;
  positions.reserve(static_cast<std::size_t>(n - start_step));
  for (int k = start_step; k < n; ++k) {
    Tensor rows = Tensor::constant(feature_rows(layout, market, k));
    if (!positions.empty()) rows = rows + ad::place_columns(positions.back(), width, prev_cols);
    positions.push_back(ad::grad_enabled() ? net.forward(rows) : Tensor::constant(net.infer(rows.value())));
  }
  return positions;
}

double HedgeLedger::total_cost(Eigen::Index path) const {
  double total = 0.0;
  for (const auto& c : costs) total += c.row(path).sum();
  return total;
}

HedgeLedger unroll_policy(const PolicyNetwork& net, const EpisodeMarket& market, int start_step,
                          const Instrument& liability, double underlier_cost) {
  ad::NoGradGuard guard;
  const PathSet& paths = *market.paths;
  const int n = paths.grid.n_steps;
  const auto positions = unroll_positions(net, market, start_step);
  const Eigen::Index batch = paths.n_paths();
  const int assets = net.layout().n_outputs();
  const int c0 = paths.column(start_step);
  const int m = n - start_step;

  std::vector<Matrix> prices;
  prices.push_back(paths.spot.middleCols(c0, m + 1));
  for (const auto& p : market.hedge_prices) prices.push_back(p.middleCols(c0, m + 1));
  std::vector<double> costs{underlier_cost};
  for (const auto& h : net.layout().hedge_options) costs.push_back(h.cost_coeff);

  Matrix liability_payoff(batch, 1);
  for (Eigen::Index b = 0; b < batch; ++b)
    liability_payoff(b, 0) = payoff(liability, paths.spot(b, paths.column(n)));

  HedgeLedger ledger;
  ledger.start_step = start_step;
  for (int a = 0; a < assets; ++a) {
    ledger.positions.push_back(Matrix::Zero(batch, n));
    ledger.trade_notional.push_back(Matrix::Zero(batch, n));
    ledger.costs.push_back(Matrix::Zero(batch, n));
  }
  std::vector<Matrix> pos_values;
  for (int k = start_step; k < n; ++k) {
    const Matrix& pk = positions[static_cast<std::size_t>(k - start_step)].value();
    pos_values.push_back(pk);
    for (int a = 0; a < assets; ++a) {
      const Eigen::VectorXd prev = k == start_step ? Eigen::VectorXd::Zero(batch)
                                                   : Eigen::VectorXd(ledger.positions[a].col(k - 1));
      const Eigen::VectorXd trade = pk.col(a) - prev;
      const auto price = prices[a].col(k - start_step);
      ledger.positions[a].col(k) = pk.col(a);
      ledger.trade_notional[a].col(k) = trade.cwiseProduct(price);
      ledger.costs[a].col(k) = costs[a] * trade.cwiseAbs().cwiseProduct(price);
    }
  }
  const PlBreakdown pl = pl_breakdown(pos_values, prices, liability_payoff, costs);
  ledger.payoff = liability_payoff.col(0);
  ledger.pl = pl.pl;
  return ledger;
}

}  // namespace nhedge
