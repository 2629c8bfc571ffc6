#include "nhedge/experiment.hpp"

#include "nhedge/parallel.hpp"
#include "nhedge/rng.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

namespace nhedge {

using nlohmann::json;

namespace {

const char* const kMethodBs = "black-scholes";
const char* const kMethodStock = "stock-only";
const char* const kMethodProposed = "proposed";

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) field_error(prefix.empty() ? "<root>" : prefix, "expected an object");
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!names.count(key)) field_error(prefix.empty() ? key : prefix + "." + key, "unknown field");
  }
}

std::string join(const std::string& prefix, const char* key) {
  return prefix.empty() ? std::string(key) : prefix + "." + key;
}

void read_double(const json& obj, const std::string& prefix, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) field_error(join(prefix, key), "expected a number");
  out = v.get<double>();
  if (!std::isfinite(out)) field_error(join(prefix, key), "expected a finite number");
}

template <typename Int>
void read_count(const json& obj, const std::string& prefix, const char* key, Int& out, bool allow_zero) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) field_error(join(prefix, key), "expected an integer");
  const auto x = v.get<long long>();
  if (x < 0 || (!allow_zero && x == 0))
    field_error(join(prefix, key), allow_zero ? "expected a non-negative integer" : "expected a positive integer");
  out = static_cast<Int>(x);
}

void read_bool(const json& obj, const std::string& prefix, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) field_error(join(prefix, key), "expected true or false");
  out = v.get<bool>();
}

void read_utility(const json& obj, const std::string& prefix, UtilitySpec& u) {
  check_keys(obj, prefix, {"kind", "lambda", "alpha"});
  if (obj.contains("kind")) {
    const json& k = obj.at("kind");
    if (!k.is_string()) field_error(prefix + ".kind", "expected \"erm\" or \"cvar\"");
    const auto s = k.get<std::string>();
    if (s == "erm") u.kind = UtilityKind::Erm;
    else if (s == "cvar") u.kind = UtilityKind::Cvar;
    else field_error(prefix + ".kind", "expected \"erm\" or \"cvar\", got \"" + s + "\"");
  }
  read_double(obj, prefix, "lambda", u.lambda);
  read_double(obj, prefix, "alpha", u.alpha);
}

json utility_to_json(const UtilitySpec& u) {
  return {{"kind", u.kind == UtilityKind::Erm ? "erm" : "cvar"}, {"lambda", u.lambda}, {"alpha", u.alpha}};
}

void apply_scale_fields(ExperimentConfig& cfg, const ExperimentConfig& preset) {
  cfg.scale = preset.scale;
  cfg.paths = preset.paths;
  cfg.epochs = preset.epochs;
  cfg.primary_minibatch = preset.primary_minibatch;
  cfg.secondary_minibatch = preset.secondary_minibatch;
  cfg.resample_primary_paths = preset.resample_primary_paths;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::preset(const std::string& scale) {
  ExperimentConfig cfg;
  if (scale == "paper") {
    cfg.scale = "paper";
    cfg.paths = {50000, 1000, 5000, 5000};
    cfg.epochs = {1000, 500};
    cfg.primary_minibatch = 0;
    cfg.secondary_minibatch = 0;
  } else if (scale == "desk") {
    cfg.scale = "desk";
    cfg.paths = {5000, 256, 1000, 1000};
    cfg.epochs = {100, 100};
    cfg.primary_minibatch = 250;
    cfg.secondary_minibatch = 100;
    cfg.resample_primary_paths = true;
  } else {
    throw ConfigError("unknown scale preset '" + scale + "' (expected paper or desk)");
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  try {
    heston.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config field 'heston': ") + e.what());
  }
  if (grid.n_steps < 1) field_error("grid.n_steps", "expected a positive integer");
  if (!(grid.dt > 0.0)) field_error("grid.dt", "expected a positive number");
  for (auto [name, k] : {std::pair{"instruments.target_strike", target_strike},
                         std::pair{"instruments.call_strike", call_strike},
                         std::pair{"instruments.put_strike", put_strike}}) {
    if (!(k > 0.0)) field_error(name, "strike must be positive");
  }
  if (cost_levels.empty()) field_error("cost_levels", "at least one cost level is required");
  for (double c : cost_levels) {
    if (!(c >= 0.0)) field_error("cost_levels", "cost levels must be non-negative");
  }
  if (paths.primary_train < 1 || paths.pricing_branches < 1 || paths.secondary_train < 1 ||
      paths.secondary_test < 1)
    field_error("paths", "path counts must be positive");
  if (epochs.primary < 0 || epochs.secondary < 0) field_error("epochs", "epoch counts must be >= 0");
  if (!(learning_rate > 0.0)) field_error("training.learning_rate", "expected a positive number");
  if (threads < 1) field_error("threads", "expected a positive integer");
  if (exp1_utility.kind != UtilityKind::Erm) field_error("utility.exp1.kind", "experiment 1 uses ERM");
  if (exp2_utility.kind != UtilityKind::Cvar) field_error("utility.exp2.kind", "experiment 2 uses CVaR");
  try {
    exp1_utility.validate();
  } catch (const std::invalid_argument& e) {
    field_error("utility.exp1", e.what());
  }
  try {
    exp2_utility.validate();
  } catch (const std::invalid_argument& e) {
    field_error("utility.exp2", e.what());
  }
}

Instrument ExperimentConfig::target() const {
  return Instrument::call(target_strike, 0.0, InstrumentRole::Target);
}

std::vector<Instrument> ExperimentConfig::hedge_options() const {
  return {Instrument::call(call_strike, 0.0, InstrumentRole::HedgeOption),
          Instrument::put(put_strike, 0.0, InstrumentRole::HedgeOption)};
}

json config_to_json(const ExperimentConfig& cfg) {
  return {
      {"scale", cfg.scale},
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"heston",
       {{"s0", cfg.heston.s0}, {"v0", cfg.heston.v0}, {"kappa", cfg.heston.kappa},
        {"theta", cfg.heston.theta}, {"sigma", cfg.heston.sigma}, {"rho", cfg.heston.rho}}},
      {"grid", {{"n_steps", cfg.grid.n_steps}, {"dt", cfg.grid.dt}}},
      {"instruments",
       {{"target_strike", cfg.target_strike}, {"call_strike", cfg.call_strike}, {"put_strike", cfg.put_strike}}},
      {"cost_levels", cfg.cost_levels},
      {"paths",
       {{"primary_train", cfg.paths.primary_train}, {"pricing_branches", cfg.paths.pricing_branches},
        {"secondary_train", cfg.paths.secondary_train}, {"secondary_test", cfg.paths.secondary_test}}},
      {"epochs", {{"primary", cfg.epochs.primary}, {"secondary", cfg.epochs.secondary}}},
      {"training",
       {{"learning_rate", cfg.learning_rate}, {"primary_minibatch", cfg.primary_minibatch},
        {"secondary_minibatch", cfg.secondary_minibatch}, {"resample_primary_paths", cfg.resample_primary_paths}}},
      {"utility", {{"exp1", utility_to_json(cfg.exp1_utility)}, {"exp2", utility_to_json(cfg.exp2_utility)}}},
      {"policy", {{"single_token", cfg.single_token}}},
  };
}

ExperimentConfig config_from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  check_keys(j, "", {"scale", "seed", "threads", "heston", "grid", "instruments", "cost_levels", "paths",
                     "epochs", "training", "utility", "policy"});
  if (j.contains("scale")) {
    if (!j.at("scale").is_string()) field_error("scale", "expected \"paper\" or \"desk\"");
    const auto s = j.at("scale").get<std::string>();
    if (s != "paper" && s != "desk") field_error("scale", "expected \"paper\" or \"desk\", got \"" + s + "\"");
    cfg.scale = s;
  }
  if (j.contains("seed")) {
    const json& v = j.at("seed");
    if (!v.is_number_unsigned()) field_error("seed", "expected a non-negative integer");
    cfg.seed = v.get<std::uint64_t>();
  }
  read_count(j, "", "threads", cfg.threads, false);
  if (j.contains("heston")) {
    const json& h = j.at("heston");
    check_keys(h, "heston", {"s0", "v0", "kappa", "theta", "sigma", "rho"});
    read_double(h, "heston", "s0", cfg.heston.s0);
    read_double(h, "heston", "v0", cfg.heston.v0);
    read_double(h, "heston", "kappa", cfg.heston.kappa);
    read_double(h, "heston", "theta", cfg.heston.theta);
    read_double(h, "heston", "sigma", cfg.heston.sigma);
    read_double(h, "heston", "rho", cfg.heston.rho);
  }
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, "grid", {"n_steps", "dt"});
    read_count(g, "grid", "n_steps", cfg.grid.n_steps, false);
    read_double(g, "grid", "dt", cfg.grid.dt);
  }
  if (j.contains("instruments")) {
    const json& i = j.at("instruments");
    check_keys(i, "instruments", {"target_strike", "call_strike", "put_strike"});
    read_double(i, "instruments", "target_strike", cfg.target_strike);
    read_double(i, "instruments", "call_strike", cfg.call_strike);
    read_double(i, "instruments", "put_strike", cfg.put_strike);
  }
  if (j.contains("cost_levels")) {
    const json& c = j.at("cost_levels");
    if (!c.is_array()) field_error("cost_levels", "expected an array of numbers");
    cfg.cost_levels.clear();
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (!c[k].is_number()) field_error("cost_levels[" + std::to_string(k) + "]", "expected a number");
      cfg.cost_levels.push_back(c[k].get<double>());
    }
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_keys(p, "paths", {"primary_train", "pricing_branches", "secondary_train", "secondary_test"});
    read_count(p, "paths", "primary_train", cfg.paths.primary_train, false);
    read_count(p, "paths", "pricing_branches", cfg.paths.pricing_branches, false);
    read_count(p, "paths", "secondary_train", cfg.paths.secondary_train, false);
    read_count(p, "paths", "secondary_test", cfg.paths.secondary_test, false);
  }
  if (j.contains("epochs")) {
    const json& e = j.at("epochs");
    check_keys(e, "epochs", {"primary", "secondary"});
    read_count(e, "epochs", "primary", cfg.epochs.primary, true);
    read_count(e, "epochs", "secondary", cfg.epochs.secondary, true);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, "training", {"learning_rate", "primary_minibatch", "secondary_minibatch", "resample_primary_paths"});
    read_double(t, "training", "learning_rate", cfg.learning_rate);
    read_count(t, "training", "primary_minibatch", cfg.primary_minibatch, true);
    read_count(t, "training", "secondary_minibatch", cfg.secondary_minibatch, true);
    read_bool(t, "training", "resample_primary_paths", cfg.resample_primary_paths);
  }
  if (j.contains("utility")) {
    const json& u = j.at("utility");
    check_keys(u, "utility", {"exp1", "exp2"});
    if (u.contains("exp1")) read_utility(u.at("exp1"), "utility.exp1", cfg.exp1_utility);
    if (u.contains("exp2")) read_utility(u.at("exp2"), "utility.exp2", cfg.exp2_utility);
  }
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    check_keys(p, "policy", {"single_token"});
    read_bool(p, "policy", "single_token", cfg.single_token);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::string& scale_override) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config file " + file.string());
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(file.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": JSON syntax error: " + e.what());
  }
  std::string scale = "desk";
  if (j.is_object() && j.contains("scale") && j.at("scale").is_string()) scale = j.at("scale").get<std::string>();
  ExperimentConfig base = ExperimentConfig::preset(scale == "paper" ? "paper" : "desk");
  ExperimentConfig cfg;
  try {
    cfg = config_from_json(j, base);
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  if (!scale_override.empty()) apply_scale_fields(cfg, ExperimentConfig::preset(scale_override));
  return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("threads");
  return hash_tag(j.dump());
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t SeedPlan::primary_paths(int instrument, int epoch_block) const {
  return derive_seed(master, "primary-paths", static_cast<std::uint64_t>(instrument),
                     static_cast<std::uint64_t>(epoch_block));
}
std::uint64_t SeedPlan::primary_init(int instrument) const {
  return derive_seed(master, "primary-init", static_cast<std::uint64_t>(instrument));
}
std::uint64_t SeedPlan::pricing() const { return derive_seed(master, "pricing-branches"); }
std::uint64_t SeedPlan::secondary_train() const { return derive_seed(master, "secondary-train"); }
std::uint64_t SeedPlan::secondary_test() const { return derive_seed(master, "secondary-test"); }
std::uint64_t SeedPlan::secondary_init(int n_hedge_options) const {
  return derive_seed(master, "secondary-init", static_cast<std::uint64_t>(n_hedge_options));
}
std::uint64_t SeedPlan::secondary_shuffle() const { return derive_seed(master, "secondary-shuffle"); }

json SeedPlan::to_json() const {
  return {{"master", master},
          {"primary_paths", {primary_paths(0), primary_paths(1)}},
          {"primary_init", {primary_init(0), primary_init(1)}},
          {"pricing", pricing()},
          {"secondary_train", secondary_train()},
          {"secondary_test", secondary_test()},
          {"secondary_init", {secondary_init(0), secondary_init(2)}},
          {"secondary_shuffle", secondary_shuffle()}};
}

const MethodResult& CostLevelResult::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw std::out_of_range("no result for method " + name);
}

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg, Logger log)
    : cfg_(std::move(cfg)), seeds_{cfg_.seed}, log_(std::move(log)) {
  cfg_.validate();
  if (log_) {
    auto inner = std::make_shared<Logger>(std::move(log_));
    auto mu = std::make_shared<std::mutex>();
    log_ = [inner, mu](const std::string& msg) {
      std::lock_guard lock(*mu);
      (*inner)(msg);
    };
  }
}

const PathSet& ExperimentRunner::secondary_train_paths() {
  if (!train_paths_)
    train_paths_ = std::make_unique<PathSet>(
        simulate_heston(cfg_.heston, cfg_.grid, cfg_.paths.secondary_train, seeds_.secondary_train()));
  return *train_paths_;
}

const PathSet& ExperimentRunner::secondary_test_paths() {
  if (!test_paths_)
    test_paths_ = std::make_unique<PathSet>(
        simulate_heston(cfg_.heston, cfg_.grid, cfg_.paths.secondary_test, seeds_.secondary_test()));
  return *test_paths_;
}

PathSet ExperimentRunner::primary_paths(int instrument, int epoch) const {
  const int block = cfg_.resample_primary_paths ? epoch : 0;
  return simulate_heston(cfg_.heston, cfg_.grid, cfg_.paths.primary_train,
                         seeds_.primary_paths(instrument, block));
}

const std::vector<std::shared_ptr<const PrimaryTrader>>& ExperimentRunner::primaries(double cost) {
  auto it = primaries_.find(cost);
  if (it != primaries_.end()) return it->second;
  const auto options = cfg_.hedge_options();
  std::vector<std::shared_ptr<const PrimaryTrader>> traders(options.size());
  parallel_for(options.size(), cfg_.threads, [&](std::size_t i) {
    const int id = static_cast<int>(i);
    auto t = PrimaryTrader::create(id, options[i], cost, {seeds_.primary_init(id), true}, cfg_.single_token);
    TrainingSchedule schedule;
    schedule.epochs = cfg_.epochs.primary;
    schedule.minibatch = cfg_.primary_minibatch;
    schedule.adam.learning_rate = cfg_.learning_rate;
    PathSet current = primary_paths(id, 0);
    int current_epoch = 0;
    PathSource source = [&](int epoch) -> const PathSet& {
      if (cfg_.resample_primary_paths && epoch != current_epoch) {
        current = primary_paths(id, epoch);
        current_epoch = epoch;
      }
      return current;
    };
    double last = 0.0;
    try {
      train_primary(t, source, schedule, [&](const UpdateRecord& r) {
        if (r.start_step == 0) last = r.loss;
      });
    } catch (const std::exception& e) {
      throw TrainingError("primary training (" + std::string(to_string(options[i].kind)) + " K=" +
                          format_double(options[i].strike_or_throw()) + ", c=" + cost_label(cost) +
                          "): " + e.what());
    }
    t.metadata = {{"heston", config_to_json(cfg_).at("heston")},
                  {"grid", config_to_json(cfg_).at("grid")},
                  {"seed", cfg_.seed},
                  {"init_seed", seeds_.primary_init(id)},
                  {"pricing_seed", seeds_.pricing()},
                  {"pricing_branches", cfg_.paths.pricing_branches},
                  {"epochs", cfg_.epochs.primary},
                  {"paths", cfg_.paths.primary_train},
                  {"minibatch", cfg_.primary_minibatch},
                  {"learning_rate", cfg_.learning_rate}};
    if (log_)
      log_("primary " + std::string(to_string(options[i].kind)) + " K=" + format_double(options[i].strike_or_throw()) +
           " c=" + cost_label(cost) + ": trained, last j=0 hedge cost " + format_double(last));
    traders[i] = std::make_shared<const PrimaryTrader>(std::move(t));
  });
  return primaries_.emplace(cost, std::move(traders)).first->second;
}

void ExperimentRunner::set_primaries(double cost, std::vector<std::shared_ptr<const PrimaryTrader>> traders) {
  const auto options = cfg_.hedge_options();
  if (traders.size() != options.size())
    throw std::invalid_argument("expected " + std::to_string(options.size()) + " primary traders");
  for (std::size_t i = 0; i < traders.size(); ++i) {
    if (!traders[i]->frozen) throw std::invalid_argument("primary traders must be frozen");
    if (traders[i]->instrument.kind != options[i].kind || traders[i]->instrument.strike != options[i].strike)
      throw std::invalid_argument("primary trader " + std::to_string(i) + " does not match the configured hedge option");
  }
  primaries_[cost] = std::move(traders);
  deep_prices_.erase({cost, false});
  deep_prices_.erase({cost, true});
}

const std::vector<Matrix>& ExperimentRunner::deep_prices(double cost, bool test) {
  const auto key = std::make_pair(cost, test);
  auto it = deep_prices_.find(key);
  if (it != deep_prices_.end()) return it->second;
  const auto& traders = primaries(cost);
  const PathSet& paths = test ? secondary_test_paths() : secondary_train_paths();
  DeepPricing provider(traders, cfg_.heston, cfg_.paths.pricing_branches, seeds_.pricing(), cfg_.threads);
  const auto t0 = std::chrono::steady_clock::now();
  auto tables = provider.price_table(paths);
  if (log_) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_("deep prices c=" + cost_label(cost) + (test ? " test" : " train") + " paths: " +
         format_double(std::round(s * 10) / 10) + "s");
  }
  return deep_prices_.emplace(key, std::move(tables)).first->second;
}

std::vector<Matrix> ExperimentRunner::bs_prices(bool test) {
  BlackScholesPricing provider(cfg_.hedge_options());
  return provider.price_table(test ? secondary_test_paths() : secondary_train_paths());
}

MethodResult ExperimentRunner::run_method(const std::string& method, double cost, const UtilitySpec& utility,
                                          bool with_greeks) {
  std::vector<Instrument> hedges;
  std::vector<Matrix> train_tables, test_tables;
  if (method == kMethodBs) {
    hedges = cfg_.hedge_options();
    train_tables = bs_prices(false);
    test_tables = bs_prices(true);
  } else if (method == kMethodProposed) {
    hedges = cfg_.hedge_options();
    train_tables = deep_prices(cost, false);
    test_tables = deep_prices(cost, true);
  } else if (method != kMethodStock) {
    throw std::invalid_argument("unknown method " + method);
  }
  const PathSet& train = secondary_train_paths();
  const PathSet& test = secondary_test_paths();
  const int n_hedges = static_cast<int>(hedges.size());
  auto trader = SecondaryTrader::create(cfg_.target(), std::move(hedges), cost, cost,
                                        {seeds_.secondary_init(n_hedges), true}, cfg_.single_token);
  SecondarySchedule schedule;
  schedule.epochs = cfg_.epochs.secondary;
  schedule.minibatch = cfg_.secondary_minibatch;
  schedule.shuffle_seed = seeds_.secondary_shuffle();
  schedule.adam.learning_rate = cfg_.learning_rate;
  MethodResult out;
  out.method = method;
  try {
    const auto trained = train_secondary(trader, train, train_tables, utility, schedule);
    out.epoch_costs = trained.epoch_costs;
    out.train_cost = trained.final_cost;
  } catch (const std::exception& e) {
    throw TrainingError("secondary training (" + method + ", c=" + cost_label(cost) + "): " + e.what());
  }
  out.evaluation = evaluate_secondary(trader, test, test_tables, utility);
  out.hedge_cost = out.evaluation.hedge_cost;
  if (with_greeks) out.greeks = greek_bands(trader, test, out.evaluation);
  out.trader = std::move(trader);
  if (log_)
    log_("secondary " + method + " c=" + cost_label(cost) + " " + utility.label() + ": train " +
         format_double(out.train_cost) + ", test " + format_double(out.hedge_cost));
  return out;
}

namespace {

ExperimentReport run_methods(ExperimentRunner& runner, const std::string& name, const UtilitySpec& utility,
                             const std::vector<std::string>& methods, bool greeks) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = runner.config();
  runner.secondary_train_paths();
  runner.secondary_test_paths();
  const bool deep = std::find(methods.begin(), methods.end(), kMethodProposed) != methods.end();
  if (deep) {
    for (double c : cfg.cost_levels) {
      runner.deep_prices(c, false);
      runner.deep_prices(c, true);
    }
  }
  struct Task {
    std::size_t row;
    std::string method;
  };
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < cfg.cost_levels.size(); ++r) {
    for (const auto& m : methods) tasks.push_back({r, m});
  }
  std::vector<MethodResult> results(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    results[i] = runner.run_method(tasks[i].method, cfg.cost_levels[tasks[i].row], utility, greeks);
  });
  ExperimentReport report;
  report.experiment = name;
  report.utility = utility.label();
  report.config_hash = config_hash(cfg);
  report.seed = cfg.seed;
  for (double c : cfg.cost_levels) report.rows.push_back({c, {}});
  for (std::size_t i = 0; i < tasks.size(); ++i) report.rows[tasks[i].row].methods.push_back(std::move(results[i]));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace

ExperimentReport ExperimentRunner::run_experiment1() {
  return run_methods(*this, "exp1", cfg_.exp1_utility, {kMethodBs, kMethodStock, kMethodProposed}, false);
}

ExperimentReport ExperimentRunner::run_experiment2() {
  return run_methods(*this, "exp2", cfg_.exp2_utility, {kMethodStock, kMethodProposed}, true);
}

ExperimentReport run_experiment1(const ExperimentConfig& cfg, const Logger& log) {
  ExperimentRunner runner(cfg, log);
  return runner.run_experiment1();
}

ExperimentReport run_experiment2(const ExperimentConfig& cfg, const Logger& log) {
  ExperimentRunner runner(cfg, log);
  return runner.run_experiment2();
}

std::string cost_label(double cost) {
  std::ostringstream os;
  os << cost;
  return os.str();
}

std::vector<TableRow> table_rows(const ExperimentReport& report) {
  std::vector<TableRow> rows;
  for (const auto& r : report.rows) {
    for (const auto& m : r.methods) rows.push_back({r.cost, m.method, m.hedge_cost});
  }
  return rows;
}

void write_table_csv(const std::filesystem::path& file, const std::vector<TableRow>& rows) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << "cost_level,method,hedge_cost\n";
  os << std::setprecision(17);
  for (const auto& r : rows) os << cost_label(r.cost_level) << ',' << r.method << ',' << r.hedge_cost << '\n';
}

std::vector<TableRow> read_table_csv(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  if (!std::getline(is, line) || line != "cost_level,method,hedge_cost")
    throw std::runtime_error(file.string() + ": expected header cost_level,method,hedge_cost");
  std::vector<TableRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cost, method, value;
    if (!std::getline(ss, cost, ',') || !std::getline(ss, method, ',') || !std::getline(ss, value))
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": malformed row");
    try {
      rows.push_back({std::stod(cost), method, std::stod(value)});
    } catch (const std::exception&) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

std::string render_table(const std::vector<TableRow>& rows, const std::string& title) {
  std::vector<double> costs;
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    if (std::find(costs.begin(), costs.end(), r.cost_level) == costs.end()) costs.push_back(r.cost_level);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  auto display = [](const std::string& m) {
    if (m == kMethodBs) return std::string("Black-Scholes");
    if (m == kMethodStock) return std::string("Stock-only");
    if (m == kMethodProposed) return std::string("Proposed");
    return m;
  };
  const std::string first = "Proportional cost (c0, ci)";
  std::size_t width = 14;
  for (const auto& m : methods) width = std::max(width, display(m).size() + 2);
  std::ostringstream os;
  os << title << '\n';
  os << std::left << std::setw(static_cast<int>(first.size() + 2)) << first;
  for (const auto& m : methods) os << std::right << std::setw(static_cast<int>(width)) << display(m);
  os << '\n';
  for (double c : costs) {
    std::ostringstream label;
    label << cost_label(c) << " (" << cost_label(c * 100) << "%)";
    os << std::left << std::setw(static_cast<int>(first.size() + 2)) << label.str();
    for (const auto& m : methods) {
      std::string cell = "-";
      for (const auto& r : rows) {
        if (r.cost_level == c && r.method == m) {
          std::ostringstream v;
          v << std::fixed << std::setprecision(6) << r.hedge_cost;
          cell = v.str();
        }
      }
      os << std::right << std::setw(static_cast<int>(width)) << cell;
    }
    os << '\n';
  }
  return os.str();
}

void write_report(ExperimentReport& report, const ExperimentConfig& cfg, const SeedPlan& seeds,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  report.artifacts.clear();
  write_table_csv(dir / "table.csv", table_rows(report));
  report.artifacts.push_back("table.csv");
  json rows = json::array();
  for (const auto& r : report.rows) {
    json methods = json::object();
    for (const auto& m : r.methods) {
      const std::string stem = report.experiment + "_c" + cost_label(r.cost) + "_" + m.method;
      write_pl_csv(dir / ("pl_" + stem + ".csv"), m.evaluation.pl);
      report.artifacts.push_back("pl_" + stem + ".csv");
      if (!m.greeks.empty()) {
        write_greeks_csv(dir / ("greeks_" + stem + ".csv"), m.greeks);
        report.artifacts.push_back("greeks_" + stem + ".csv");
      }
      methods[m.method] = {{"hedge_cost", m.hedge_cost}, {"train_cost", m.train_cost}, {"epoch_costs", m.epoch_costs}};
    }
    rows.push_back({{"cost_level", r.cost}, {"methods", methods}});
  }
  report.artifacts.push_back("report.json");
  const json doc = {{"experiment", report.experiment},
                    {"utility", report.utility},
                    {"config_hash", hex64(report.config_hash)},
                    {"seed", report.seed},
                    {"sub_seeds", seeds.to_json()},
                    {"wall_seconds", report.wall_seconds},
                    {"config", config_to_json(cfg)},
                    {"rows", rows},
                    {"artifacts", report.artifacts}};
  std::ofstream os(dir / "report.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "report.json").string());
  os << doc.dump(2) << '\n';
}

}  // namespace nhedge
