#include <doctest.h>

#include "nhedge/experiment.hpp"

#include <filesystem>
#include <fstream>

using namespace nhedge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nhedge_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream(file) << text;
}

std::string error_of(const fs::path& file) {
  try {
    load_config(file);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ExperimentConfig tiny() {
  auto cfg = ExperimentConfig::preset("desk");
  cfg.paths = {40, 4, 30, 30};
  cfg.epochs = {1, 2};
  cfg.primary_minibatch = 0;
  cfg.secondary_minibatch = 0;
  cfg.resample_primary_paths = false;
  cfg.grid.n_steps = 4;
  cfg.cost_levels = {0.001};
  return cfg;
}

}  // namespace

TEST_CASE("presets") {
  const auto paper = ExperimentConfig::preset("paper");
  CHECK(paper.paths.primary_train == 50000);
  CHECK(paper.paths.pricing_branches == 1000);
  CHECK(paper.paths.secondary_train == 5000);
  CHECK(paper.paths.secondary_test == 5000);
  CHECK(paper.epochs.primary == 1000);
  CHECK(paper.epochs.secondary == 500);
  CHECK(paper.learning_rate == 1e-3);
  CHECK(paper.cost_levels == std::vector<double>{0.0001, 0.0005, 0.001, 0.005, 0.01});
  CHECK(paper.grid.n_steps == 20);
  CHECK(paper.heston.rho == -0.7);
  CHECK_NOTHROW(paper.validate());
  CHECK_NOTHROW(ExperimentConfig::preset("desk").validate());
  CHECK_THROWS_AS(ExperimentConfig::preset("huge"), ConfigError);
  const auto h = paper.hedge_options();
  REQUIRE(h.size() == 2);
  CHECK(h[0].kind == InstrumentKind::EuropeanCall);
  CHECK(h[0].strike == 1.02);
  CHECK(h[1].kind == InstrumentKind::EuropeanPut);
  CHECK(h[1].strike == 0.98);
  CHECK(paper.target().role == InstrumentRole::Target);
}

TEST_CASE("config json round trip and hash") {
  const auto cfg = ExperimentConfig::preset("paper");
  const auto back = config_from_json(config_to_json(cfg), ExperimentConfig::preset("desk"));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));

  auto threads = cfg;
  threads.threads = 8;
  CHECK(config_hash(threads) == config_hash(cfg));
  auto seed = cfg;
  seed.seed += 1;
  CHECK(config_hash(seed) != config_hash(cfg));
  auto cost = cfg;
  cost.cost_levels.back() = 0.02;
  CHECK(config_hash(cost) != config_hash(cfg));
  CHECK(hex64(0x1f).size() == 16);
  CHECK(hex64(0x1f) == "000000000000001f");
}

TEST_CASE("config files") {
  const auto dir = scratch("config");
  write_text(dir / "ok.json", R"({
    // comments are allowed
    "scale": "paper",
    "seed": 7,
    "heston": {"rho": -0.5},
    "cost_levels": [0.001, 0.01]
  })");
  const auto cfg = load_config(dir / "ok.json");
  CHECK(cfg.seed == 7);
  CHECK(cfg.heston.rho == -0.5);
  CHECK(cfg.heston.kappa == 1.0);
  CHECK(cfg.paths.primary_train == 50000);
  CHECK(cfg.cost_levels == std::vector<double>{0.001, 0.01});
  const auto desk = load_config(dir / "ok.json", "desk");
  CHECK(desk.paths.primary_train == ExperimentConfig::preset("desk").paths.primary_train);
  CHECK(desk.seed == 7);
  CHECK(desk.heston.rho == -0.5);

  write_text(dir / "unknown.json", R"({"heston": {"rhoo": 0.1}})");
  CHECK(error_of(dir / "unknown.json").find("heston.rhoo") != std::string::npos);
  write_text(dir / "type.json", R"({"paths": {"secondary_train": "many"}})");
  CHECK(error_of(dir / "type.json").find("paths.secondary_train") != std::string::npos);
  write_text(dir / "range.json", R"({"heston": {"rho": 2.0}})");
  CHECK(error_of(dir / "range.json").find("rho") != std::string::npos);
  write_text(dir / "negative.json", R"({"cost_levels": [0.001, -0.01]})");
  CHECK_FALSE(error_of(dir / "negative.json").empty());
  write_text(dir / "syntax.json", "{\n  \"seed\": 1,\n  \"scale\" \"desk\"\n}");
  const auto syntax = error_of(dir / "syntax.json");
  CHECK(syntax.find("syntax.json:3:") != std::string::npos);
  write_text(dir / "utility.json", R"({"utility": {"exp1": {"kind": "cvar", "alpha": 0.1}}})");
  CHECK_FALSE(error_of(dir / "utility.json").empty());
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("sub-seeds are distinct and reproducible") {
  const SeedPlan a{42};
  const SeedPlan b{42};
  const SeedPlan c{43};
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_json() != c.to_json());
  const std::vector<std::uint64_t> all{a.primary_paths(0), a.primary_paths(1), a.primary_paths(0, 1),
                                       a.primary_init(0),  a.primary_init(1),  a.pricing(),
                                       a.secondary_train(), a.secondary_test(), a.secondary_init(0),
                                       a.secondary_init(2), a.secondary_shuffle()};
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) CHECK(all[i] != all[j]);
}

TEST_CASE("cost labels, tables and rendering") {
  CHECK(cost_label(0.0001) == "0.0001");
  CHECK(cost_label(0.0005) == "0.0005");
  CHECK(cost_label(0.01) == "0.01");
  const std::vector<TableRow> rows{{0.0001, "black-scholes", 0.017436},
                                   {0.0001, "proposed", 0.1 / 3.0},
                                   {0.01, "black-scholes", 0.021726},
                                   {0.01, "proposed", 0.022791}};
  const auto dir = scratch("table");
  write_table_csv(dir / "table.csv", rows);
  std::ifstream in(dir / "table.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "cost_level,method,hedge_cost");
  const auto back = read_table_csv(dir / "table.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].cost_level == rows[i].cost_level);
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].hedge_cost == rows[i].hedge_cost);
  }
  CHECK_THROWS(read_table_csv(dir / "absent.csv"));
  fs::remove_all(dir);

  const auto text = render_table(rows, "Hedge cost");
  CHECK(text.find("Hedge cost") != std::string::npos);
  CHECK(text.find("Black-Scholes") < text.find("Proposed"));
  CHECK(text.find("0.017436") != std::string::npos);
  CHECK(text.find("0.033333") != std::string::npos);
  CHECK(text.find("0.0001") < text.find("0.01 "));
}

TEST_CASE("tiny end-to-end run is deterministic") {
  const auto cfg = tiny();
  std::vector<std::string> lines;
  auto r1 = run_experiment1(cfg, [&](const std::string& s) { lines.push_back(s); });
  auto r2 = run_experiment1(cfg);
  CHECK_FALSE(lines.empty());
  CHECK(r1.experiment == "exp1");
  CHECK(r1.utility == "ERM(1)");
  REQUIRE(r1.rows.size() == 1);
  const auto t1 = table_rows(r1);
  const auto t2 = table_rows(r2);
  REQUIRE(t1.size() == 3);
  CHECK(t1[0].method == "black-scholes");
  CHECK(t1[1].method == "stock-only");
  CHECK(t1[2].method == "proposed");
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].hedge_cost == t2[i].hedge_cost);
    CHECK(std::isfinite(t1[i].hedge_cost));
  }
  CHECK(r1.rows[0].method("proposed").epoch_costs.size() == 2);
  CHECK_THROWS(r1.rows[0].method("nonsense"));

  ExperimentRunner runner(cfg);
  auto r3 = runner.run_experiment2();
  CHECK(r3.utility == "CVaR(0.1)");
  const auto& p = r3.rows[0].method("proposed");
  CHECK(p.greeks.size() == static_cast<std::size_t>(cfg.grid.n_steps) * 4);
  const auto& deep = runner.deep_prices(0.001, true);
  REQUIRE(deep.size() == 2);
  CHECK(deep[0].rows() == cfg.paths.secondary_test);
  CHECK(&runner.deep_prices(0.001, true) == &deep);

  const auto dir = scratch("report");
  write_report(r3, cfg, runner.seeds(), dir);
  CHECK(fs::exists(dir / "table.csv"));
  CHECK(fs::exists(dir / "report.json"));
  for (const auto& a : r3.artifacts) CHECK(fs::exists(dir / a));
  std::ifstream rj(dir / "report.json");
  const auto j = nlohmann::json::parse(rj);
  CHECK(j.at("config_hash") == hex64(config_hash(cfg)));
  CHECK(j.contains("sub_seeds"));
  CHECK(read_table_csv(dir / "table.csv").size() == 2);
  fs::remove_all(dir);

  // Installed primaries must match the configured instruments.
  ExperimentRunner other(cfg);
  auto wrong = runner.primaries(0.001);
  std::swap(wrong[0], wrong[1]);
  CHECK_THROWS(other.set_primaries(0.001, wrong));
  CHECK_NOTHROW(other.set_primaries(0.001, runner.primaries(0.001)));
}
