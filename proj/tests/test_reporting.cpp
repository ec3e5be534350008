#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hiercon/reporting.hpp"

using namespace hiercon;
using namespace hiercon::report;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hiercon_test_" + name);
}

RunConfig workers_sweep(Regime regime) {
  RunConfig c;
  c.regime = regime;
  c.sweep = Sweep::parse("workers:2:30:29");
  return c;
}

}  // namespace

TEST_CASE("sweep parsing") {
  const auto s = Sweep::parse("k:10:20:3");
  CHECK(s.variable == "k");
  CHECK(s.values() == std::vector<double>{10.0, 15.0, 20.0});
  CHECK(Sweep::parse("sigma:2:2:1").values() == std::vector<double>{2.0});
  CHECK_THROWS_AS(Sweep::parse("k:10:20"), ConfigError);
  CHECK_THROWS_AS(Sweep::parse("k:a:20:3"), ConfigError);
  CHECK_THROWS_AS(Sweep::parse("bogus:1:2:3").validate(), ConfigError);
  CHECK_THROWS_AS(Sweep::parse("k:1:2:0").validate(), ConfigError);
  CHECK_THROWS_AS(Sweep::parse("workers:1.5:3:2").validate(), ConfigError);
}

TEST_CASE("scenario names") {
  for (auto s : {Scenario::two_level, Scenario::dc, Scenario::ability, Scenario::pc, Scenario::separate_reporting,
                 Scenario::three_level, Scenario::simulate}) {
    CHECK(parse_scenario(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_scenario("four_level"), ConfigError);
}

TEST_CASE("config keys and INI files") {
  RunConfig c;
  c.set("firm.k", "10");
  c.set("mc.paths", "500");
  c.set("regime", "linear");
  CHECK(c.workers.k == 10.0);
  CHECK(c.mc.paths == 500);
  CHECK(c.regime == Regime::linear);
  CHECK_THROWS_AS(c.set("firm.colour", "red"), ConfigError);
  CHECK_THROWS_AS(c.set("firm.k", "ten"), ConfigError);

  const auto path = temp_file("cfg.ini");
  {
    std::ofstream f(path);
    f << "scenario = dc\n[firm]\nparams = 1,1,1\nworkers = 1\n[output]\nformat = json\n";
  }
  const auto loaded = load_config(path.string());
  CHECK(loaded.scenario == Scenario::dc);
  CHECK(loaded.workers.k == 1.0);
  CHECK(loaded.total_workers == 1);
  CHECK(loaded.format == "json");
  {
    std::ofstream f(path);
    f << "[firm]\nbogus = 3\n";
  }
  CHECK_THROWS_AS(load_config(path.string()), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path.string()), IOError);
}

TEST_CASE("direct contracting with unit parameters") {
  RunConfig c;
  c.scenario = Scenario::dc;
  c.set("firm.params", "1,1,1");
  c.total_workers = 1;
  const auto t = run(c);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.number(0, "principal_value") == doctest::Approx(0.25));
  CHECK(t.columns == sweep_row_columns());
}

TEST_CASE("worker sweep covers 2..30 and runs fast") {
  const auto start = std::chrono::steady_clock::now();
  for (auto regime : {Regime::sophisticated, Regime::linear, Regime::direct}) {
    const auto t = run(workers_sweep(regime));
    REQUIRE(t.rows.size() == 29);
    for (std::size_t i = 0; i < 29; ++i) CHECK(t.number(i, "total_workers") == 2.0 + i);
    CHECK(t.text(0, "regime") == std::string(to_string(regime)));
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("number formatting and CSV layout") {
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(476.19047619047619) == "476.19047619");
  CHECK(format_number(12345678.9012345) == "12345678.9012");
  CHECK(format_number(std::nan("")).empty());

  Table t;
  t.columns = {"a", "b"};
  t.rows = {{1.5, std::string("x")}, {std::nan(""), std::string("y")}};
  std::ostringstream os;
  write_csv(t, os);
  CHECK(os.str() == "a,b\n1.5,x\n,y\n");
  CHECK(os.str().find('\r') == std::string::npos);
}

TEST_CASE("JSON round trip reproduces the reported values") {
  for (auto scenario : {Scenario::two_level, Scenario::ability}) {
    for (auto regime : {Regime::sophisticated, Regime::linear}) {
      RunConfig c;
      c.scenario = scenario;
      c.regime = regime;
      c.ability = {0.6, 0.1};
      c.total_workers = 6;
      c.format = "json";
      const auto first = run(c);
      const auto path = temp_file("rates.json");
      c.out_path = path.string();
      write_output(first, make_meta(c), c);

      c.rates_path = path.string();
      const auto second = run(c);
      REQUIRE(second.rows.size() == first.rows.size());
      for (const auto& col : {"z_b", "gamma_b", "principal_value", "mean_agent_rate", "manager_effort",
                              "pps_gain_vs_linear", "value_gain_vs_dc"}) {
        CHECK(format_number(second.number(0, col)) == format_number(first.number(0, col)));
      }
      std::filesystem::remove(path);
    }
  }
}

TEST_CASE("JSON layout") {
  RunConfig c;
  c.total_workers = 3;
  std::ostringstream os;
  write_json(run(c), make_meta(c), os);
  const auto j = nlohmann::json::parse(os.str());
  CHECK(j["meta"]["version"] == std::string(kVersion));
  CHECK(j["meta"]["config"]["scenario"] == "two_level");
  REQUIRE(j["rows"].size() == 1);
  CHECK(j["rows"][0]["total_workers"] == 3.0);
  CHECK(j["rows"][0]["z2"].is_null());
}

TEST_CASE("compare") {
  auto soph = workers_sweep(Regime::sophisticated);
  auto lin = workers_sweep(Regime::linear);
  auto dc = workers_sweep(Regime::direct);

  const auto same = compare(soph, soph);
  for (std::size_t i = 0; i < same.rows.size(); ++i) {
    CHECK(same.number(i, "delta_principal_value") == 0.0);
    CHECK(same.number(i, "rel_principal_value") == 0.0);
  }

  const auto sl = compare(soph, lin);
  REQUIRE(sl.rows.size() == 29);
  for (std::size_t i = 0; i < 29; ++i) CHECK(sl.number(i, "delta_principal_value") >= 0.0);
  CHECK(sl.text(0, "regime_a") == "sophisticated");
  CHECK(sl.text(0, "regime_b") == "linear");

  const auto sd = compare(soph, dc);
  for (std::size_t i = 0; i < 29; ++i) {
    CHECK(sd.number(i, "delta_mean_agent_rate") > 0.0);
    CHECK(sd.number(i, "delta_z_b") < 0.0);
    CHECK(sd.number(i, "delta_principal_value") < 0.0);
  }

  auto shorter = soph;
  shorter.sweep = Sweep::parse("workers:2:10:9");
  CHECK_THROWS_AS(compare(soph, shorter), ConfigError);
  auto other = soph;
  other.scenario = Scenario::separate_reporting;
  CHECK_THROWS_AS(compare(soph, other), ConfigError);
}

TEST_CASE("separate reporting and simulate tables") {
  RunConfig c;
  c.scenario = Scenario::separate_reporting;
  c.total_workers = 4;
  const auto t = run(c);
  REQUIRE(t.rows.size() == 5);
  for (std::size_t i = 1; i < 5; ++i) CHECK(t.number(i, "principal_value") > t.number(i - 1, "principal_value"));
  CHECK(t.number(4, "gap_to_dc") < 1e-4);

  RunConfig s;
  s.scenario = Scenario::simulate;
  s.horizon = 1e-8;
  s.mc.paths = 2000;
  s.mc.steps = 32;
  const auto m = run(s);
  REQUIRE(m.rows.size() == 4);
  CHECK(m.text(0, "quantity") == "manager_utility");
  CHECK(m.text(1, "quantity") == "agent_utility_1");
  CHECK(m.text(2, "quantity") == "principal_payoff");
  CHECK(m.text(3, "quantity") == "realized_qv");
  CHECK(m.number(0, "target") == -1.0);
  CHECK(m.number(0, "paths") == 2000.0);
}

TEST_CASE("invalid configurations") {
  RunConfig c;
  c.total_workers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  RunConfig d;
  d.sweep = Sweep::parse("teams:1:3:3");
  CHECK_THROWS_AS(d.validate(), ConfigError);
  RunConfig e;
  e.format = "xml";
  CHECK_THROWS_AS(e.validate(), ConfigError);
}
