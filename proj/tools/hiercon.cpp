// hiercon: solve and simulate hierarchical contracting models.
//
//   hiercon <scenario> [--config FILE] [--sweep VAR:FROM:TO:COUNT] [--out PATH]
//                      [--format csv|json] [--seed N] [--paths N] [--steps N] ...
//   hiercon compare A.ini B.ini [--out PATH] [--format csv|json]
//
// Exit codes: 0 ok, 2 bad configuration, 3 infeasible instance, 4 I/O error.

#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hiercon/reporting.hpp"

namespace {

using hiercon::report::ConfigError;
using hiercon::report::RunConfig;

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIO = 4;

/// Flag -> configuration key, applied in declaration order after the file.
struct Override {
  const char* flag;
  const char* key;
  const char* help;
  std::optional<std::string> value;
};

RunConfig build_config(const std::optional<std::string>& path, const std::vector<Override>& overrides) {
  RunConfig cfg = path ? hiercon::report::load_config(*path) : RunConfig{};
  for (const auto& o : overrides) {
    if (o.value) cfg.set(o.key, *o.value);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical principal-agent contracting: solver and Monte Carlo simulator"};
  app.set_version_flag("--version", std::string(hiercon::report::kVersion));

  std::string command;
  std::vector<std::string> inputs;
  std::optional<std::string> config_path;
  app.add_option("scenario", command,
                 "two_level | dc | ability | pc | separate_reporting | three_level | simulate | compare")
      ->required();
  app.add_option("inputs", inputs, "For compare: the two configuration files A and B");
  app.add_option("--config", config_path, "INI configuration file");

  std::vector<Override> overrides{
      {"--regime", "regime", "sophisticated | linear | direct", {}},
      {"--params", "firm.params", "Identical workers k,R,sigma", {}},
      {"--workers", "firm.workers", "Total workers including the manager", {}},
      {"--horizon", "firm.horizon", "Contract horizon T", {}},
      {"--m", "ability.m", "Manager help coefficient", {}},
      {"--m-tilde", "ability.m_tilde", "Manager self-penalty in [0,1)", {}},
      {"--teams", "three_level.teams", "Number of teams (three_level)", {}},
      {"--agents-per-team", "three_level.agents_per_team", "Agents per team (three_level)", {}},
      {"--variant", "separate.variant", "b0 | pc0 (separate_reporting)", {}},
      {"--sequence", "separate.sequence", "Comma-separated decreasing positive values", {}},
      {"--sweep", "sweep.spec", "VAR:FROM:TO:COUNT", {}},
      {"--grid", "grid.spec", "Second sweep VAR:FROM:TO:COUNT, nested inside --sweep", {}},
      {"--seed", "mc.seed", "Monte Carlo seed", {}},
      {"--paths", "mc.paths", "Monte Carlo paths", {}},
      {"--steps", "mc.steps", "Euler steps", {}},
      {"--antithetic", "mc.antithetic", "on | off", {}},
      {"--refinement", "mc.refinement", "Gaussian draws per Euler step", {}},
      {"--threads", "mc.threads", "Worker threads (default: HIERCON_THREADS or all cores)", {}},
      {"--effort-factor", "mc.effort_factor", "Agents exert this multiple of the best response", {}},
      {"--rates", "input.rates", "JSON output of an earlier run to evaluate instead of optimizing", {}},
      {"--out", "output.path", "Output file (default stdout)", {}},
      {"--format", "output.format", "csv | json", {}},
  };
  for (auto& o : overrides) app.add_option(o.flag, o.value, o.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (command == "compare") {
      if (inputs.size() != 2) throw ConfigError("compare needs exactly two configuration files");
      RunConfig a = build_config(inputs[0], overrides);
      RunConfig b = build_config(inputs[1], overrides);
      const auto table = hiercon::report::compare(a, b);
      nlohmann::json meta{{"version", hiercon::report::kVersion},
                          {"compare", {{"a", a.to_json()}, {"b", b.to_json()}}}};
      hiercon::report::write_output(table, meta, a);
      return 0;
    }
    if (!inputs.empty()) throw ConfigError(fmt::format("unexpected argument '{}'", inputs.front()));
    RunConfig cfg = build_config(config_path, overrides);
    cfg.scenario = hiercon::report::parse_scenario(command);
    const auto table = hiercon::report::run(cfg);
    hiercon::report::write_output(table, hiercon::report::make_meta(cfg), cfg);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "hiercon: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const hiercon::report::IOError& e) {
    std::cerr << "hiercon: I/O error: " << e.what() << '\n';
    return kExitIO;
  } catch (const hiercon::InfeasibleError& e) {
    std::cerr << "hiercon: infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const hiercon::DomainError& e) {
    std::cerr << "hiercon: infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "hiercon: error: " << e.what() << '\n';
    return 1;
  }
}
