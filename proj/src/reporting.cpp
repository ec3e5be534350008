#include "hiercon/reporting.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace hiercon::report {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view key, std::string_view text) {
  text = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, text));
  }
  return v;
}

std::size_t parse_count(std::string_view key, std::string_view text) {
  text = trim(text);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, text));
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "off" || text == "no" || text == "0") return false;
  throw ConfigError(fmt::format("{}: expected on/off, got '{}'", key, text));
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_double(key, text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

/// Exact integer from a sweep value.
std::size_t as_count(std::string_view variable, double value) {
  const double r = std::round(value);
  if (!(value >= 0.0) || std::abs(value - r) > 1e-9 * std::max(1.0, r)) {
    throw ConfigError(fmt::format("{} must be a non-negative integer, got {}", variable, value));
  }
  return static_cast<std::size_t>(r);
}

bool is_integer_variable(std::string_view v) {
  return v == "workers" || v == "teams" || v == "agents_per_team";
}

Sweep& sweep_slot(std::optional<Sweep>& slot) {
  if (!slot) slot.emplace();
  return *slot;
}

}  // namespace

// --- scenarios and sweeps ---------------------------------------------------

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::two_level: return "two_level";
    case Scenario::dc: return "dc";
    case Scenario::ability: return "ability";
    case Scenario::pc: return "pc";
    case Scenario::separate_reporting: return "separate_reporting";
    case Scenario::three_level: return "three_level";
    case Scenario::simulate: return "simulate";
  }
  return "?";
}

Scenario parse_scenario(std::string_view name) {
  for (auto s : {Scenario::two_level, Scenario::dc, Scenario::ability, Scenario::pc,
                 Scenario::separate_reporting, Scenario::three_level, Scenario::simulate}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError(fmt::format("unknown scenario '{}'", name));
}

const std::vector<std::string>& sweep_variables() {
  static const std::vector<std::string> names{"workers", "k",       "R",     "sigma",          "horizon",
                                              "m",       "m_tilde", "teams", "agents_per_team"};
  return names;
}

Sweep Sweep::parse(std::string_view spec) {
  std::vector<std::string_view> parts;
  while (true) {
    const auto colon = spec.find(':');
    parts.push_back(spec.substr(0, colon));
    if (colon == std::string_view::npos) break;
    spec.remove_prefix(colon + 1);
  }
  if (parts.size() != 4) throw ConfigError("sweep must look like VAR:FROM:TO:COUNT");
  Sweep s;
  s.variable = std::string(trim(parts[0]));
  s.from = parse_double("sweep from", parts[1]);
  s.to = parse_double("sweep to", parts[2]);
  s.count = parse_count("sweep count", parts[3]);
  s.validate();
  return s;
}

void Sweep::validate() const {
  const auto& names = sweep_variables();
  if (std::find(names.begin(), names.end(), variable) == names.end()) {
    throw ConfigError(fmt::format("unknown sweep variable '{}'", variable));
  }
  if (count < 1) throw ConfigError("sweep count must be >= 1");
  if (!std::isfinite(from) || !std::isfinite(to)) throw ConfigError("sweep bounds must be finite");
  if (count == 1 && from != to) throw ConfigError("a single-point sweep needs from == to");
  if (is_integer_variable(variable)) {
    for (double v : values()) as_count(variable, v);
  }
}

std::vector<double> Sweep::values() const {
  std::vector<double> v;
  for (std::size_t i = 0; i < count; ++i) {
    v.push_back(count == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return v;
}

// --- configuration ----------------------------------------------------------

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k(trim(key));
  const std::string_view v = trim(value);
  if (k == "scenario") {
    scenario = parse_scenario(v);
  } else if (k == "regime") {
    try {
      regime = parse_regime(v);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  } else if (k == "firm.k") {
    workers.k = parse_double(k, v);
  } else if (k == "firm.R") {
    workers.R = parse_double(k, v);
  } else if (k == "firm.sigma") {
    workers.sigma = parse_double(k, v);
  } else if (k == "firm.params") {
    const auto p = parse_list(k, v);
    if (p.size() != 3) throw ConfigError("params must be k,R,sigma");
    workers = {p[0], p[1], p[2]};
  } else if (k == "firm.workers") {
    total_workers = parse_count(k, v);
  } else if (k == "firm.horizon") {
    horizon = parse_double(k, v);
  } else if (k == "manager.k") {
    manager.k = parse_double(k, v);
  } else if (k == "manager.R") {
    manager.R = parse_double(k, v);
  } else if (k == "manager.sigma") {
    manager.sigma = parse_double(k, v);
  } else if (k == "ability.m") {
    ability.m = parse_double(k, v);
  } else if (k == "ability.m_tilde") {
    ability.m_tilde = parse_double(k, v);
  } else if (k == "three_level.teams") {
    teams = parse_count(k, v);
  } else if (k == "three_level.agents_per_team") {
    agents_per_team = parse_count(k, v);
  } else if (k == "separate.variant") {
    if (v == "b0") {
      variant = SeparateVariant::b0;
    } else if (v == "pc0") {
      variant = SeparateVariant::pc0;
    } else {
      throw ConfigError(fmt::format("unknown separate-reporting variant '{}'", v));
    }
  } else if (k == "separate.sequence") {
    sequence = parse_list(k, v);
  } else if (k == "sweep.spec") {
    sweep = Sweep::parse(v);
  } else if (k == "sweep.variable") {
    sweep_slot(sweep).variable = std::string(v);
  } else if (k == "sweep.from") {
    sweep_slot(sweep).from = parse_double(k, v);
  } else if (k == "sweep.to") {
    sweep_slot(sweep).to = parse_double(k, v);
  } else if (k == "sweep.count") {
    sweep_slot(sweep).count = parse_count(k, v);
  } else if (k == "grid.spec") {
    grid = Sweep::parse(v);
  } else if (k == "grid.variable") {
    sweep_slot(grid).variable = std::string(v);
  } else if (k == "grid.from") {
    sweep_slot(grid).from = parse_double(k, v);
  } else if (k == "grid.to") {
    sweep_slot(grid).to = parse_double(k, v);
  } else if (k == "grid.count") {
    sweep_slot(grid).count = parse_count(k, v);
  } else if (k == "mc.paths") {
    mc.paths = parse_count(k, v);
  } else if (k == "mc.steps") {
    mc.steps = parse_count(k, v);
  } else if (k == "mc.seed") {
    mc.seed = parse_count(k, v);
  } else if (k == "mc.antithetic") {
    mc.antithetic = parse_bool(k, v);
  } else if (k == "mc.refinement") {
    mc.refinement = parse_count(k, v);
  } else if (k == "mc.threads") {
    mc.threads = static_cast<unsigned>(parse_count(k, v));
  } else if (k == "mc.effort_factor") {
    effort_factor = parse_double(k, v);
  } else if (k == "output.path") {
    out_path = std::string(v);
  } else if (k == "output.format") {
    format = std::string(v);
  } else if (k == "input.rates") {
    rates_path = std::string(v);
  } else {
    throw ConfigError(fmt::format("unknown configuration key '{}'", k));
  }
}

void RunConfig::set_variable(std::string_view variable, double value) {
  if (variable == "workers") {
    total_workers = as_count(variable, value);
  } else if (variable == "k") {
    workers.k = value;
  } else if (variable == "R") {
    workers.R = value;
  } else if (variable == "sigma") {
    workers.sigma = value;
  } else if (variable == "horizon") {
    horizon = value;
  } else if (variable == "m") {
    ability.m = value;
  } else if (variable == "m_tilde") {
    ability.m_tilde = value;
  } else if (variable == "teams") {
    teams = as_count(variable, value);
  } else if (variable == "agents_per_team") {
    agents_per_team = as_count(variable, value);
  } else {
    throw ConfigError(fmt::format("unknown sweep variable '{}'", variable));
  }
}

FirmSpec RunConfig::firm() const {
  WorkerParams m = workers;
  if (manager.k) m.k = *manager.k;
  if (manager.R) m.R = *manager.R;
  if (manager.sigma) m.sigma = *manager.sigma;
  FirmSpec f;
  f.manager = m;
  f.agents.assign(total_workers > 0 ? total_workers - 1 : 0, workers);
  f.T = horizon;
  return f;
}

OrgSpec RunConfig::org() const {
  OrgSpec o = OrgSpec::identical(workers, teams, agents_per_team, horizon);
  o.top_manager = firm().manager;
  return o;
}

namespace {

void check_variable_scenario(std::string_view variable, Scenario s) {
  const bool tl = s == Scenario::three_level;
  if (variable == "workers" && tl) {
    throw ConfigError("three_level sweeps use teams or agents_per_team, not workers");
  }
  if ((variable == "teams" || variable == "agents_per_team") && !tl) {
    throw ConfigError(fmt::format("{} only applies to the three_level scenario", variable));
  }
  if ((variable == "m" || variable == "m_tilde") && s != Scenario::ability) {
    throw ConfigError(fmt::format("{} only applies to the ability scenario", variable));
  }
}

/// Validation of one fully resolved sweep point.
void validate_point(const RunConfig& c) {
  try {
    c.workers.validate();
    c.firm().validate();
    if (c.scenario == Scenario::ability) c.ability.validate();
    if (c.scenario == Scenario::three_level) c.org().validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (c.total_workers < 1) throw ConfigError("workers must be >= 1 (the manager counts)");
  if (c.scenario == Scenario::ability && c.total_workers < 2) {
    throw ConfigError("the ability scenario needs at least one agent (workers >= 2)");
  }
  if (c.scenario == Scenario::separate_reporting) {
    if (c.sequence.empty()) throw ConfigError("separate.sequence is empty");
    for (std::size_t i = 0; i < c.sequence.size(); ++i) {
      if (!(c.sequence[i] > 0.0)) throw ConfigError("separate.sequence entries must be positive");
      if (i > 0 && !(c.sequence[i] < c.sequence[i - 1])) {
        throw ConfigError("separate.sequence must be strictly decreasing");
      }
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  if (format != "csv" && format != "json") throw ConfigError(fmt::format("unknown format '{}'", format));
  try {
    mc.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (!std::isfinite(effort_factor) || effort_factor < 0.0) throw ConfigError("effort_factor must be >= 0");
  if (rates_path && scenario != Scenario::two_level && scenario != Scenario::ability &&
      scenario != Scenario::simulate) {
    throw ConfigError("explicit rates apply to two_level, ability and simulate only");
  }
  if ((scenario == Scenario::simulate || rates_path) && regime == Regime::direct) {
    throw ConfigError("this scenario needs a net-benefit regime (sophisticated or linear)");
  }
  for (const auto* s : {&sweep, &grid}) {
    if (!*s) continue;
    (*s)->validate();
    check_variable_scenario((*s)->variable, scenario);
  }
  if (sweep && grid && sweep->variable == grid->variable) {
    throw ConfigError("sweep and grid must use different variables");
  }
  const std::vector<double> none{kNaN};
  for (double sv : sweep ? sweep->values() : none) {
    for (double gv : grid ? grid->values() : none) {
      RunConfig point = *this;
      if (sweep) point.set_variable(sweep->variable, sv);
      if (grid) point.set_variable(grid->variable, gv);
      validate_point(point);
    }
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["scenario"] = to_string(scenario);
  j["regime"] = hiercon::to_string(regime);
  j["firm"] = {{"k", workers.k}, {"R", workers.R}, {"sigma", workers.sigma}, {"workers", total_workers},
               {"horizon", horizon}};
  nlohmann::json m = nlohmann::json::object();
  if (manager.k) m["k"] = *manager.k;
  if (manager.R) m["R"] = *manager.R;
  if (manager.sigma) m["sigma"] = *manager.sigma;
  j["manager"] = m;
  j["ability"] = {{"m", ability.m}, {"m_tilde", ability.m_tilde}};
  j["three_level"] = {{"teams", teams}, {"agents_per_team", agents_per_team}};
  j["separate"] = {{"variant", variant == SeparateVariant::b0 ? "b0" : "pc0"}, {"sequence", sequence}};
  auto sweep_json = [](const std::optional<Sweep>& s) -> nlohmann::json {
    if (!s) return nullptr;
    return {{"variable", s->variable}, {"from", s->from}, {"to", s->to}, {"count", s->count}};
  };
  j["sweep"] = sweep_json(sweep);
  j["grid"] = sweep_json(grid);
  j["mc"] = {{"paths", mc.paths},
             {"steps", mc.steps},
             {"seed", mc.seed},
             {"antithetic", mc.antithetic},
             {"refinement", mc.refinement},
             {"effort_factor", effort_factor}};
  j["rates"] = rates_path ? nlohmann::json(*rates_path) : nlohmann::json(nullptr);
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError(fmt::format("cannot open config '{}'", path));
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.message()));
  }
  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      cfg.set(name, node.data());
    } else {
      for (const auto& [key, leaf] : node) cfg.set(name + "." + key, leaf.data());
    }
  }
  return cfg;
}

// --- tables ------------------------------------------------------------------

std::size_t Table::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range(fmt::format("no column '{}'", name));
  return static_cast<std::size_t>(it - columns.begin());
}

double Table::number(std::size_t row, std::string_view name) const {
  return std::get<double>(rows.at(row).at(column(name)));
}

const std::string& Table::text(std::size_t row, std::string_view name) const {
  return std::get<std::string>(rows.at(row).at(column(name)));
}

const std::vector<std::string>& sweep_row_columns() {
  static const std::vector<std::string> cols{
      "sweep_var",        "sweep_value",       "grid_var",         "grid_value",
      "scenario",         "regime",            "total_workers",    "z_b",
      "gamma_b",          "mean_agent_rate",   "mean_middle_rate", "manager_effort",
      "mean_agent_effort", "principal_value",  "value_per_worker", "dc_value_per_worker",
      "pps_gain_vs_linear", "agent_pps_gain_vs_linear", "value_gain_vs_linear", "value_gain_vs_dc",
      "z2",               "gamma12",           "gamma22"};
  return cols;
}

namespace {

const std::vector<std::string>& separate_columns() {
  static const std::vector<std::string> cols{"sweep_var",     "sweep_value",    "grid_var",        "grid_value",
                                             "scenario",      "variant",        "total_workers",   "index",
                                             "sequence_value", "principal_value", "value_per_worker", "dc_value",
                                             "gap_to_dc"};
  return cols;
}

const std::vector<std::string>& simulate_columns() {
  static const std::vector<std::string> cols{"sweep_var", "sweep_value", "grid_var", "grid_value", "scenario",
                                             "regime",    "quantity",    "mean",     "se",         "target",
                                             "z_score",   "paths",       "flagged"};
  return cols;
}

/// One sweep point with its resolved configuration.
struct Point {
  double sweep_value = kNaN;
  double grid_value = kNaN;
  RunConfig cfg;
};

std::vector<Point> expand(const RunConfig& cfg) {
  std::vector<Point> points;
  const std::vector<double> none{kNaN};
  for (double sv : cfg.sweep ? cfg.sweep->values() : none) {
    for (double gv : cfg.grid ? cfg.grid->values() : none) {
      Point p{sv, gv, cfg};
      if (cfg.sweep) p.cfg.set_variable(cfg.sweep->variable, sv);
      if (cfg.grid) p.cfg.set_variable(cfg.grid->variable, gv);
      points.push_back(std::move(p));
    }
  }
  return points;
}

/// Key cells shared by every schema.
std::vector<Cell> key_cells(const RunConfig& cfg, const Point& p) {
  return {cfg.sweep ? cfg.sweep->variable : std::string{}, p.sweep_value,
          cfg.grid ? cfg.grid->variable : std::string{}, p.grid_value, std::string(to_string(cfg.scenario))};
}

/// The value as it is serialized.
double round12(double x) { return std::isfinite(x) ? std::stod(format_number(x)) : x; }

/// Relative gain between serialized values, so a gain column can be
/// reproduced from the printed columns (and from re-ingested rates).
double rel_gain(double a, double b) { return (round12(a) - round12(b)) / std::abs(round12(b)); }

double dc_value_rate(const FirmSpec& firm) {
  std::vector<WorkerParams> w{firm.manager};
  w.insert(w.end(), firm.agents.begin(), firm.agents.end());
  return dc_solution(w).principal_value;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct RateRow {
  double sweep_value = kNaN;
  double grid_value = kNaN;
  RateQV rate;
  Regime regime = Regime::sophisticated;
};

double json_number(const nlohmann::json& row, const char* key) {
  if (!row.contains(key) || row[key].is_null()) return kNaN;
  if (!row[key].is_number()) throw ConfigError(fmt::format("rates file: '{}' is not a number", key));
  return row[key].get<double>();
}

std::vector<RateRow> read_rates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError(fmt::format("cannot open rates file '{}'", path));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("rates file '{}': {}", path, e.what()));
  }
  if (!doc.contains("rows") || !doc["rows"].is_array()) throw ConfigError("rates file has no 'rows' array");
  std::vector<RateRow> out;
  for (const auto& row : doc["rows"]) {
    RateRow r;
    r.sweep_value = json_number(row, "sweep_value");
    r.grid_value = json_number(row, "grid_value");
    r.rate = {json_number(row, "z_b"), json_number(row, "gamma_b")};
    if (!std::isfinite(r.rate.z) || !std::isfinite(r.rate.gamma)) {
      throw ConfigError("rates file rows need finite z_b and gamma_b");
    }
    if (row.contains("regime") && row["regime"].is_string()) {
      try {
        r.regime = parse_regime(row["regime"].get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      if (r.regime == Regime::direct) throw ConfigError("rates file rows must come from a net-benefit regime");
    }
    out.push_back(r);
  }
  return out;
}

/// Pairs each sweep point with its row of the rates file.
std::vector<RateRow> match_rates(const std::vector<Point>& points, const std::string& path) {
  auto rows = read_rates(path);
  if (rows.size() != points.size()) {
    throw ConfigError(fmt::format("rates file has {} rows but the sweep has {} points", rows.size(), points.size()));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (format_number(rows[i].sweep_value) != format_number(points[i].sweep_value) ||
        format_number(rows[i].grid_value) != format_number(points[i].grid_value)) {
      throw ConfigError(fmt::format("rates file row {} does not match the sweep point", i));
    }
  }
  return rows;
}

/// The reported contract is the serialized one: optimal rates are rounded to
/// 12 significant digits and every other column is evaluated at them, so
/// re-ingesting the output reproduces it exactly.
SolveResult two_level_result(const FirmSpec& firm, const RunConfig& c, const RateRow* rates) {
  if (rates != nullptr) return evaluate_rates(firm, rates->rate, rates->regime);
  auto res = solve_two_level(firm, c.regime);
  if (res.regime == Regime::direct) return res;
  auto rounded = evaluate_rates(firm, {round12(res.z_b), round12(res.gamma_b)}, res.regime);
  rounded.diagnostics = std::move(res.diagnostics);
  return rounded;
}

std::vector<Cell> solve_row(const Point& p, const RateRow* rates) {
  const RunConfig& c = p.cfg;
  auto row = key_cells(c, p);
  const double T = c.horizon;

  std::string regime;
  double total = 0, z = kNaN, gamma = kNaN, agent_rate = kNaN, middle_rate = kNaN, manager_effort = kNaN,
         agent_effort = kNaN, value = kNaN, dc_rate = kNaN;
  double pps_gain = kNaN, agent_pps_gain = kNaN, value_gain_lin = kNaN;
  double z2 = kNaN, gamma12 = kNaN, gamma22 = kNaN;

  if (c.scenario == Scenario::three_level) {
    const OrgSpec org = c.org();
    const auto res = solve_three_level(org);
    regime = "sophisticated";
    total = static_cast<double>(org.worker_count());
    z = res.z;
    gamma = res.gamma;
    agent_rate = res.mean_agent_rate();
    middle_rate = res.mean_manager_rate();
    manager_effort = res.top_effort;
    std::vector<double> efforts;
    for (std::size_t j = 0; j < org.teams.size(); ++j) {
      for (std::size_t i = 0; i < org.teams[j].agents.size(); ++i) {
        efforts.push_back(agent_best_effort(res.teams[j].agent_rates[i], org.teams[j].agents[i]));
      }
    }
    agent_effort = mean_of(efforts);
    value = res.principal_value;
    std::vector<WorkerParams> all{org.top_manager};
    for (const auto& t : org.teams) {
      all.push_back(t.manager);
      all.insert(all.end(), t.agents.begin(), t.agents.end());
    }
    dc_rate = dc_solution(all).principal_value;
  } else {
    const FirmSpec base = c.firm();
    const FirmSpec firm = c.scenario == Scenario::ability ? apply_ability(base, c.ability) : base;
    total = static_cast<double>(firm.worker_count());
    dc_rate = dc_value_rate(base);
    if (c.scenario == Scenario::pc) {
      const auto res = solve_pc(firm);
      regime = "pc";
      z = res.rate.z1;
      z2 = res.rate.z2;
      gamma12 = res.rate.gamma12;
      gamma22 = res.rate.gamma22;
      agent_rate = mean_of(res.agent_rates);
      manager_effort = res.manager_effort;
      std::vector<double> efforts;
      for (std::size_t i = 0; i < firm.agents.size(); ++i) {
        efforts.push_back(agent_best_effort(res.agent_rates[i], firm.agents[i]));
      }
      agent_effort = mean_of(efforts);
      value = res.principal_value;
    } else {
      const Regime reg = c.scenario == Scenario::dc ? Regime::direct : c.regime;
      RunConfig rc = c;
      rc.regime = reg;
      const auto res = two_level_result(firm, rc, rates);
      regime = std::string(hiercon::to_string(res.regime));
      z = res.z_b;
      gamma = res.regime == Regime::direct ? kNaN : res.gamma_b;
      agent_rate = res.mean_agent_rate();
      manager_effort = res.manager_effort;
      agent_effort = res.mean_agent_effort();
      value = res.principal_value;
      if (res.regime != Regime::direct) {
        const auto lin = solve_two_level(firm, Regime::linear);
        pps_gain = rel_gain(res.z_b, lin.z_b);
        if (!firm.agents.empty()) agent_pps_gain = rel_gain(res.mean_agent_rate(), lin.mean_agent_rate());
        value_gain_lin = rel_gain(res.principal_value, lin.principal_value);
      }
    }
  }

  const double vpw = value * T / total;
  const double dc_vpw = dc_rate * T / total;
  for (Cell cell : std::initializer_list<Cell>{regime, total, z, gamma, agent_rate, middle_rate, manager_effort,
                                               agent_effort, value * T, vpw, dc_vpw, pps_gain, agent_pps_gain,
                                               value_gain_lin, rel_gain(vpw, dc_vpw), z2, gamma12, gamma22}) {
    row.push_back(std::move(cell));
  }
  return row;
}

std::vector<std::vector<Cell>> separate_rows(const Point& p) {
  const RunConfig& c = p.cfg;
  const FirmSpec firm = c.firm();
  const auto values = separate_reporting_values(firm, c.variant, c.sequence);
  const double total = static_cast<double>(firm.worker_count());
  const double dc = dc_value_rate(firm) * c.horizon;
  std::vector<std::vector<Cell>> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto row = key_cells(c, p);
    const double v = values[i] * c.horizon;
    for (Cell cell : std::initializer_list<Cell>{std::string(c.variant == SeparateVariant::b0 ? "b0" : "pc0"), total,
                                                 static_cast<double>(i), c.sequence[i], v, v / total, dc,
                                                 (dc - v) / std::abs(dc)}) {
      row.push_back(std::move(cell));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<Cell>> simulate_rows(const Point& p, const RateRow* rates) {
  const RunConfig& c = p.cfg;
  const FirmSpec firm = c.firm();
  const auto res = two_level_result(firm, c, rates);
  SimEfforts efforts;
  if (c.effort_factor != 1.0) {
    for (std::size_t i = 0; i < firm.agents.size(); ++i) {
      efforts.agents.emplace_back(c.effort_factor * agent_best_effort(res.agent_rates[i], firm.agents[i]));
    }
  }
  MCConfig mc = c.mc;
  mc.keep_paths = false;
  const auto bundle = simulate(firm, rates_from(res), efforts, mc);

  double vol = firm.manager.sigma * firm.manager.sigma;
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    const double s = 1.0 - res.agent_rates[i];
    vol += firm.agents[i].sigma * firm.agents[i].sigma * s * s;
  }

  std::vector<std::pair<std::string, std::pair<Estimate, double>>> quantities;
  quantities.push_back({"manager_utility", {bundle.manager_utility(), -1.0}});
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    quantities.push_back({fmt::format("agent_utility_{}", i + 1), {bundle.agent_utility(i), -1.0}});
  }
  quantities.push_back({"principal_payoff", {bundle.principal_payoff, c.horizon * res.principal_value}});
  quantities.push_back({"realized_qv", {bundle.realized_qv, c.horizon * vol}});

  std::vector<std::vector<Cell>> rows;
  for (const auto& [name, qt] : quantities) {
    const auto& [est, target] = qt;
    auto row = key_cells(c, p);
    for (Cell cell : std::initializer_list<Cell>{std::string(hiercon::to_string(res.regime)), name, est.mean, est.se,
                                                 target, (est.mean - target) / est.se,
                                                 static_cast<double>(bundle.paths),
                                                 static_cast<double>(bundle.flagged)}) {
      row.push_back(std::move(cell));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Runs `job(i)` for i in [0, count) on up to `threads` threads and rethrows
/// the first failure in index order.
template <class Job>
void parallel_for(std::size_t count, unsigned threads, Job job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Table run(const RunConfig& cfg) {
  cfg.validate();
  const auto points = expand(cfg);
  std::vector<RateRow> rates;
  if (cfg.rates_path) rates = match_rates(points, *cfg.rates_path);
  auto rate_at = [&](std::size_t i) -> const RateRow* { return rates.empty() ? nullptr : &rates[i]; };

  Table table;
  std::vector<std::vector<std::vector<Cell>>> blocks(points.size());
  switch (cfg.scenario) {
    case Scenario::separate_reporting:
      table.columns = separate_columns();
      for (std::size_t i = 0; i < points.size(); ++i) blocks[i] = separate_rows(points[i]);
      break;
    case Scenario::simulate:
      // The simulator parallelizes over paths; points run one at a time.
      table.columns = simulate_columns();
      for (std::size_t i = 0; i < points.size(); ++i) blocks[i] = simulate_rows(points[i], rate_at(i));
      break;
    default:
      table.columns = sweep_row_columns();
      parallel_for(points.size(), thread_count(cfg.mc.threads),
                   [&](std::size_t i) { blocks[i] = {solve_row(points[i], rate_at(i))}; });
      break;
  }
  for (auto& b : blocks) {
    for (auto& r : b) table.rows.push_back(std::move(r));
  }
  return table;
}

Table compare(const RunConfig& a, const RunConfig& b) {
  const auto sweep_name = [](const RunConfig& c) { return c.sweep ? c.sweep->variable : std::string{}; };
  const auto grid_name = [](const RunConfig& c) { return c.grid ? c.grid->variable : std::string{}; };
  if (sweep_name(a) != sweep_name(b) || grid_name(a) != grid_name(b)) {
    throw ConfigError(fmt::format("mismatched sweeps: '{}' vs '{}'", sweep_name(a), sweep_name(b)));
  }
  const Table ta = run(a);
  const Table tb = run(b);
  if (ta.columns != tb.columns) throw ConfigError("the two scenarios do not share a row schema");
  if (ta.rows.size() != tb.rows.size()) {
    throw ConfigError(fmt::format("mismatched sweeps: {} rows vs {} rows", ta.rows.size(), tb.rows.size()));
  }

  static const std::vector<std::string> keys{"sweep_var", "sweep_value", "grid_var", "grid_value"};
  static const std::vector<std::string> labels{"scenario", "regime", "variant"};
  Table out;
  out.columns = keys;
  std::vector<std::size_t> label_cols;
  std::vector<std::size_t> match_cols;
  std::vector<std::size_t> numeric_cols;
  for (std::size_t j = 0; j < ta.columns.size(); ++j) {
    const auto& name = ta.columns[j];
    if (std::find(keys.begin(), keys.end(), name) != keys.end()) continue;
    if (std::find(labels.begin(), labels.end(), name) != labels.end()) {
      label_cols.push_back(j);
      out.columns.push_back(name + "_a");
      out.columns.push_back(name + "_b");
    } else if (!ta.rows.empty() && std::holds_alternative<std::string>(ta.rows.front()[j])) {
      match_cols.push_back(j);
      out.columns.push_back(name);
    } else {
      numeric_cols.push_back(j);
    }
  }
  for (std::size_t j : numeric_cols) {
    out.columns.push_back("delta_" + ta.columns[j]);
    out.columns.push_back("rel_" + ta.columns[j]);
  }

  for (std::size_t r = 0; r < ta.rows.size(); ++r) {
    const auto& ra = ta.rows[r];
    const auto& rb = tb.rows[r];
    std::vector<Cell> row;
    for (const auto& k : keys) {
      const std::size_t j = ta.column(k);
      const bool same = std::holds_alternative<double>(ra[j])
                            ? format_number(std::get<double>(ra[j])) == format_number(std::get<double>(rb[j]))
                            : ra[j] == rb[j];
      if (!same) throw ConfigError(fmt::format("mismatched sweeps at row {}", r));
      row.push_back(ra[j]);
    }
    for (std::size_t j : label_cols) {
      row.push_back(ra[j]);
      row.push_back(rb[j]);
    }
    for (std::size_t j : match_cols) {
      if (ra[j] != rb[j]) throw ConfigError(fmt::format("rows {} differ in '{}'", r, ta.columns[j]));
      row.push_back(ra[j]);
    }
    for (std::size_t j : numeric_cols) {
      const double x = std::get<double>(ra[j]);
      const double y = std::get<double>(rb[j]);
      const double d = x - y;
      row.push_back(d);
      row.push_back(d == 0.0 ? 0.0 : (y == 0.0 ? kNaN : d / std::abs(y)));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// --- output ------------------------------------------------------------------

std::string format_number(double x) {
  if (std::isnan(x)) return {};
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  return fmt::format("{:.12g}", x);
}

void write_csv(const Table& table, std::ostream& os) {
  for (std::size_t j = 0; j < table.columns.size(); ++j) os << (j ? "," : "") << table.columns[j];
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) os << ',';
      if (const auto* d = std::get_if<double>(&row[j])) {
        os << format_number(*d);
      } else {
        os << std::get<std::string>(row[j]);
      }
    }
    os << '\n';
  }
}

void write_json(const Table& table, const nlohmann::json& meta, std::ostream& os) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (const auto* d = std::get_if<double>(&row[j])) {
        obj[table.columns[j]] = std::isfinite(*d) ? nlohmann::json(std::stod(format_number(*d))) : nullptr;
      } else {
        obj[table.columns[j]] = std::get<std::string>(row[j]);
      }
    }
    rows.push_back(std::move(obj));
  }
  nlohmann::json doc;
  doc["meta"] = meta;
  doc["rows"] = std::move(rows);
  os << doc.dump(2) << '\n';
}

nlohmann::json make_meta(const RunConfig& cfg) {
  return {{"version", kVersion}, {"config", cfg.to_json()}};
}

void write_output(const Table& table, const nlohmann::json& meta, const RunConfig& cfg) {
  auto emit = [&](std::ostream& os) {
    if (cfg.format == "json") {
      write_json(table, meta, os);
    } else {
      write_csv(table, os);
    }
    os.flush();
    if (!os) throw IOError(fmt::format("failed writing output '{}'", cfg.out_path));
  };
  if (cfg.out_path == "-") {
    emit(std::cout);
    return;
  }
  std::ofstream out(cfg.out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError(fmt::format("cannot open output '{}'", cfg.out_path));
  emit(out);
}

}  // namespace hiercon::report
