#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hiercon/extensions.hpp"
#include "hiercon/simulator.hpp"
#include "hiercon/two_level.hpp"

namespace hiercon::report {

inline constexpr std::string_view kVersion = "1.0.0";

/// Malformed or inconsistent configuration (CLI exit 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output could not be read or written (CLI exit 4).
class IOError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { two_level, dc, ability, pc, separate_reporting, three_level, simulate };

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view name);

/// Evenly spaced values of one configuration variable, endpoints included.
struct Sweep {
  std::string variable;
  double from = 0.0;
  double to = 0.0;
  std::size_t count = 1;

  /// "VAR:FROM:TO:COUNT".
  static Sweep parse(std::string_view spec);
  std::vector<double> values() const;
  void validate() const;
};

/// Names accepted as sweep or grid variables.
const std::vector<std::string>& sweep_variables();

struct RunConfig {
  Scenario scenario = Scenario::two_level;
  Regime regime = Regime::sophisticated;

  WorkerParams workers{1000.0, 50.0, 1.0};
  /// Per-field overrides of `workers` for the (top) manager.
  struct ManagerOverride {
    std::optional<double> k;
    std::optional<double> R;
    std::optional<double> sigma;
  } manager;
  /// Manager included, so the firm has total_workers - 1 agents.
  std::size_t total_workers = 2;
  double horizon = 1.0;

  AbilityParams ability{0.0, 0.0};
  std::size_t teams = 2;
  std::size_t agents_per_team = 2;
  SeparateVariant variant = SeparateVariant::b0;
  std::vector<double> sequence{1.0, 1e-1, 1e-2, 1e-3, 1e-4};

  std::optional<Sweep> sweep;
  std::optional<Sweep> grid;

  MCConfig mc;
  /// Agents in the simulate scenario exert this multiple of their best
  /// response.
  double effort_factor = 1.0;

  std::string out_path = "-";
  std::string format = "csv";
  /// JSON output of an earlier run whose (z_b, gamma_b) are re-used instead
  /// of optimizing.
  std::optional<std::string> rates_path;

  void validate() const;
  /// Sets one dotted key ("firm.k", "mc.paths", ...) from its text form.
  void set(std::string_view key, std::string_view value);
  /// Sets a sweep variable to a numeric value.
  void set_variable(std::string_view variable, double value);
  nlohmann::json to_json() const;

  FirmSpec firm() const;
  OrgSpec org() const;
};

/// Reads an INI file; keys outside a section are top-level ("scenario").
RunConfig load_config(const std::string& path);

using Cell = std::variant<double, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t column(std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
  const std::string& text(std::size_t row, std::string_view name) const;
};

/// Column layout shared by the solver scenarios.
const std::vector<std::string>& sweep_row_columns();

/// Runs the configured scenario over its sweep (and grid). Rows follow sweep
/// order, grid innermost.
Table run(const RunConfig& cfg);

/// Row-wise differences A - B and relative gains (A - B) / |B|. Both runs
/// must use the same scenario schema and the same sweep points.
Table compare(const RunConfig& a, const RunConfig& b);

/// 12 significant digits; NaN is empty.
std::string format_number(double x);

void write_csv(const Table& table, std::ostream& os);
void write_json(const Table& table, const nlohmann::json& meta, std::ostream& os);
nlohmann::json make_meta(const RunConfig& cfg);

/// Writes to cfg.out_path ("-" is stdout) in cfg.format.
void write_output(const Table& table, const nlohmann::json& meta, const RunConfig& cfg);

}  // namespace hiercon::report
