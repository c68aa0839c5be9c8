#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "landscape/probe.hpp"
#include "landscape/train.hpp"

namespace landscape::report {

// Markers written in table columns for attacks this library does not run:
// robustness tables and histories use kNotImplemented, ablation tables
// kNotImplementedAblation.
inline constexpr const char* kNotImplemented = "n/a";
inline constexpr const char* kNotImplementedAblation = "not-implemented";

// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
double parse_number(const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws FormatError when absent.
  std::size_t column(const std::string& name) const;
  friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

// Comma separated, '\n' line ends, fields quoted only when they contain a
// comma, quote or newline.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

CsvTable history_table(const train::History& history);
// Columns: method, projection, Clean, PGD, AutoAttack, BIM, APGD, APGDT, AVG.
CsvTable robustness_table(const std::vector<probe::ResultRow>& rows);
// Columns: factor, stride, fill, seed, Clean, PGD, AutoAttack, BIM, APGD,
// APGDT, AVG.
CsvTable ablation_table(const std::vector<probe::AblationCell>& cells);
// Columns: step, loss, x_sig, y_aux, mass_aux, mass_sig.
CsvTable trajectory_table(const std::vector<probe::TrajectoryRecord>& records);
CsvTable recovery_table(const std::vector<probe::RecoveryReport>& reports);

std::vector<probe::ResultRow> parse_robustness_table(const CsvTable& table);
std::vector<probe::AblationCell> parse_ablation_table(const CsvTable& table);
std::vector<probe::TrajectoryRecord> parse_trajectory_table(const CsvTable& table);

// Writes to a temporary sibling and renames it into place.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace landscape::report
