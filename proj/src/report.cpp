#include "landscape/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "landscape/error.hpp"

namespace landscape::report {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw FormatError("'" + text + "' is not a number");
  }
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw FormatError("CSV has no column '" + name + "'");
}

namespace {

void put_field(std::string& out, const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) {
    out += field;
    return;
  }
  out += '"';
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void put_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    put_field(out, row[i]);
  }
  out += '\n';
}

std::string robust_cell(const std::vector<std::pair<attacks::Kind, double>>& robust, probe::Column col,
                        const char* marker) {
  const auto kind = probe::column_attack(col);
  if (!kind) return marker;
  for (const auto& [k, v] : robust) {
    if (k == *kind) return format_number(v);
  }
  return marker;
}

std::vector<std::string> score_header() {
  std::vector<std::string> h{"Clean"};
  for (auto c : probe::table_columns()) h.push_back(probe::column_name(c));
  h.push_back("AVG");
  return h;
}

void append_scores(std::vector<std::string>& row, double clean,
                   const std::vector<std::pair<attacks::Kind, double>>& robust, double average, const char* marker) {
  row.push_back(format_number(clean));
  for (auto c : probe::table_columns()) row.push_back(robust_cell(robust, c, marker));
  row.push_back(format_number(average));
}

void read_scores(const CsvTable& t, const std::vector<std::string>& row, double& clean,
                 std::vector<std::pair<attacks::Kind, double>>& robust, double& average, const char* marker) {
  clean = parse_number(row.at(t.column("Clean")));
  for (auto c : probe::table_columns()) {
    const std::string& field = row.at(t.column(probe::column_name(c)));
    if (field == marker) continue;
    const auto kind = probe::column_attack(c);
    if (!kind) throw FormatError("column " + probe::column_name(c) + " must hold the '" + marker + "' marker");
    robust.emplace_back(*kind, parse_number(field));
  }
  average = parse_number(row.at(t.column("AVG")));
}

void check_width(const CsvTable& t) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      throw FormatError("CSV row " + std::to_string(r + 1) + " has " + std::to_string(t.rows[r].size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    }
  }
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  put_row(out, table.header);
  for (const auto& row : table.rows) put_row(out, row);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool in_row = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    in_row = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(row));
      row.clear();
      in_row = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw FormatError("CSV ends inside a quoted field");
  if (in_row) {
    row.push_back(std::move(field));
    lines.push_back(std::move(row));
  }
  if (lines.empty()) throw FormatError("CSV has no header row");
  CsvTable t;
  t.header = std::move(lines.front());
  t.rows.assign(std::make_move_iterator(lines.begin() + 1), std::make_move_iterator(lines.end()));
  check_width(t);
  return t;
}

CsvTable history_table(const train::History& history) {
  CsvTable t;
  t.header = {"epoch", "train_loss", "test_acc"};
  for (const auto& e : history) {
    t.rows.push_back({std::to_string(e.epoch), format_number(e.train_loss),
                      e.test_acc < 0.0 ? kNotImplemented : format_number(e.test_acc)});
  }
  return t;
}

CsvTable robustness_table(const std::vector<probe::ResultRow>& rows) {
  CsvTable t;
  t.header = {"method", "projection"};
  for (auto& h : score_header()) t.header.push_back(h);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.method, r.projection};
    append_scores(row, r.clean, r.robust, r.average, kNotImplemented);
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable ablation_table(const std::vector<probe::AblationCell>& cells) {
  CsvTable t;
  t.header = {"factor", "stride", "fill", "seed"};
  for (auto& h : score_header()) t.header.push_back(h);
  for (const auto& c : cells) {
    std::vector<std::string> row{std::to_string(c.factor), std::to_string(c.stride), c.fill.to_string(), c.seed};
    append_scores(row, c.clean, c.robust, c.average, kNotImplementedAblation);
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable trajectory_table(const std::vector<probe::TrajectoryRecord>& records) {
  CsvTable t;
  t.header = {"step", "loss", "x_sig", "y_aux", "mass_aux", "mass_sig"};
  for (const auto& r : records) {
    t.rows.push_back({std::to_string(r.step), format_number(r.loss), format_number(r.x_sig), format_number(r.y_aux),
                      format_number(r.mass_aux), format_number(r.mass_sig)});
  }
  return t;
}

CsvTable recovery_table(const std::vector<probe::RecoveryReport>& reports) {
  CsvTable t;
  t.header = {"sample",   "loss_clean",     "loss_adv", "loss_projected", "pred_clean",
              "pred_adv", "pred_projected", "recovered"};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    t.rows.push_back({std::to_string(i), format_number(r.loss_clean), format_number(r.loss_adv),
                      format_number(r.loss_projected), std::to_string(r.pred_clean), std::to_string(r.pred_adv),
                      std::to_string(r.pred_projected), r.recovered ? "1" : "0"});
  }
  return t;
}

std::vector<probe::ResultRow> parse_robustness_table(const CsvTable& table) {
  std::vector<probe::ResultRow> out;
  for (const auto& row : table.rows) {
    probe::ResultRow r;
    r.method = row.at(table.column("method"));
    r.projection = row.at(table.column("projection"));
    read_scores(table, row, r.clean, r.robust, r.average, kNotImplemented);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<probe::AblationCell> parse_ablation_table(const CsvTable& table) {
  std::vector<probe::AblationCell> out;
  for (const auto& row : table.rows) {
    probe::AblationCell c;
    c.factor = static_cast<std::size_t>(parse_number(row.at(table.column("factor"))));
    c.stride = static_cast<std::size_t>(parse_number(row.at(table.column("stride"))));
    c.fill = sbde::FillScheme::parse(row.at(table.column("fill")));
    c.seed = row.at(table.column("seed"));
    read_scores(table, row, c.clean, c.robust, c.average, kNotImplementedAblation);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<probe::TrajectoryRecord> parse_trajectory_table(const CsvTable& table) {
  std::vector<probe::TrajectoryRecord> out;
  for (const auto& row : table.rows) {
    probe::TrajectoryRecord r;
    r.step = static_cast<int>(parse_number(row.at(table.column("step"))));
    r.loss = parse_number(row.at(table.column("loss")));
    r.x_sig = parse_number(row.at(table.column("x_sig")));
    r.y_aux = parse_number(row.at(table.column("y_aux")));
    r.mass_aux = parse_number(row.at(table.column("mass_aux")));
    r.mass_sig = parse_number(row.at(table.column("mass_sig")));
    out.push_back(r);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace landscape::report
