#pragma once

// CSV tables and JSON documents for the command-line outputs. Doubles are
// written in shortest round-trip form so reruns can be compared byte by byte.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pmdlab/error.hpp"
#include "pmdlab/sampling.hpp"
#include "pmdlab/trainer.hpp"

namespace pmdlab {

using json = nlohmann::ordered_json;

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Parses what format_double writes (and ordinary decimal input).
inline double parse_double(std::string_view s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

using Cell = std::variant<std::string, double, long>;

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<Cell> row) {
    detail::require(row.size() == header_.size(), "csv row has " + std::to_string(row.size()) +
                                                      " cells, header has " +
                                                      std::to_string(header_.size()));
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t size() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    append_line(out, header_);
    for (const auto& row : rows_) {
      std::vector<std::string> cells;
      cells.reserve(row.size());
      for (const auto& c : row) {
        if (const auto* s = std::get_if<std::string>(&c)) cells.push_back(*s);
        else if (const auto* d = std::get_if<double>(&c)) cells.push_back(format_double(*d));
        else cells.push_back(std::to_string(std::get<long>(c)));
      }
      append_line(out, cells);
    }
    return out;
  }

 private:
  static void append_line(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      const auto& c = cells[i];
      if (c.find_first_of(",\"\n") == std::string::npos) {
        out += c;
      } else {
        out += '"';
        for (char ch : c) {
          if (ch == '"') out += '"';
          out += ch;
        }
        out += '"';
      }
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

/// Minimal reader for the files CsvTable writes (no embedded newlines).
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw InvalidArgument("csv has no column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvData parse_csv(const std::string& text) {
  CsvData d;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      d.header = split_csv_line(line);
      first = false;
    } else if (!line.empty()) {
      d.rows.push_back(split_csv_line(line));
    }
  }
  return d;
}

inline CsvData read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_text(path, table.str());
}

/// Non-finite doubles become the strings "nan", "inf", "-inf" (JSON has no literal for them).
inline json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline void write_json(const std::filesystem::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

// ---- schemas -----------------------------------------------------------

inline const std::vector<std::string>& estimation_header() {
  static const std::vector<std::string> h{"method", "p",        "n",         "tau",
                                          "trials", "mean_dbar2", "std_dbar2", "pos_err",
                                          "neg_err", "scaled_err", "bound",    "violations"};
  return h;
}

inline const std::vector<std::string>& signs_header() {
  static const std::vector<std::string> h{"method",  "p",       "n",          "tau",
                                          "trials",  "pos_err", "pos_std",    "neg_err",
                                          "neg_std", "pos_trials", "neg_trials"};
  return h;
}

inline const std::vector<std::string>& trajectory_header() {
  static const std::vector<std::string> h{"step",         "J",           "emp_reward",
                                          "min_logratio", "max_logratio", "lambda_mean",
                                          "entropy",      "eps_opt"};
  return h;
}

inline CsvTable estimation_table(const EstimationReport& rep) {
  CsvTable t(estimation_header());
  for (const auto& c : rep.cells) {
    t.add_row({std::string(to_string(c.method)), c.p, c.n, c.tau, c.trials, c.mean_dbar2,
               c.std_dbar2, c.pos_err, c.neg_err, c.scaled_err, c.bound, c.violations});
  }
  return t;
}

inline CsvTable signs_table(const EstimationReport& rep) {
  CsvTable t(signs_header());
  for (const auto& c : rep.cells) {
    t.add_row({std::string(to_string(c.method)), c.p, c.n, c.tau, c.trials, c.pos_err,
               c.pos_std, c.neg_err, c.neg_std, c.pos_trials, c.neg_trials});
  }
  return t;
}

inline json to_json(const CellStats& c) {
  return json{{"method", to_string(c.method)},
              {"p", c.p},
              {"n", c.n},
              {"tau", c.tau},
              {"trials", c.trials},
              {"mean_dbar2", json_number(c.mean_dbar2)},
              {"std_dbar2", json_number(c.std_dbar2)},
              {"pos_err", json_number(c.pos_err)},
              {"pos_std", json_number(c.pos_std)},
              {"pos_trials", c.pos_trials},
              {"neg_err", json_number(c.neg_err)},
              {"neg_std", json_number(c.neg_std)},
              {"neg_trials", c.neg_trials},
              {"scaled_err", json_number(c.scaled_err)},
              {"bound", json_number(c.bound)},
              {"violations", c.violations},
              {"degenerate", c.degenerate},
              {"eps_coverage", c.eps_coverage}};
}

inline json to_json(const EstimationReport& rep) {
  json cells = json::array();
  for (const auto& c : rep.cells) cells.push_back(to_json(c));
  return json{{"p_grid", rep.config.p_grid}, {"n_grid", rep.config.n_grid},
              {"tau", rep.config.tau},       {"trials", rep.config.trials},
              {"delta", rep.config.delta},   {"seed", rep.config.seed},
              {"cells", std::move(cells)}};
}

/// Wall-clock is left out so that reruns are byte-identical.
inline CsvTable trajectory_table(const TrainTrajectory& tr) {
  CsvTable t(trajectory_header());
  for (const auto& s : tr.steps) {
    t.add_row({s.step, s.J, s.emp_reward, s.min_logratio, s.max_logratio, s.lambda_mean,
               s.entropy, s.eps_opt});
  }
  return t;
}

}  // namespace pmdlab
