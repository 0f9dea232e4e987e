#pragma once

// Long-format CSV result rows with a single serialized writer. A run_id that
// already has rows in the file is refused unless the caller forces a rerun,
// in which case its old rows are dropped first.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vinn/errors.hpp"

namespace vinn {

struct ResultRow {
  std::string run_id;
  std::string experiment;
  std::string architecture;
  std::string loss;
  std::string direction;
  std::string seed;
  std::string epoch = "final";
  std::string metric_name;
  double metric_value = 0.0;
  double wall_time_s = 0.0;
  std::string status = "ok";
};

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols{"run_id", "experiment",   "architecture", "loss",
                                             "direction", "seed",      "epoch",        "metric_name",
                                             "metric_value", "wall_time_s", "status"};
  return cols;
}

inline constexpr std::size_t kWallTimeColumn = 9;

class RunConflictError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Splits one CSV line, honouring double-quoted fields.
inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

inline std::string header_line() {
  std::string h;
  for (const auto& c : result_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

}  // namespace detail

/// A row whose value is not finite is marked failed.
inline ResultRow finalize_row(ResultRow r) {
  if (!std::isfinite(r.metric_value)) r.status = "failed";
  return r;
}

inline std::string format_row(const ResultRow& r0) {
  const ResultRow r = finalize_row(r0);
  std::string out;
  for (const std::string* f : {&r.run_id, &r.experiment, &r.architecture, &r.loss, &r.direction, &r.seed, &r.epoch,
                               &r.metric_name})
    out += detail::csv_field(*f) + ",";
  out += detail::csv_number(r.metric_value) + "," + detail::csv_number(r.wall_time_s) + "," +
         detail::csv_field(r.status);
  return out;
}

inline ResultRow parse_row(const std::string& line) {
  const auto f = detail::csv_split(line);
  if (f.size() != result_columns().size()) throw Error("results: malformed row '" + line + "'");
  ResultRow r{f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], std::stod(f[8]), std::stod(f[9]), f[10]};
  return r;
}

/// Rows of an existing results file (empty when the file does not exist).
inline std::vector<ResultRow> read_results(const std::string& path) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != detail::header_line()) throw Error("results: " + path + " does not carry the expected header");
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_row(line));
  return rows;
}

/// Appends rows to a CSV file. Opening checks the planned run_ids against
/// the file's completed ones.
class ResultWriter {
 public:
  ResultWriter(const std::string& path, const std::vector<std::string>& planned_run_ids, bool force)
      : path_(path) {
    const auto existing = read_results(path);
    std::set<std::string> done;
    for (const auto& r : existing) done.insert(r.run_id);
    std::set<std::string> planned(planned_run_ids.begin(), planned_run_ids.end());
    std::vector<std::string> clash;
    for (const auto& id : planned)
      if (done.count(id)) clash.push_back(id);
    if (!clash.empty() && !force) {
      std::string msg = std::to_string(clash.size()) + " run_id(s) already present in " + path +
                        " (use --force to rerun):";
      for (const auto& id : clash) msg += "\n  " + id;
      throw RunConflictError(msg);
    }
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
      std::filesystem::create_directories(dir);
    if (!clash.empty() || existing.empty()) {
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw Error("results: cannot write " + path);
      out << detail::header_line() << "\n";
      for (const auto& r : existing)
        if (!planned.count(r.run_id)) out << format_row(r) << "\n";
    }
    out_.open(path, std::ios::app);
    if (!out_) throw Error("results: cannot append to " + path);
  }

  void append(const std::vector<ResultRow>& rows) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& r : rows) out_ << format_row(r) << "\n";
    out_.flush();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::mutex mu_;
};

/// CSV body with the wall-time column removed, for reproducibility diffs.
inline std::string strip_wall_time(const std::string& csv_text) {
  std::istringstream is(csv_text);
  std::string line, out;
  while (std::getline(is, line)) {
    auto f = detail::csv_split(line);
    if (f.size() > kWallTimeColumn) f.erase(f.begin() + kWallTimeColumn);
    std::string joined;
    for (std::size_t i = 0; i < f.size(); ++i) joined += (i ? "," : "") + detail::csv_field(f[i]);
    out += joined + "\n";
  }
  return out;
}

}  // namespace vinn
