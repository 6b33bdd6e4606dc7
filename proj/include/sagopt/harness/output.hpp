#pragma once

#include "sagopt/harness/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace sagopt::harness {

namespace fs = std::filesystem;

// One summary line per run. Column order of summary.csv:
//   optimizer,seed,stabilization_iteration,final_error,status,config_hash
struct SummaryRow {
  std::string optimizer;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> stabilization;  // "never" in files
  double final_error = 0.0;
  RunStatus status = RunStatus::completed;
  std::string config_hash;

  bool operator==(const SummaryRow& o) const {
    const bool fe = final_error == o.final_error ||
                    (std::isnan(final_error) && std::isnan(o.final_error));
    return optimizer == o.optimizer && seed == o.seed && stabilization == o.stabilization && fe &&
           status == o.status && config_hash == o.config_hash;
  }
};

inline constexpr const char* kTrajectoryHeader = "k,loss,dist_to_opt,lr";
inline constexpr const char* kSummaryHeader =
    "optimizer,seed,stabilization_iteration,final_error,status,config_hash";

// %.17g round-trips every double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string safe_label(const std::string& label) {
  std::string s = label;
  for (char& ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '_' || ch == '-' || ch == '.';
    if (!ok) ch = '_';
  }
  return s;
}

inline std::string trajectory_filename(const std::string& label, std::uint64_t seed) {
  return safe_label(label) + "_seed" + std::to_string(seed) + ".csv";
}

// Writes to a sibling temporary and renames, so readers never see half a file.
inline void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

inline SummaryRow summarize(const RunRecord& rec, const StabilizationSpec& st) {
  SummaryRow s;
  s.optimizer = rec.label;
  s.seed = rec.seed;
  s.status = rec.status;
  s.config_hash = rec.config_hash;
  s.final_error = final_error(rec);
  if (rec.status == RunStatus::completed && rec.rows.size() > st.window) {
    s.stabilization = stabilization_iteration(rec, st.window, st.tol);
  }
  return s;
}

inline std::string trajectory_csv(const RunRecord& rec, const StabilizationSpec& st) {
  std::ostringstream os;
  os << "# optimizer=" << rec.label << " seed=" << rec.seed << " status=" << to_string(rec.status)
     << " config_hash=" << rec.config_hash << " window=" << st.window
     << " tol=" << format_double(st.tol) << '\n';
  os << kTrajectoryHeader << '\n';
  for (const auto& r : rec.rows) {
    os << r.k << ',' << format_double(r.loss) << ','
       << (r.dist_to_opt ? format_double(*r.dist_to_opt) : std::string()) << ','
       << format_double(r.lr) << '\n';
  }
  return os.str();
}

struct TrajectoryFile {
  SummaryRow meta;  // optimizer, seed, status, hash; metrics filled by the reader
  StabilizationSpec stabilization;
  std::vector<TrajectoryRow> rows;
};

inline TrajectoryFile read_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TrajectoryFile tf;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw IoError(path.string() + ": missing metadata line");
  }
  std::istringstream meta(line.substr(2));
  std::string tok;
  bool have_label = false;
  while (meta >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "optimizer") {
        tf.meta.optimizer = val;
        have_label = true;
      } else if (key == "seed") {
        tf.meta.seed = std::stoull(val);
      } else if (key == "status") {
        tf.meta.status = run_status_from_string(val);
      } else if (key == "config_hash") {
        tf.meta.config_hash = val;
      } else if (key == "window") {
        tf.stabilization.window = std::stoull(val);
      } else if (key == "tol") {
        tf.stabilization.tol = std::stod(val);
      }
    } catch (const std::logic_error&) {
      throw IoError(path.string() + ": bad metadata value for " + key);
    }
  }
  if (!have_label) throw IoError(path.string() + ": metadata lacks optimizer");
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw IoError(path.string() + ": unexpected header");
  }
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 4) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    try {
      TrajectoryRow r;
      r.k = std::stoull(f[0]);
      r.loss = std::stod(f[1]);
      if (!f[2].empty()) r.dist_to_opt = std::stod(f[2]);
      r.lr = std::stod(f[3]);
      tf.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return tf;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << kSummaryHeader << '\n';
  for (const auto& s : rows) {
    os << s.optimizer << ',' << s.seed << ','
       << (s.stabilization ? std::to_string(*s.stabilization) : std::string("never")) << ','
       << format_double(s.final_error) << ',' << to_string(s.status) << ',' << s.config_hash << '\n';
  }
  return os.str();
}

inline json summary_row_to_json(const SummaryRow& s) {
  return {{"optimizer", s.optimizer},
          {"seed", s.seed},
          {"stabilization_iteration", s.stabilization ? json(*s.stabilization) : json("never")},
          {"final_error", std::isfinite(s.final_error) ? json(s.final_error) : json(nullptr)},
          {"status", to_string(s.status)},
          {"config_hash", s.config_hash}};
}

inline SummaryRow summary_row_from_json(const json& j) {
  SummaryRow s;
  s.optimizer = j.at("optimizer").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& st = j.at("stabilization_iteration");
  if (!st.is_string()) s.stabilization = st.get<std::uint64_t>();
  s.final_error = j.at("final_error").is_null() ? std::nan("") : j.at("final_error").get<double>();
  s.status = run_status_from_string(j.at("status").get<std::string>());
  s.config_hash = j.at("config_hash").get<std::string>();
  return s;
}

// summary.json: {"config": ..., "runs": [...]}. Wall clock appears only here.
inline json summary_json(const std::vector<SummaryRow>& rows, const json& config,
                         const std::vector<RunRecord>* records = nullptr) {
  json runs = json::array();
  for (std::size_t q = 0; q < rows.size(); ++q) {
    json r = summary_row_to_json(rows[q]);
    if (records != nullptr) {
      const auto& rec = (*records)[q];
      r["wall_seconds"] = rec.wall_seconds;
      if (!rec.message.empty()) r["message"] = rec.message;
      if (rec.validation_metric) r["validation_metric"] = *rec.validation_metric;
    }
    runs.push_back(std::move(r));
  }
  return {{"config", config}, {"runs", runs}};
}

inline std::vector<SummaryRow> summary_rows_from_json(const json& j) {
  std::vector<SummaryRow> out;
  for (const auto& r : j.at("runs")) out.push_back(summary_row_from_json(r));
  return out;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

// Layout under `dir`:
//   trajectories/<label>_seed<s>.csv   always
//   summary.csv, config.json           format csv or both
//   summary.json                       format json or both
inline std::vector<SummaryRow> emit_outputs(const std::vector<RunRecord>& records,
                                            const ExperimentConfig& c, const fs::path& dir,
                                            const std::string& format) {
  if (format != "csv" && format != "json" && format != "both") {
    throw ConfigError("format must be csv, json or both");
  }
  ensure_dir(dir / "trajectories");
  std::vector<SummaryRow> rows;
  rows.reserve(records.size());
  for (const auto& rec : records) {
    write_atomically(dir / "trajectories" / trajectory_filename(rec.label, rec.seed),
                     trajectory_csv(rec, c.stabilization));
    rows.push_back(summarize(rec, c.stabilization));
  }
  const json cfg = config_to_json(c);
  if (format != "json") {
    write_atomically(dir / "summary.csv", summary_csv(rows));
    json cj = cfg;
    cj["config_hash"] = config_hash(c);
    write_atomically(dir / "config.json", cj.dump(2) + "\n");
  }
  if (format != "csv") {
    write_atomically(dir / "summary.json", summary_json(rows, cfg, &records).dump(2) + "\n");
  }
  return rows;
}

// Rebuilds summary.csv from the trajectory files in dir/trajectories, sorted by file name.
inline std::vector<SummaryRow> report(const fs::path& dir) {
  const fs::path tdir = dir / "trajectories";
  if (!fs::is_directory(tdir)) throw IoError("no trajectories directory in " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(tdir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SummaryRow> rows;
  for (const auto& f : files) {
    TrajectoryFile tf = read_trajectory_csv(f);
    SummaryRow s = tf.meta;
    s.final_error = final_error(std::span<const TrajectoryRow>(tf.rows));
    if (s.status == RunStatus::completed && tf.rows.size() > tf.stabilization.window) {
      s.stabilization = stabilization_iteration(tf.rows, tf.stabilization.window, tf.stabilization.tol);
    }
    rows.push_back(std::move(s));
  }
  write_atomically(dir / "summary.csv", summary_csv(rows));
  return rows;
}

}  // namespace sagopt::harness
