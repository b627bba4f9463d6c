#pragma once

/// \file
/// Plain CSV files: observations, truth, particles, schedules and traces.
/// Floats are written with 17 significant digits so files replay exactly.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcde/models.hpp"
#include "smcde/posterior.hpp"
#include "smcde/smc.hpp"
#include "smcde/solver.hpp"

namespace smcde {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw FormatError("missing column '" + name + "'");
  }
  [[nodiscard]] bool has(const std::string& name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
      continue;
    }
    if (cells.size() != t.header.size()) throw FormatError("row with " + std::to_string(cells.size()) + " fields in '" + path + "'");
    t.rows.push_back(std::move(cells));
  }
  if (first) throw FormatError("empty file '" + path + "'");
  return t;
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw FormatError("not a number: '" + s + "'");
  }
  if (pos != s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  return out;
}

/// Component column: a component name or a 1-based index.
inline std::size_t parse_component(const DeModel& model, const std::string& s) {
  for (std::size_t i = 0; i < model.dim(); ++i) {
    if (model.component_names[i] == s) return i;
  }
  try {
    const double v = parse_double(s);
    if (v >= 1.0 && v <= static_cast<double>(model.dim()) && v == static_cast<double>(static_cast<std::size_t>(v))) {
      return static_cast<std::size_t>(v) - 1;
    }
  } catch (const FormatError&) {
  }
  throw FormatError("unknown component '" + s + "' for model " + model.name);
}

/// Count series given as (day, count) rows: one series for the model's single observed component.
inline ObservationSet day_count_observations(const CsvTable& t, const DeModel& model, const std::string& path) {
  if (model.observed.size() != 1) throw FormatError("(day, count) data needs a model with one observed component");
  const std::size_t cd = t.column("day");
  const std::size_t cc = t.column("count");
  ObservationSeries s;
  s.component = model.observed.front();
  for (const auto& row : t.rows) {
    s.times.push_back(parse_double(row[cd]));
    s.values.push_back(parse_double(row[cc]));
  }
  if (s.times.empty()) throw FormatError("no observations in '" + path + "'");
  for (std::size_t j = 1; j < s.times.size(); ++j) {
    if (!(s.times[j] > s.times[j - 1])) throw FormatError("days must be strictly increasing");
  }
  ObservationSet data;
  data.t1 = s.times.front();
  data.tmax = s.times.back();
  data.series.push_back(std::move(s));
  return data;
}

/// Long-format (time, component, value) rows grouped into one series per
/// component. A (day, count) file is accepted for single-output models.
inline ObservationSet read_observations(const std::string& path, const DeModel& model) {
  const CsvTable t = read_csv(path);
  if (t.has("day") && t.has("count") && !t.has("time")) return day_count_observations(t, model, path);
  const std::size_t ct = t.column("time");
  const std::size_t cc = t.column("component");
  const std::size_t cv = t.column("value");
  std::map<std::size_t, ObservationSeries> by_comp;
  for (const auto& row : t.rows) {
    const std::size_t comp = parse_component(model, row[cc]);
    auto& s = by_comp[comp];
    s.component = comp;
    s.times.push_back(parse_double(row[ct]));
    s.values.push_back(parse_double(row[cv]));
  }
  if (by_comp.empty()) throw FormatError("no observations in '" + path + "'");
  ObservationSet data;
  bool first = true;
  for (auto& [comp, s] : by_comp) {
    for (std::size_t j = 1; j < s.times.size(); ++j) {
      if (!(s.times[j] > s.times[j - 1])) throw FormatError("observation times must be strictly increasing per component");
    }
    if (first || s.times.front() < data.t1) data.t1 = s.times.front();
    if (first || s.times.back() > data.tmax) data.tmax = s.times.back();
    first = false;
    data.series.push_back(std::move(s));
  }
  return data;
}

inline void write_long_csv(const std::string& path, const DeModel& model, const ObservationSet& data) {
  auto out = open_out(path);
  out << "time,component,value\n";
  for (const auto& s : data.series) {
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      out << fmt(s.times[j]) << ',' << model.component_names[s.component] << ',' << fmt(s.values[j]) << '\n';
    }
  }
}

/// The true trajectory of every component on the solver grid, thinned to at most `max_rows` times.
inline void write_truth_csv(const std::string& path, const DeModel& model, const Trajectory& traj, std::size_t max_rows = 2001) {
  auto out = open_out(path);
  out << "time,component,value\n";
  const std::size_t n = traj.size();
  const std::size_t stride = std::max<std::size_t>(1, (n - 1 + max_rows - 2) / std::max<std::size_t>(max_rows - 1, 1));
  for (std::size_t i = 0; i < model.dim(); ++i) {
    for (std::size_t k = 0; k < n; k += stride) out << fmt(traj.time(k)) << ',' << model.component_names[i] << ',' << fmt(traj.state(k)[i]) << '\n';
    if ((n - 1) % stride != 0) out << fmt(traj.time(n - 1)) << ',' << model.component_names[i] << ',' << fmt(traj.state(n - 1)[i]) << '\n';
  }
}

/// Truth as series per component (all components).
inline ObservationSet read_truth(const std::string& path, const DeModel& model) { return read_observations(path, model); }

inline std::vector<std::string> particle_columns(const SplinePosterior& post) {
  std::vector<std::string> cols = {"weight"};
  for (const auto& n : post.model().param_names) cols.push_back(n);
  if (post.delayed()) cols.emplace_back("tau");
  for (const auto& s : post.data().series) cols.push_back("sigma2_" + post.model().component_names[s.component]);
  cols.emplace_back("lambda");
  for (std::size_t i = 0; i < post.model().dim(); ++i) {
    for (std::size_t l = 0; l < post.bases()[i].size(); ++l) cols.push_back("c_" + std::to_string(i + 1) + "_" + std::to_string(l + 1));
  }
  return cols;
}

inline void write_particles_csv(const std::string& path, const SplinePosterior& post, std::span<const ParticleState> particles,
                                std::span<const double> weights) {
  auto out = open_out(path);
  const auto cols = particle_columns(post);
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  for (std::size_t k = 0; k < particles.size(); ++k) {
    const auto& b = particles[k];
    out << fmt(weights[k]);
    for (double v : b.theta) out << ',' << fmt(v);
    if (post.delayed()) out << ',' << fmt(b.tau);
    for (double v : b.sigma2) out << ',' << fmt(v);
    out << ',' << fmt(b.lambda);
    for (const auto& c : b.c) {
      for (double v : c) out << ',' << fmt(v);
    }
    out << '\n';
  }
}

/// Inverse of write_particles_csv.
inline void read_particles_csv(const std::string& path, const SplinePosterior& post, std::vector<ParticleState>& particles,
                               std::vector<double>& weights) {
  const CsvTable t = read_csv(path);
  const auto cols = particle_columns(post);
  if (t.header != cols) throw FormatError("particle columns in '" + path + "' do not match the model and spline settings");
  particles.clear();
  weights.clear();
  for (const auto& row : t.rows) {
    std::size_t c = 0;
    weights.push_back(parse_double(row[c++]));
    ParticleState b;
    for (std::size_t d = 0; d < post.model().param_count(); ++d) b.theta.push_back(parse_double(row[c++]));
    if (post.delayed()) b.tau = parse_double(row[c++]);
    for (std::size_t s = 0; s < post.data().series.size(); ++s) b.sigma2.push_back(parse_double(row[c++]));
    b.lambda = parse_double(row[c++]);
    b.c.resize(post.model().dim());
    for (std::size_t i = 0; i < post.model().dim(); ++i) {
      for (std::size_t l = 0; l < post.bases()[i].size(); ++l) b.c[i].push_back(parse_double(row[c++]));
    }
    particles.push_back(std::move(b));
  }
}

inline void write_schedule_csv(const std::string& path, std::span<const ScheduleEntry> schedule) {
  auto out = open_out(path);
  out << "r,alpha,rcess,ress,resampled,accept_theta,accept_tau,accept_c\n";
  for (const auto& e : schedule) {
    out << e.r << ',' << fmt(e.alpha) << ',' << fmt(e.rcess) << ',' << fmt(e.ress) << ',' << (e.resampled ? 1 : 0) << ','
        << fmt(e.accept_theta) << ',' << fmt(e.accept_tau) << ',' << fmt(e.accept_c) << '\n';
  }
}

inline void write_table_csv(const std::string& path, std::span<const std::string> columns, std::span<const std::vector<double>> rows) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << fmt(row[c]);
    out << '\n';
  }
}

/// Numeric table: header plus rows of doubles.
inline void read_table_csv(const std::string& path, std::vector<std::string>& columns, std::vector<std::vector<double>>& rows) {
  const CsvTable t = read_csv(path);
  columns = t.header;
  rows.clear();
  for (const auto& r : t.rows) {
    std::vector<double> v;
    v.reserve(r.size());
    for (const auto& cell : r) v.push_back(parse_double(cell));
    rows.push_back(std::move(v));
  }
}

}  // namespace smcde
