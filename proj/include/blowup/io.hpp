#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "blowup/diagnostics.hpp"
#include "blowup/discrete_system.hpp"
#include "blowup/stepper.hpp"

namespace blowup {

using nlohmann::json;

/// FNV-1a 64-bit hash, used to fingerprint configurations in reports.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;  // 0xcbf29ce484222325
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest round-trip double formatting (%.17g parses back bit-exactly).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Mesh files: coordinates, masses, and the upper triangle of the stiffness
// matrix as parallel triplet arrays.
// ---------------------------------------------------------------------------

inline json mesh_to_json(const DiscreteSystem& sys) {
  json j;
  j["dim"] = sys.dim;
  j["nodes"] = sys.coords;
  j["mass"] = sys.mass;
  json rows = json::array(), cols = json::array(), vals = json::array();
  for (int k = 0; k < sys.n(); ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] < k) continue;  // store i <= j once; symmetry restores the rest
      rows.push_back(k);
      cols.push_back(c[i]);
      vals.push_back(v[i]);
    }
  }
  j["stiffness"] = {{"rows", rows}, {"cols", cols}, {"vals", vals}};
  return j;
}

inline DiscreteSystem mesh_from_json(const json& j) {
  DiscreteSystem sys;
  sys.dim = j.at("dim").get<int>();
  sys.coords = j.at("nodes").get<std::vector<double>>();
  sys.mass = j.at("mass").get<std::vector<double>>();
  int N = static_cast<int>(sys.mass.size());
  if (sys.dim < 1 || N < 1 || sys.coords.size() != static_cast<std::size_t>(N) * sys.dim)
    throw std::invalid_argument("mesh_from_json: inconsistent sizes");

  const json& st = j.at("stiffness");
  auto rows = st.at("rows").get<std::vector<std::int32_t>>();
  auto cols = st.at("cols").get<std::vector<std::int32_t>>();
  auto vals = st.at("vals").get<std::vector<double>>();
  if (rows.size() != cols.size() || rows.size() != vals.size())
    throw std::invalid_argument("mesh_from_json: triplet arrays disagree");

  std::vector<std::map<std::int32_t, double>> entries(N);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::int32_t r = rows[i], c = cols[i];
    if (r < 0 || r >= N || c < 0 || c >= N)
      throw std::invalid_argument("mesh_from_json: triplet index out of range");
    entries[r][c] = vals[i];
    if (r != c) entries[c][r] = vals[i];
  }
  sys.row_ptr.assign(N + 1, 0);
  for (int k = 0; k < N; ++k) sys.row_ptr[k + 1] = sys.row_ptr[k] + static_cast<std::int64_t>(entries[k].size());
  sys.cols.reserve(sys.row_ptr[N]);
  sys.vals.reserve(sys.row_ptr[N]);
  for (int k = 0; k < N; ++k) {
    for (const auto& [c, v] : entries[k]) {
      sys.cols.push_back(c);
      sys.vals.push_back(v);
    }
  }
  return sys;
}

inline void save_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return json::parse(in);
}

inline void save_mesh(const DiscreteSystem& sys, const std::string& path) {
  save_json(mesh_to_json(sys), path);
}

inline DiscreteSystem load_mesh(const std::string& path) { return mesh_from_json(load_json(path)); }

// ---------------------------------------------------------------------------
// Trajectory scalars: CSV with %.17g doubles so files reload bit-exactly.
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("j,t,tau,w,phi,max_u,argmax\n", f);
  for (const ScalarRecord& r : traj.scalars)
    std::fprintf(f, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                 static_cast<unsigned long long>(r.j), r.t, r.tau, r.w, r.phi, r.max_u,
                 static_cast<int>(r.argmax));
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

inline std::vector<ScalarRecord> load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("j,t,tau,w,phi,max_u,argmax", 0) != 0)
    throw std::runtime_error("trajectory csv: bad header in " + path);
  std::vector<ScalarRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ScalarRecord r;
    unsigned long long j = 0;
    int argmax = 0;
    if (std::sscanf(line.c_str(), "%llu,%lg,%lg,%lg,%lg,%lg,%d", &j, &r.t, &r.tau, &r.w, &r.phi,
                    &r.max_u, &argmax) != 7)
      throw std::runtime_error("trajectory csv: malformed row in " + path);
    r.j = j;
    r.argmax = argmax;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// State snapshots: one JSON object per line, keyed by step index.
// ---------------------------------------------------------------------------

inline void write_snapshots_jsonl(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const StateSnapshot& s : traj.snapshots) {
    json j;
    j["j"] = s.j;
    j["t"] = s.t;
    j["u"] = s.u;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<StateSnapshot> load_snapshots_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<StateSnapshot> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    StateSnapshot s;
    s.j = j.at("j").get<std::uint64_t>();
    s.t = j.at("t").get<double>();
    s.u = j.at("u").get<std::vector<double>>();
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostic report serialization.
// ---------------------------------------------------------------------------

inline json report_to_json(const RunReport& r) {
  json j;
  j["termination"] = termination_name(r.termination);
  j["final"] = {{"j", r.final_index}, {"t", r.final_time}, {"w", r.final_w}, {"phi", r.final_phi}};
  j["lyapunov"] = {{"min_phi", r.min_phi},
                   {"violations", r.lyapunov_violations},
                   {"worst_excess", r.lyapunov_worst_excess}};
  j["eta_used"] = r.eta_used;
  j["halvings"] = r.total_halvings;
  j["detection"] = {{"detected", r.detection.detected},
                    {"phi_negative", r.detection.phi_negative},
                    {"index", r.detection.index},
                    {"time", r.detection.time},
                    {"inconsistent", r.detection.inconsistent}};
  if (r.time_estimate) {
    j["blowup_time"] = {{"T", r.time_estimate->T},
                        {"tail_bound", r.time_estimate->tail_bound},
                        {"delta", r.time_estimate->delta},
                        {"flagged", r.time_estimate->flagged}};
  } else {
    j["blowup_time"] = nullptr;
  }
  if (r.rate) {
    j["rate"] = {{"c", r.rate->c},
                 {"ratio", r.rate->ratio},
                 {"samples", r.rate->samples},
                 {"insufficient", r.rate->insufficient}};
  } else {
    j["rate"] = nullptr;
  }
  if (r.blowup_set) {
    const auto& b = *r.blowup_set;
    json nodes = json::array();
    for (const NodeClassification& nc : b.nodes) {
      int d = nc.distance == std::numeric_limits<int>::max() ? -1 : nc.distance;
      nodes.push_back({{"node", nc.node},
                       {"distance", d},
                       {"kind", node_kind_name(nc.kind)},
                       {"power_slope", nc.power_slope},
                       {"power_residual", nc.power_residual},
                       {"log_slope", nc.log_slope},
                       {"log_residual", nc.log_residual},
                       {"growth", nc.growth},
                       {"y_final", nc.y_final}});
    }
    j["blowup_set"] = {{"core", b.core},
                       {"K", b.K},
                       {"log_case", b.log_case},
                       {"window", {b.window_lo, b.window_hi}},
                       {"snapshots_used", b.snapshots_used},
                       {"nodes", nodes}};
  } else {
    j["blowup_set"] = nullptr;
  }
  return j;
}

/// Per-node classification table. The fitted exponent column carries the
/// number the node's kind was judged by: the power-law slope for blow-up
/// nodes, the log-slope for the logarithmic case, and the power slope (with
/// its residual) for everything else.
inline void write_node_classes_csv(const BlowupSetClassification& b, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("node,d,class,fitted_exponent,residual\n", f);
  for (const NodeClassification& nc : b.nodes) {
    int d = nc.distance == std::numeric_limits<int>::max() ? -1 : nc.distance;
    bool log_node = nc.kind == NodeKind::log_blowup;
    double expo = log_node ? nc.log_slope : nc.power_slope;
    double res = log_node ? nc.log_residual : nc.power_residual;
    std::fprintf(f, "%d,%d,%s,%.17g,%.17g\n", nc.node, d, node_kind_name(nc.kind), expo, res);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

}  // namespace blowup
