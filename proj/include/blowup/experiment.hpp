#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "blowup/diagnostics.hpp"
#include "blowup/discrete_system.hpp"
#include "blowup/io.hpp"
#include "blowup/oracle.hpp"
#include "blowup/stepper.hpp"

namespace blowup {

/// Raised when a constructed or loaded system fails the structural property
/// checks (positive masses, sign pattern, row sums, symmetry).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Scheme scheme_from_name(const std::string& s) {
  if (s == "explicit") return Scheme::explicit_euler;
  if (s == "implicit") return Scheme::implicit_euler;
  throw std::invalid_argument("unknown scheme: " + s);
}

inline ProfileFamily profile_family_from_name(const std::string& s) {
  if (s == "sine_product") return ProfileFamily::sine_product;
  if (s == "bump") return ProfileFamily::bump;
  if (s == "constant") return ProfileFamily::constant;
  throw std::invalid_argument("unknown initial profile family: " + s);
}

inline Termination termination_from_name(const std::string& s) {
  for (Termination t : {Termination::w_threshold, Termination::max_steps, Termination::steady,
                        Termination::overflow_guard, Termination::time_horizon})
    if (s == termination_name(t)) return t;
  throw std::invalid_argument("unknown termination: " + s);
}

// ---------------------------------------------------------------------------
// Experiment configuration (JSON schema, version 1).
// ---------------------------------------------------------------------------

struct MeshSpec {
  std::string kind = "fd_interval";  // fd_interval | fd_cube | fem_interval | file
  int dim = 1;                       // fd_cube only
  int n = 10;                        // interior nodes per side (fd kinds)
  std::vector<double> breakpoints;   // fem_interval only
  std::string path;                  // file only
};

struct OutputSpec {
  std::string dir = ".";
  std::string prefix = "study";
};

/// What the run is for: a single trajectory, a rate-constant check, a blow-up
/// set classification, a blow-up time convergence sweep, or a temporal order
/// study on decaying data. The solver does not branch on this; it selects
/// which post-processing and which axes below apply.
inline const std::vector<std::string>& study_kinds() {
  static const std::vector<std::string> kinds = {"single", "rate", "set", "time_convergence",
                                                 "order"};
  return kinds;
}

struct ExperimentConfig {
  std::string study = "single";
  MeshSpec mesh;
  InitialProfile initial{ProfileFamily::sine_product, 1.0};
  SolverConfig solver;
  OutputSpec output;
  std::vector<int> ns;           // sweep/order resolution axis (empty: just mesh.n)
  std::vector<double> lambdas;   // sweep lambda axis (empty: just solver.lambda)
  double t_end = 0.5;            // order study horizon
  std::uint64_t seed = 20260815; // randomized probes only; never touches the solver
};

inline DiscreteSystem build_mesh(const MeshSpec& m) {
  if (m.kind == "fd_interval") return build_fd_interval(m.n);
  if (m.kind == "fd_cube") return build_fd_cube(m.dim, m.n);
  if (m.kind == "fem_interval") return build_fem_interval(m.breakpoints);
  if (m.kind == "file") return load_mesh(m.path);
  throw std::invalid_argument("unknown mesh kind: " + m.kind);
}

inline json experiment_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = 1;
  j["study"] = c.study;
  json m;
  m["kind"] = c.mesh.kind;
  if (c.mesh.kind == "fd_cube") m["dim"] = c.mesh.dim;
  if (c.mesh.kind == "fd_interval" || c.mesh.kind == "fd_cube") m["n"] = c.mesh.n;
  if (c.mesh.kind == "fem_interval") m["breakpoints"] = c.mesh.breakpoints;
  if (c.mesh.kind == "file") m["path"] = c.mesh.path;
  j["mesh"] = m;
  j["initial"] = {{"family", profile_name(c.initial.family)}, {"amplitude", c.initial.amplitude}};
  json s;
  s["p"] = c.solver.p;
  s["lambda"] = c.solver.lambda;
  s["scheme"] = scheme_name(c.solver.scheme);
  s["w_stop"] = c.solver.w_stop;
  s["max_steps"] = c.solver.max_steps;
  s["enforce_comparison_restriction"] = c.solver.enforce_comparison_restriction;
  s["enforce_lyapunov_restriction"] = c.solver.enforce_lyapunov_restriction;
  s["overflow_guard"] = c.solver.overflow_guard;
  if (c.solver.t_stop)
    s["t_stop"] = *c.solver.t_stop;
  else
    s["t_stop"] = nullptr;
  j["solver"] = s;
  j["output"] = {{"dir", c.output.dir}, {"prefix", c.output.prefix}};
  if (!c.ns.empty()) j["ns"] = c.ns;
  if (!c.lambdas.empty()) j["lambdas"] = c.lambdas;
  j["t_end"] = c.t_end;
  j["seed"] = c.seed;
  return j;
}

inline ExperimentConfig experiment_from_json(const json& j) try {
  if (j.value("schema_version", 0) != 1)
    throw std::invalid_argument("config: unsupported schema_version (expected 1)");
  ExperimentConfig c;
  if (j.contains("study")) {
    c.study = j.at("study").get<std::string>();
    const auto& kinds = study_kinds();
    bool known = false;
    for (const auto& k : kinds) known = known || k == c.study;
    if (!known) throw std::invalid_argument("config: unknown study kind: " + c.study);
  }
  if (j.contains("mesh")) {
    const json& m = j.at("mesh");
    c.mesh.kind = m.value("kind", c.mesh.kind);
    c.mesh.dim = m.value("dim", c.mesh.dim);
    c.mesh.n = m.value("n", c.mesh.n);
    if (m.contains("breakpoints")) c.mesh.breakpoints = m.at("breakpoints").get<std::vector<double>>();
    c.mesh.path = m.value("path", c.mesh.path);
  }
  if (j.contains("initial")) {
    const json& i = j.at("initial");
    if (i.contains("family")) c.initial.family = profile_family_from_name(i.at("family").get<std::string>());
    c.initial.amplitude = i.value("amplitude", c.initial.amplitude);
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    c.solver.p = s.value("p", c.solver.p);
    c.solver.lambda = s.value("lambda", c.solver.lambda);
    if (s.contains("scheme")) c.solver.scheme = scheme_from_name(s.at("scheme").get<std::string>());
    c.solver.w_stop = s.value("w_stop", c.solver.w_stop);
    c.solver.max_steps = s.value("max_steps", c.solver.max_steps);
    c.solver.enforce_comparison_restriction =
        s.value("enforce_comparison_restriction", c.solver.enforce_comparison_restriction);
    c.solver.enforce_lyapunov_restriction =
        s.value("enforce_lyapunov_restriction", c.solver.enforce_lyapunov_restriction);
    c.solver.overflow_guard = s.value("overflow_guard", c.solver.overflow_guard);
    if (s.contains("t_stop") && !s.at("t_stop").is_null()) c.solver.t_stop = s.at("t_stop").get<double>();
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    c.output.dir = o.value("dir", c.output.dir);
    c.output.prefix = o.value("prefix", c.output.prefix);
  }
  if (j.contains("ns")) c.ns = j.at("ns").get<std::vector<int>>();
  if (j.contains("lambdas")) c.lambdas = j.at("lambdas").get<std::vector<double>>();
  c.t_end = j.value("t_end", c.t_end);
  c.seed = j.value("seed", c.seed);
  return c;
} catch (const json::exception& e) {
  // Wrong value types, nulls where objects are expected, etc. all surface as
  // the same argument error the explicit checks above use.
  throw std::invalid_argument(std::string("config: malformed document: ") + e.what());
}

// ---------------------------------------------------------------------------
// Single study orchestration.
// ---------------------------------------------------------------------------

struct StudyResult {
  std::unique_ptr<DiscreteSystem> system;  // stable address: trajectory points at it
  Trajectory trajectory;
  RunReport report;
  double runtime_seconds = 0.0;
};

inline StudyResult run_single_study(const ExperimentConfig& cfg) {
  StudyResult res;
  res.system = std::make_unique<DiscreteSystem>(build_mesh(cfg.mesh));
  ValidationReport v = validate_properties(*res.system);
  if (!v.ok()) throw ValidationError("mesh failed property validation: " + v.detail);
  std::vector<double> u0 = sample_initial(*res.system, cfg.initial);
  auto t0 = std::chrono::steady_clock::now();
  res.trajectory = run(*res.system, cfg.solver, u0);
  res.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.report = build_report(res.trajectory);
  return res;
}

inline std::string iso8601_utc_now() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes <dir>/<prefix>.{mesh.json, trajectory.csv, snapshots.jsonl,
/// report.json}. Everything except report.json's run_info block is a pure
/// function of the configuration.
inline void write_study_outputs(const ExperimentConfig& cfg, const StudyResult& res) {
  std::filesystem::create_directories(cfg.output.dir);
  std::string base = cfg.output.dir + "/" + cfg.output.prefix;
  save_mesh(*res.system, base + ".mesh.json");
  write_trajectory_csv(res.trajectory, base + ".trajectory.csv");
  write_snapshots_jsonl(res.trajectory, base + ".snapshots.jsonl");
  if (res.report.blowup_set) write_node_classes_csv(*res.report.blowup_set, base + ".node_classes.csv");

  json cfg_json = experiment_to_json(cfg);
  json doc;
  doc["schema_version"] = 1;
  doc["config"] = cfg_json;
  doc["config_hash"] = hex64(fnv1a64(cfg_json.dump()));
  doc["mesh_info"] = {{"n", res.system->n()}, {"dim", res.system->dim}};
  doc["report"] = report_to_json(res.report);
  doc["run_info"] = {{"timestamp", iso8601_utc_now()}, {"runtime_seconds", res.runtime_seconds}};
  save_json(doc, base + ".report.json");
}

/// Reassembles a trajectory from the four files written by
/// write_study_outputs, enough to rerun every post-processing diagnostic.
struct LoadedStudy {
  std::unique_ptr<DiscreteSystem> system;
  ExperimentConfig config;
  Trajectory trajectory;
  json report_doc;
};

inline LoadedStudy load_study(const std::string& dir, const std::string& prefix) {
  std::string base = dir + "/" + prefix;
  LoadedStudy s;
  s.system = std::make_unique<DiscreteSystem>(load_mesh(base + ".mesh.json"));
  s.report_doc = load_json(base + ".report.json");
  s.config = experiment_from_json(s.report_doc.at("config"));

  Trajectory& t = s.trajectory;
  t.system = s.system.get();
  t.config = s.config.solver;
  t.scalars = load_trajectory_csv(base + ".trajectory.csv");
  t.snapshots = load_snapshots_jsonl(base + ".snapshots.jsonl");

  const json& rep = s.report_doc.at("report");
  t.termination = termination_from_name(rep.at("termination").get<std::string>());
  t.final_index = rep.at("final").at("j").get<std::uint64_t>();
  t.final_time = rep.at("final").at("t").get<double>();
  t.final_w = rep.at("final").at("w").get<double>();
  t.final_phi = rep.at("final").at("phi").get<double>();
  t.min_phi = rep.at("lyapunov").at("min_phi").get<double>();
  t.lyapunov_violations = rep.at("lyapunov").at("violations").get<std::uint64_t>();
  t.lyapunov_worst_excess = rep.at("lyapunov").at("worst_excess").get<double>();
  t.eta_used = rep.at("eta_used").get<double>();
  t.total_halvings = rep.at("halvings").get<std::uint64_t>();
  const json& det = rep.at("detection");
  t.phi_went_negative = det.value("phi_negative", det.at("detected").get<bool>());
  t.first_negative_phi_index = det.at("index").get<std::uint64_t>();
  t.first_negative_phi_time = det.at("time").get<double>();
  if (!t.snapshots.empty()) t.final_state = t.snapshots.back().u;
  return s;
}

// ---------------------------------------------------------------------------
// Parameter sweep over mesh resolution and lambda.
// ---------------------------------------------------------------------------

struct SweepCell {
  int n = 0;
  double h = 0.0;
  double lambda = 0.0;
  std::string status;  // ok | no_blowup | rejected_lambda | flagged | solver_error
  std::uint64_t steps = 0;
  double T = 0.0;
  double tail_bound = 0.0;
  double rate_c = 0.0;      // measured rate constant (ok cells only)
  double rate_ratio = 0.0;  // rate_c / C_p
  int K = 0;                // predicted propagation depth for this p
  double runtime_seconds = 0.0;
};

namespace detail {
template <class F>
inline void parallel_for(int count, int threads, F&& task) {
  threads = std::max(1, std::min(threads, 64));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) task(i);
    });
  }
  for (auto& th : pool) th.join();
}
}  // namespace detail

/// Runs the (n, lambda) grid in a deterministic order (n-major, lambda-minor);
/// results are slotted by grid index, so the table is identical whatever the
/// thread count. Each cell owns its mesh; cells never share mutable state.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<int>& ns,
                                        const std::vector<double>& lambdas, int threads) {
  int count = static_cast<int>(ns.size() * lambdas.size());
  std::vector<SweepCell> cells(count);
  detail::parallel_for(count, threads, [&](int idx) {
    int ni = idx / static_cast<int>(lambdas.size());
    int li = idx % static_cast<int>(lambdas.size());
    SweepCell& cell = cells[idx];
    cell.n = ns[ni];
    cell.lambda = lambdas[li];
    cell.K = propagation_depth(base.solver.p).K;

    ExperimentConfig cfg = base;
    cfg.mesh.n = cell.n;
    cfg.solver.lambda = cell.lambda;
    auto t0 = std::chrono::steady_clock::now();
    try {
      DiscreteSystem sys = build_mesh(cfg.mesh);
      cell.h = cfg.mesh.kind == "fd_interval" || cfg.mesh.kind == "fd_cube"
                   ? 1.0 / (cell.n + 1)
                   : 0.0;
      std::vector<double> u0 = sample_initial(sys, cfg.initial);
      if (cfg.solver.scheme == Scheme::explicit_euler && cfg.solver.enforce_comparison_restriction &&
          !check_initial_lambda(sys, cfg.solver, u0).passed) {
        cell.status = "rejected_lambda";
      } else {
        Trajectory traj = run(sys, cfg.solver, u0);
        cell.steps = traj.final_index;
        if (!detect_blowup(traj).detected) {
          cell.status = "no_blowup";
        } else {
          BlowupTimeEstimate est = estimate_blowup_time(traj);
          cell.T = est.T;
          cell.tail_bound = est.tail_bound;
          if (est.flagged) {
            cell.status = "flagged";
          } else {
            RateEstimate rc = rate_constant(traj, est.T);
            cell.rate_c = rc.c;
            cell.rate_ratio = rc.ratio;
            cell.status = "ok";
          }
        }
      }
    } catch (const std::exception&) {
      cell.status = "solver_error";
    }
    cell.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  return cells;
}

inline void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("n,h,lambda,status,steps,T_estimate,tail_bound,rate_constant,rate_ratio,K,runtime_seconds\n", f);
  for (const SweepCell& c : cells)
    std::fprintf(f, "%d,%.17g,%.17g,%s,%llu,%.17g,%.17g,%.17g,%.17g,%d,%.3f\n", c.n, c.h,
                 c.lambda, c.status.c_str(), static_cast<unsigned long long>(c.steps), c.T,
                 c.tail_bound, c.rate_c, c.rate_ratio, c.K, c.runtime_seconds);
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Temporal order study on decaying data against the RK4 reference.
// ---------------------------------------------------------------------------

struct OrderPoint {
  int n = 0;
  double h = 0.0;
  double lambda = 0.0;  // h^2
  std::uint64_t steps = 0;
  double err_inf = 0.0;          // ||u(t_end) - reference||_inf / ||reference||_inf
  double consistency_inf = 0.0;  // max_k mass-normalized truncation residual at t = 0
  double oracle_drift = 0.0;     // reference self-convergence: rel change on step doubling
};

struct OrderStudy {
  double t_end = 0.0;
  std::vector<OrderPoint> points;
  std::vector<double> observed_order;     // between consecutive ladder rungs
  std::vector<double> consistency_ratio;  // rho(h_i) / rho(h_{i+1})
};

/// Integrates decaying data to a fixed horizon on a ladder of meshes with
/// lambda = h^2 and measures the error against a fine fixed-step RK4 solve of
/// the same semi-discrete system, isolating the time-stepping error. The
/// truncation residual of the stencil is measured independently against the
/// decaying sine field.
inline OrderStudy run_order(const ExperimentConfig& base, const std::vector<int>& ns, double t_end,
                            std::int64_t ref_steps = 2'000'000) {
  if (!(t_end > 0.0)) throw std::invalid_argument("run_order: t_end must be positive");
  OrderStudy study;
  study.t_end = t_end;
  for (int n : ns) {
    ExperimentConfig cfg = base;
    cfg.mesh.n = n;
    DiscreteSystem sys = build_mesh(cfg.mesh);
    ValidationReport v = validate_properties(sys);
    if (!v.ok()) throw ValidationError("mesh failed property validation: " + v.detail);
    double h = 1.0 / (n + 1);

    OrderPoint pt;
    pt.n = n;
    pt.h = h;
    pt.lambda = h * h;
    cfg.solver.lambda = pt.lambda;
    cfg.solver.t_stop = t_end;
    cfg.solver.max_steps = std::numeric_limits<std::uint64_t>::max();

    std::vector<double> u0 = sample_initial(sys, cfg.initial);
    if (phi_h(sys, cfg.solver.p, u0) < 0.0)
      throw std::invalid_argument(
          "run_order: initial data is in the blow-up regime (negative Lyapunov functional); "
          "the order study needs decaying data — lower the amplitude");
    Trajectory traj = run(sys, cfg.solver, u0);
    if (traj.termination != Termination::time_horizon)
      throw std::invalid_argument(std::string("run_order: run ended before the horizon (") +
                                  termination_name(traj.termination) +
                                  "); the order study needs decaying data");
    pt.steps = traj.final_index;

    // The reference must agree with itself under step doubling before it may
    // judge anyone else; if it does not, it is under-resolved for this system.
    std::vector<double> ref_c =
        reference_integrate(sys, cfg.solver.p, u0, t_end, ref_steps, true).endpoint();
    std::vector<double> ref =
        reference_integrate(sys, cfg.solver.p, u0, t_end, 2 * ref_steps, true).endpoint();
    double dnum = 0.0, dden = 0.0;
    for (int k = 0; k < sys.n(); ++k) {
      dnum = std::max(dnum, std::abs(ref[k] - ref_c[k]));
      dden = std::max(dden, std::abs(ref[k]));
    }
    pt.oracle_drift = dden > 0.0 ? dnum / dden : dnum;
    if (!(pt.oracle_drift < 1e-10))
      throw OracleError("run_order: reference integrator failed self-convergence (drift " +
                        std::to_string(pt.oracle_drift) + "); raise ref_steps");

    double num = 0.0, den = 0.0;
    for (int k = 0; k < sys.n(); ++k) {
      num = std::max(num, std::abs(traj.final_state[k] - ref[k]));
      den = std::max(den, std::abs(ref[k]));
    }
    pt.err_inf = den > 0.0 ? num / den : num;

    ManufacturedSolution ms = decaying_sine(sys.dim);
    std::vector<double> rho = consistency_residual(sys, ms, 0.0);
    for (double r : rho) pt.consistency_inf = std::max(pt.consistency_inf, std::abs(r));

    study.points.push_back(pt);
  }
  for (std::size_t i = 0; i + 1 < study.points.size(); ++i) {
    const OrderPoint& a = study.points[i];
    const OrderPoint& b = study.points[i + 1];
    study.observed_order.push_back(std::log(a.err_inf / b.err_inf) / std::log(a.h / b.h));
    study.consistency_ratio.push_back(a.consistency_inf / b.consistency_inf);
  }
  return study;
}

inline void write_order_csv(const OrderStudy& study, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("n,h,lambda,steps,err_inf,consistency_inf,oracle_drift,observed_order,consistency_ratio\n", f);
  for (std::size_t i = 0; i < study.points.size(); ++i) {
    const OrderPoint& p = study.points[i];
    std::fprintf(f, "%d,%.17g,%.17g,%llu,%.17g,%.17g,%.17g,", p.n, p.h, p.lambda,
                 static_cast<unsigned long long>(p.steps), p.err_inf, p.consistency_inf,
                 p.oracle_drift);
    if (i + 1 < study.points.size())
      std::fprintf(f, "%.17g,%.17g\n", study.observed_order[i], study.consistency_ratio[i]);
    else
      std::fputs(",\n", f);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

}  // namespace blowup
