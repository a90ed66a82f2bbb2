// Command-line harness for the adaptive-step blow-up solver.
//
// Subcommands:
//   mesh   build a discrete system and save it as JSON
//   run    integrate one configuration and write mesh/trajectory/report files
//   sweep  run a (resolution x lambda) grid and write a summary CSV
//   order  temporal order study on decaying data against an RK4 reference
//   rate   measure the blow-up rate constant of a run (fresh or saved)
//
// Exit codes: 0 success, 2 usage/configuration error, 3 numerical failure,
// 4 reference-integrator (oracle) failure.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "blowup/experiment.hpp"

namespace {

using namespace blowup;

int env_threads() {
  const char* e = std::getenv("BLOWUP_THREADS");
  unsigned hw = std::thread::hardware_concurrency();
  int threads = hw > 0 ? static_cast<int>(hw) : 1;
  if (e != nullptr) {
    int v = std::atoi(e);
    if (v >= 1) threads = v;
  }
  return threads;
}

// Flag overrides shared by run/sweep/order/rate: values only land in the
// config when the user actually passed the flag.
struct Overrides {
  std::string config_path;
  std::string mesh_kind;
  int fd_interval = 0;
  std::vector<int> fd_cube;
  std::string mesh_file;
  double p = 0.0;
  double lambda = 0.0;
  std::string scheme;
  double w_stop = 0.0;
  std::uint64_t max_steps = 0;
  double amplitude = 0.0;
  std::string family;
  double t_stop = 0.0;
  std::string out_dir;
  std::string prefix;
  std::vector<int> ns;
  std::vector<double> lambdas;
  double t_end = 0.0;
};

void add_override_flags(CLI::App* cmd, Overrides& o, bool with_axes) {
  cmd->add_option("-c,--config", o.config_path, "experiment configuration JSON");
  cmd->add_option("--fd-interval", o.fd_interval, "finite-difference interval mesh with N interior nodes");
  cmd->add_option("--fd-cube", o.fd_cube, "finite-difference cube mesh: DIM N")->expected(2);
  cmd->add_option("--mesh-file", o.mesh_file, "load the mesh from a JSON file");
  cmd->add_option("-p", o.p, "reaction exponent p > 1");
  cmd->add_option("--lambda", o.lambda, "step-law constant: tau_j = lambda / w_j^p");
  cmd->add_option("--scheme", o.scheme, "explicit | implicit");
  cmd->add_option("--w-stop", o.w_stop, "stop once the weighted mass w reaches this");
  cmd->add_option("--max-steps", o.max_steps, "hard cap on the number of steps");
  cmd->add_option("--amplitude", o.amplitude, "initial profile amplitude");
  cmd->add_option("--family", o.family, "initial profile family: sine_product | bump | constant");
  cmd->add_option("--t-stop", o.t_stop, "stop at this physical time");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--prefix", o.prefix, "output file prefix");
  if (with_axes) {
    cmd->add_option("--ns", o.ns, "resolution axis (interior node counts)");
    cmd->add_option("--lambdas", o.lambdas, "lambda axis");
    cmd->add_option("--t-end", o.t_end, "order-study horizon");
  }
}

ExperimentConfig load_with_overrides(const CLI::App* cmd, const Overrides& o) {
  // Not every subcommand registers every flag, so probe without throwing.
  auto given = [cmd](const char* name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = experiment_from_json(load_json(o.config_path));
  if (given("--fd-interval")) {
    cfg.mesh.kind = "fd_interval";
    cfg.mesh.n = o.fd_interval;
  }
  if (given("--fd-cube")) {
    cfg.mesh.kind = "fd_cube";
    cfg.mesh.dim = o.fd_cube[0];
    cfg.mesh.n = o.fd_cube[1];
  }
  if (given("--mesh-file")) {
    cfg.mesh.kind = "file";
    cfg.mesh.path = o.mesh_file;
  }
  if (given("-p")) cfg.solver.p = o.p;
  if (given("--lambda")) cfg.solver.lambda = o.lambda;
  if (given("--scheme")) cfg.solver.scheme = scheme_from_name(o.scheme);
  if (given("--w-stop")) cfg.solver.w_stop = o.w_stop;
  if (given("--max-steps")) cfg.solver.max_steps = o.max_steps;
  if (given("--amplitude")) cfg.initial.amplitude = o.amplitude;
  if (given("--family")) cfg.initial.family = profile_family_from_name(o.family);
  if (given("--t-stop")) cfg.solver.t_stop = o.t_stop;
  if (given("--out-dir")) cfg.output.dir = o.out_dir;
  if (given("--prefix")) cfg.output.prefix = o.prefix;
  if (given("--ns")) cfg.ns = o.ns;
  if (given("--lambdas")) cfg.lambdas = o.lambdas;
  if (given("--t-end")) cfg.t_end = o.t_end;
  return cfg;
}

void print_report_summary(const RunReport& r) {
  std::printf("termination     %s\n", termination_name(r.termination));
  std::printf("steps           %llu\n", static_cast<unsigned long long>(r.final_index));
  std::printf("final_time      %.17g\n", r.final_time);
  std::printf("final_w         %.17g\n", r.final_w);
  std::printf("min_phi         %.17g\n", r.min_phi);
  std::printf("halvings        %llu\n", static_cast<unsigned long long>(r.total_halvings));
  std::printf("lyapunov_violations %llu\n", static_cast<unsigned long long>(r.lyapunov_violations));
  std::printf("detected        %s\n", r.detection.detected ? "true" : "false");
  if (r.detection.inconsistent)
    std::printf("warning         negative functional on a steady run (inconsistent)\n");
  if (r.time_estimate) {
    std::printf("T_estimate      %.17g\n", r.time_estimate->T);
    std::printf("tail_bound      %.17g\n", r.time_estimate->tail_bound);
    if (r.time_estimate->flagged) std::printf("warning         nonpositive final increment; T fell back to final time\n");
  }
  if (r.rate) {
    std::printf("rate_constant   %.17g\n", r.rate->c);
    std::printf("rate_ratio      %.17g\n", r.rate->ratio);
    if (r.rate->insufficient) std::printf("warning         fewer than 50 usable snapshots for the rate\n");
  }
  if (r.blowup_set) {
    std::printf("blowup_core     [");
    for (std::size_t i = 0; i < r.blowup_set->core.size(); ++i)
      std::printf("%s%d", i ? ", " : "", r.blowup_set->core[i]);
    std::printf("]\n");
    std::printf("depth_K         %d%s\n", r.blowup_set->K, r.blowup_set->log_case ? " (log case)" : "");
  }
}

int cmd_mesh(int fd_interval, const std::vector<int>& fd_cube, const std::vector<double>& fem,
             const std::string& out, bool have_interval) {
  DiscreteSystem sys;
  if (have_interval) {
    sys = build_fd_interval(fd_interval);
  } else if (!fd_cube.empty()) {
    sys = build_fd_cube(fd_cube[0], fd_cube[1]);
  } else if (!fem.empty()) {
    sys = build_fem_interval(fem);
  } else {
    throw std::invalid_argument("mesh: pass one of --fd-interval, --fd-cube, --fem");
  }
  ValidationReport v = validate_properties(sys);
  if (!v.ok()) throw ValidationError("mesh failed property validation: " + v.detail);
  save_mesh(sys, out);
  std::printf("wrote %s: dim=%d nodes=%d\n", out.c_str(), sys.dim, sys.n());
  return 0;
}

int cmd_run(const CLI::App* cmd, const Overrides& o) {
  ExperimentConfig cfg = load_with_overrides(cmd, o);
  StudyResult res = run_single_study(cfg);
  write_study_outputs(cfg, res);
  print_report_summary(res.report);
  std::printf("outputs         %s/%s.{mesh.json,trajectory.csv,snapshots.jsonl,report.json%s}\n",
              cfg.output.dir.c_str(), cfg.output.prefix.c_str(),
              res.report.blowup_set ? ",node_classes.csv" : "");
  return 0;
}

int cmd_sweep(const CLI::App* cmd, const Overrides& o, const std::string& out_csv) {
  ExperimentConfig cfg = load_with_overrides(cmd, o);
  std::vector<int> ns = cfg.ns.empty() ? std::vector<int>{cfg.mesh.n} : cfg.ns;
  std::vector<double> lambdas =
      cfg.lambdas.empty() ? std::vector<double>{cfg.solver.lambda} : cfg.lambdas;
  int threads = env_threads();
  std::vector<SweepCell> cells = run_sweep(cfg, ns, lambdas, threads);
  std::string path = out_csv;
  if (path.empty()) {
    std::filesystem::create_directories(cfg.output.dir);
    path = cfg.output.dir + "/" + cfg.output.prefix + ".sweep.csv";
  }
  write_sweep_csv(cells, path);
  int failures = 0;
  for (const SweepCell& c : cells) {
    std::printf("n=%-4d lambda=%-12.6g %-15s T=%-22.17g rate=%.17g\n", c.n, c.lambda,
                c.status.c_str(), c.T, c.rate_c);
    if (c.status == "solver_error") ++failures;
  }
  std::printf("wrote %s (%zu rows, %d failures)\n", path.c_str(), cells.size(), failures);
  return 0;
}

int cmd_order(const CLI::App* cmd, const Overrides& o, const std::string& out_csv,
              std::int64_t ref_steps) {
  ExperimentConfig cfg = load_with_overrides(cmd, o);
  std::vector<int> ns = cfg.ns.empty() ? std::vector<int>{cfg.mesh.n} : cfg.ns;
  OrderStudy study = run_order(cfg, ns, cfg.t_end, ref_steps);
  std::string path = out_csv;
  if (path.empty()) {
    std::filesystem::create_directories(cfg.output.dir);
    path = cfg.output.dir + "/" + cfg.output.prefix + ".order.csv";
  }
  write_order_csv(study, path);
  for (std::size_t i = 0; i < study.points.size(); ++i) {
    const OrderPoint& p = study.points[i];
    std::printf("n=%-4d h=%-10.6g err=%-14.6g", p.n, p.h, p.err_inf);
    if (i > 0) std::printf(" order=%.4f", study.observed_order[i - 1]);
    std::printf("\n");
  }
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_rate(const CLI::App* cmd, const Overrides& o, const std::string& load_dir,
             const std::string& load_prefix) {
  RunReport report;
  double exact = 0.0;
  if (!load_dir.empty()) {
    LoadedStudy s = load_study(load_dir, load_prefix);
    report = build_report(s.trajectory);
    exact = rate_constant(s.config.solver.p);
  } else {
    ExperimentConfig cfg = load_with_overrides(cmd, o);
    StudyResult res = run_single_study(cfg);
    report = res.report;
    exact = rate_constant(cfg.solver.p);
  }
  if (!report.detection.detected)
    throw SolveError("rate: no blow-up detected; the rate constant is undefined for this run");
  if (!report.time_estimate || report.time_estimate->flagged)
    throw SolveError("rate: blow-up time estimate is degenerate (nonpositive final increment)");
  std::printf("T_estimate      %.17g\n", report.time_estimate->T);
  std::printf("tail_bound      %.17g\n", report.time_estimate->tail_bound);
  std::printf("rate_constant   %.17g\n", report.rate->c);
  std::printf("exact_constant  %.17g\n", exact);
  std::printf("ratio           %.17g\n", report.rate->ratio);
  std::printf("samples         %d%s\n", report.rate->samples,
              report.rate->insufficient ? " (insufficient)" : "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-time-step solver for reaction-diffusion blow-up problems"};
  app.require_subcommand(1);

  // mesh
  CLI::App* mesh = app.add_subcommand("mesh", "build a discrete system and save it as JSON");
  int m_interval = 0;
  std::vector<int> m_cube;
  std::vector<double> m_fem;
  std::string m_out;
  mesh->add_option("--fd-interval", m_interval, "interval mesh with N interior nodes");
  mesh->add_option("--fd-cube", m_cube, "cube mesh: DIM N")->expected(2);
  mesh->add_option("--fem", m_fem, "piecewise-linear interval mesh from breakpoints (lumped mass)");
  mesh->add_option("-o,--out", m_out, "output path")->required();

  // run
  CLI::App* run_cmd = app.add_subcommand("run", "integrate one configuration and write outputs");
  Overrides run_o;
  add_override_flags(run_cmd, run_o, false);

  // sweep
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a (resolution x lambda) grid");
  Overrides sweep_o;
  std::string sweep_out;
  add_override_flags(sweep_cmd, sweep_o, true);
  sweep_cmd->add_option("-o,--out", sweep_out, "summary CSV path (default <dir>/<prefix>.sweep.csv)");

  // order
  CLI::App* order_cmd = app.add_subcommand("order", "temporal order study on decaying data");
  Overrides order_o;
  std::string order_out;
  std::int64_t order_ref_steps = 2'000'000;
  add_override_flags(order_cmd, order_o, true);
  order_cmd->add_option("-o,--out", order_out, "table CSV path (default <dir>/<prefix>.order.csv)");
  order_cmd->add_option("--ref-steps", order_ref_steps, "reference integrator step count");

  // rate
  CLI::App* rate_cmd = app.add_subcommand("rate", "measure the blow-up rate constant");
  Overrides rate_o;
  std::string rate_load_dir, rate_load_prefix = "study";
  add_override_flags(rate_cmd, rate_o, false);
  rate_cmd->add_option("--load-dir", rate_load_dir, "post-process a saved study from this directory");
  rate_cmd->add_option("--load-prefix", rate_load_prefix, "saved study prefix (default: study)");

  try {
    app.parse(argc, argv);
    if (mesh->parsed())
      return cmd_mesh(m_interval, m_cube, m_fem, m_out, mesh->count("--fd-interval") > 0);
    if (run_cmd->parsed()) return cmd_run(run_cmd, run_o);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_cmd, sweep_o, sweep_out);
    if (order_cmd->parsed()) return cmd_order(order_cmd, order_o, order_out, order_ref_steps);
    if (rate_cmd->parsed()) return cmd_rate(rate_cmd, rate_o, rate_load_dir, rate_load_prefix);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const blowup::OracleError& e) {
    std::fprintf(stderr, "oracle failure: %s\n", e.what());
    return 4;
  } catch (const blowup::SolveError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
