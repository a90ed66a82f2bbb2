#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "blowup/discrete_system.hpp"
#include "blowup/numerics.hpp"
#include "blowup/stepper.hpp"

namespace blowup {

/// Lyapunov functional used by the stability theory and the blow-up test:
///   phi(U) = 1/2 <A U, U> - 1/(p+1) sum_k m_k u_k^{p+1}.
/// It is nonincreasing along implicit trajectories and along explicit ones
/// that respect the a-posteriori step restriction; once it is negative the
/// trajectory can no longer approach a steady state and w must blow up.
inline double phi_h(const DiscreteSystem& sys, double p, std::span<const double> u) {
  int N = sys.n();
  if (static_cast<int>(u.size()) != N) throw std::invalid_argument("phi_h: size mismatch");
  double aq = 0.0, pw = 0.0;
  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += v[i] * u[c[i]];
    double up = pow_p(u[k], p);
    aq += s * u[k];
    pw += (sys.mass[k] * up) * u[k];
  }
  return 0.5 * aq - pw / (p + 1.0);
}

/// Variant with the quadratic mass weight on the reaction term,
///   <A U, U> - 1/(p+1) sum_k m_k^2 u_k^{p+1},
/// kept for display alongside phi_h. Both share the sign-change diagnosis on
/// uniform meshes; phi_h is the one the solver monitors.
inline double phi_h_weighted(const DiscreteSystem& sys, double p, std::span<const double> u) {
  int N = sys.n();
  if (static_cast<int>(u.size()) != N) throw std::invalid_argument("phi_h_weighted: size mismatch");
  double aq = 0.0, pw = 0.0;
  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += v[i] * u[c[i]];
    double up = pow_p(u[k], p);
    aq += s * u[k];
    pw += (sys.mass[k] * sys.mass[k] * up) * u[k];
  }
  return aq - pw / (p + 1.0);
}

struct BlowupDetection {
  bool detected = false;
  bool phi_negative = false;  // the functional went negative at some step
  std::uint64_t index = 0;    // first step with phi < 0
  double time = 0.0;
  bool inconsistent = false;  // negative phi yet the run settled to a steady state
};

/// Sign test on the Lyapunov functional, evaluated online during the run so
/// record thinning cannot miss the first crossing. Blow-up is reported only
/// when the negative functional is corroborated by the run actually escaping
/// (w threshold or overflow); a negative phi on a run that went steady is a
/// contradiction worth surfacing, not a detection.
inline BlowupDetection detect_blowup(const Trajectory& traj) {
  BlowupDetection d;
  d.phi_negative = traj.phi_went_negative;
  d.index = traj.first_negative_phi_index;
  d.time = traj.first_negative_phi_time;
  bool escaped = traj.termination == Termination::w_threshold ||
                 traj.termination == Termination::overflow_guard;
  d.detected = d.phi_negative && escaped;
  d.inconsistent = d.phi_negative && traj.termination == Termination::steady;
  return d;
}

/// 1/(p-1): the power in u ~ C_p (T-t)^{-1/(p-1)}.
inline double rate_exponent(double p) {
  if (!(p > 1.0)) throw std::invalid_argument("rate_exponent: p must exceed 1");
  return 1.0 / (p - 1.0);
}

/// C_p = (1/(p-1))^{1/(p-1)}: the constant the rescaled maximum approaches.
inline double rate_constant(double p) {
  double a = rate_exponent(p);
  return std::pow(a, a);
}

struct BlowupTimeEstimate {
  double T = 0.0;
  double tail_bound = 0.0;  // bound on the time remaining past the final step
  double delta = 0.0;       // final increment w^J - w^{J-1}
  bool flagged = false;     // nonpositive increment: T fell back to the final time
};

/// Extrapolates the remaining time from the final slope of w against the step
/// index: sum of future steps ~ (lambda/delta) * w^{1-p} / (p-1). The tail
/// bound uses the smallest increment over the last 100 steps; increments only
/// grow as w climbs, so it bounds the remaining time from above.
inline BlowupTimeEstimate estimate_blowup_time(const Trajectory& traj) {
  if (traj.final_index < 1) throw std::invalid_argument("estimate_blowup_time: no steps taken");
  const auto& recs = traj.scalars;
  const ScalarRecord& last = recs.back();
  if (last.j != traj.final_index || recs.size() < 2)
    throw std::invalid_argument("estimate_blowup_time: missing final records");
  const ScalarRecord& prev = recs[recs.size() - 2];
  if (prev.j + 1 != last.j)
    throw std::invalid_argument("estimate_blowup_time: final records not consecutive");

  double p = traj.config.p;
  double lambda = traj.config.lambda;

  BlowupTimeEstimate est;
  est.delta = last.w - prev.w;
  if (!(est.delta > 0.0)) {
    est.T = last.t;
    est.flagged = true;
    return est;
  }
  double remaining = (lambda / est.delta) * std::pow(last.w, 1.0 - p) / (p - 1.0);
  est.T = last.t + remaining;

  double dmin = est.delta;
  std::size_t i = recs.size() - 1;
  for (int back = 0; back < 100 && i >= 1; ++back, --i) {
    const ScalarRecord& a = recs[i - 1];
    const ScalarRecord& b = recs[i];
    if (a.j + 1 != b.j) break;  // left the dense tail window
    double d = b.w - a.w;
    if (!(d > 0.0)) break;      // keep the bound to the recent monotone streak
    dmin = std::min(dmin, d);
  }
  est.tail_bound = (lambda / dmin) * std::pow(last.w, 1.0 - p) / (p - 1.0);
  return est;
}

struct RateEstimate {
  double c = 0.0;            // median of max_k y_k over trailing snapshots
  double ratio = 0.0;        // c / rate_constant(p)
  int samples = 0;
  bool insufficient = false; // fewer than 50 usable trailing snapshots
};

/// Measures the blow-up rate constant from the trailing state snapshots: the
/// rescaled maximum y = (max_k u_k) * (T-t)^{1/(p-1)} should level off at C_p.
/// The last five snapshots are skipped (there the extrapolation error in T
/// dominates T-t) and up to 50 earlier ones vote by median. Fewer than 50
/// usable snapshots marks the estimate insufficient rather than failing.
inline RateEstimate rate_constant(const Trajectory& traj, double T) {
  double a = rate_exponent(traj.config.p);
  const auto& snaps = traj.snapshots;
  std::vector<double> ys;
  std::size_t skip = 5;
  for (std::size_t i = snaps.size(); i-- > 0 && ys.size() < 50;) {
    if (skip > 0) { --skip; continue; }
    double dt = T - snaps[i].t;
    if (!(dt > 0.0)) continue;
    double mx = 0.0;
    for (double v : snaps[i].u) mx = std::max(mx, v);
    ys.push_back(mx * std::pow(dt, a));
  }
  RateEstimate r;
  r.samples = static_cast<int>(ys.size());
  r.insufficient = ys.size() < 50;
  if (!ys.empty()) {
    r.c = median(ys);
    r.ratio = r.c / rate_constant(traj.config.p);
  }
  return r;
}

struct RescaledSnapshot {
  std::uint64_t j = 0;
  double t = 0.0;
  std::vector<double> y;  // y_k = u_k * (T-t)^{1/(p-1)}
};

/// The trajectory in self-similar variables: the full per-node rescaled
/// profile at every snapshot strictly before T (later snapshots are skipped).
/// Near blow-up the maximal entry should stay bounded and settle toward C_p.
inline std::vector<RescaledSnapshot> rescale(const Trajectory& traj, double T) {
  double a = rate_exponent(traj.config.p);
  std::vector<RescaledSnapshot> out;
  out.reserve(traj.snapshots.size());
  for (const auto& s : traj.snapshots) {
    double dt = T - s.t;
    if (!(dt > 0.0)) continue;
    RescaledSnapshot rs;
    rs.j = s.j;
    rs.t = s.t;
    double f = std::pow(dt, a);
    rs.y.resize(s.u.size());
    for (std::size_t k = 0; k < s.u.size(); ++k) rs.y[k] = s.u[k] * f;
    out.push_back(std::move(rs));
  }
  return out;
}

/// y_k = u_k * (T-t)^{1/(p-1)}: the profile in self-similar variables.
inline std::vector<double> rescaled_profile(std::span<const double> u, double p, double T, double t) {
  if (!(T > t)) throw std::invalid_argument("rescaled_profile: need t < T");
  double f = std::pow(T - t, rate_exponent(p));
  std::vector<double> y(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) y[k] = u[k] * f;
  return y;
}

/// Breadth-first distance from a source set over the stiffness stencil
/// (nodes are adjacent when they share an off-diagonal entry). Unreachable
/// nodes get INT_MAX.
inline std::vector<int> graph_distance(const DiscreteSystem& sys, const std::vector<int>& sources) {
  int N = sys.n();
  std::vector<int> dist(N, std::numeric_limits<int>::max());
  std::vector<int> queue;
  queue.reserve(N);
  for (int s : sources) {
    if (s < 0 || s >= N) throw std::invalid_argument("graph_distance: source out of range");
    if (dist[s] != 0) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    int k = queue[head];
    auto c = sys.row_cols(k);
    for (std::int32_t nb : c) {
      if (nb == k) continue;
      if (dist[nb] == std::numeric_limits<int>::max()) {
        dist[nb] = dist[k] + 1;
        queue.push_back(nb);
      }
    }
  }
  return dist;
}

struct PropagationDepth {
  int K = 0;        // blow-up reaches graph distance K from the maximal set
  bool log_case = false;  // p sits exactly on (K+1)/K: distance-K nodes grow like log(1/(T-t))
};

/// Depth K with (K+2)/(K+1) < p <= (K+1)/K, i.e. K = floor(1/(p-1)), with the
/// bracket re-checked directly so a half-ulp loss in 1/(p-1) cannot shift K at
/// the boundary values p = (K+1)/K where the logarithmic regime lives.
inline PropagationDepth propagation_depth(double p) {
  if (!(p > 1.0)) throw std::invalid_argument("propagation_depth: p must exceed 1");
  int K = static_cast<int>(std::floor(1.0 / (p - 1.0)));
  if (K < 0) K = 0;
  while (K > 0 && p > (K + 1.0) / K) --K;
  while (!(p > (K + 2.0) / (K + 1.0))) ++K;
  PropagationDepth d;
  d.K = K;
  d.log_case = K > 0 && p == (K + 1.0) / K;
  return d;
}

enum class NodeKind { core, power_blowup, log_blowup, bounded, unclassified };

inline const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::core: return "core";
    case NodeKind::power_blowup: return "power_blowup";
    case NodeKind::log_blowup: return "log_blowup";
    case NodeKind::bounded: return "bounded";
    case NodeKind::unclassified: return "unclassified";
  }
  return "?";
}

struct NodeClassification {
  int node = 0;
  int distance = 0;          // graph distance from the core (INT_MAX if unreachable)
  NodeKind kind = NodeKind::unclassified;
  double power_slope = 0.0;  // d ln u / d ln(T-t) over the window; -1/(p-1)+d in theory
  double power_residual = 0.0;
  double log_slope = 0.0;    // d u / d ln(1/(T-t)) over the window
  double log_residual = 0.0;
  double growth = 0.0;       // max u over the window / u at the window start
  double y_final = 0.0;      // u (T-t)^{1/(p-1)} at the last usable snapshot
};

struct BlowupSetClassification {
  std::vector<int> core;     // nodes whose rescaled tail sits within 25% of C_p
  int K = 0;
  bool log_case = false;
  double window_lo = 0.0;    // fit window in T-t: [10 * tail bound, ...
  double window_hi = 0.0;    //                     ... 0.1 * (T - detection time)]
  int snapshots_used = 0;
  std::vector<NodeClassification> nodes;  // one per mesh node, index order
};

/// Classifies every node against the propagation picture: the core blows up
/// at the self-similar rate, nodes within graph distance K follow with the
/// weakened power (T-t)^{-1/(p-1)+d} (log(1/(T-t)) at distance K in the log
/// case), and farther nodes stay bounded. Kinds are assigned empirically from
/// window fits, so a run that contradicts the picture shows up as
/// unclassified or as an unexpected kind rather than being papered over.
inline BlowupSetClassification classify_blowup_set(const Trajectory& traj,
                                                   const BlowupTimeEstimate& est) {
  if (traj.system == nullptr) throw std::invalid_argument("classify_blowup_set: trajectory has no system");
  BlowupDetection det = detect_blowup(traj);
  if (!det.detected) throw std::invalid_argument("classify_blowup_set: no blow-up detected");

  const DiscreteSystem& sys = *traj.system;
  int N = sys.n();
  double p = traj.config.p;
  double a = rate_exponent(p);
  double cp = rate_constant(p);
  double T = est.T;

  BlowupSetClassification out;
  PropagationDepth depth = propagation_depth(p);
  out.K = depth.K;
  out.log_case = depth.log_case;
  out.window_lo = 10.0 * est.tail_bound;
  out.window_hi = 0.1 * (T - det.time);
  out.nodes.resize(N);
  for (int k = 0; k < N; ++k) out.nodes[k].node = k;

  // Core: median rescaled tail value within 25% of C_p, same trailing window
  // as the rate estimate (skip 5, vote over up to 50).
  const auto& snaps = traj.snapshots;
  {
    std::vector<std::size_t> tail_idx;
    std::size_t skip = 5;
    for (std::size_t i = snaps.size(); i-- > 0 && tail_idx.size() < 50;) {
      if (skip > 0) { --skip; continue; }
      if (!(T - snaps[i].t > 0.0)) continue;
      tail_idx.push_back(i);
    }
    std::vector<double> yk;
    for (int k = 0; k < N; ++k) {
      yk.clear();
      for (std::size_t i : tail_idx)
        yk.push_back(snaps[i].u[k] * std::pow(T - snaps[i].t, a));
      if (yk.empty()) continue;
      double y = median(yk);
      if (std::abs(y - cp) <= 0.25 * cp) out.core.push_back(k);
    }
  }

  std::vector<int> dist(N, std::numeric_limits<int>::max());
  if (!out.core.empty()) dist = graph_distance(sys, out.core);
  for (int k = 0; k < N; ++k) out.nodes[k].distance = dist[k];

  // Window snapshots, ascending in t.
  std::vector<std::size_t> win;
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    double dt = T - snaps[i].t;
    if (dt >= out.window_lo && dt <= out.window_hi && dt > 0.0) win.push_back(i);
  }
  out.snapshots_used = static_cast<int>(win.size());

  // Last usable snapshot for y_final.
  std::size_t last_usable = snaps.size();
  for (std::size_t i = snaps.size(); i-- > 0;) {
    if (T - snaps[i].t > 0.0) { last_usable = i; break; }
  }

  bool fits_possible = win.size() >= 8;
  std::vector<double> lx, ly, ux;
  for (int k = 0; k < N; ++k) {
    NodeClassification& nc = out.nodes[k];
    if (last_usable < snaps.size())
      nc.y_final = snaps[last_usable].u[k] * std::pow(T - snaps[last_usable].t, a);

    // Window fits first (core nodes included, so their exponent is reported
    // too); the kind is assigned afterwards.
    bool positive = fits_possible;
    if (fits_possible) {
      lx.clear(); ly.clear(); ux.clear();
      double u0 = snaps[win.front()].u[k];
      double umax = 0.0;
      for (std::size_t i : win) {
        double dt = T - snaps[i].t;
        double uk = snaps[i].u[k];
        if (!(uk > 0.0)) { positive = false; break; }
        lx.push_back(std::log(dt));
        ly.push_back(std::log(uk));
        ux.push_back(uk);
        umax = std::max(umax, uk);
      }
      if (positive) {
        nc.growth = u0 > 0.0 ? umax / u0 : std::numeric_limits<double>::infinity();
        LinearFit pf = fit_line(lx, ly);
        nc.power_slope = pf.slope;
        nc.power_residual = pf.rel_residual;
        // u against log(1/(T-t)): reuse lx negated.
        for (double& v : lx) v = -v;
        LinearFit lf = fit_line(lx, ux);
        nc.log_slope = lf.slope;
        nc.log_residual = lf.rel_residual;
      }
    }

    if (nc.distance == 0) {
      nc.kind = NodeKind::core;
      continue;
    }
    if (!fits_possible || out.core.empty() || !positive) {
      nc.kind = NodeKind::unclassified;
      continue;
    }
    int d = nc.distance;
    if (d <= out.K && !(out.log_case && d == out.K)) {
      nc.kind = (nc.power_slope < 0.0 && nc.power_residual <= 0.1) ? NodeKind::power_blowup
                                                                   : NodeKind::unclassified;
    } else if (out.log_case && d == out.K) {
      nc.kind = (nc.log_slope > 0.0 && nc.log_residual <= 0.1) ? NodeKind::log_blowup
                                                               : NodeKind::unclassified;
    } else {
      nc.kind = nc.growth <= 10.0 ? NodeKind::bounded : NodeKind::unclassified;
    }
  }
  return out;
}

/// Convenience form: derives the blow-up time estimate from the trajectory.
inline BlowupSetClassification classify_blowup_set(const Trajectory& traj) {
  return classify_blowup_set(traj, estimate_blowup_time(traj));
}

/// Convenience form with an externally supplied blow-up time (the tail bound
/// and window still come from the trajectory's own estimate).
inline BlowupSetClassification classify_blowup_set(const Trajectory& traj, double T) {
  BlowupTimeEstimate est = estimate_blowup_time(traj);
  est.T = T;
  return classify_blowup_set(traj, est);
}

struct RunReport {
  Termination termination = Termination::max_steps;
  std::uint64_t final_index = 0;
  double final_time = 0.0;
  double final_w = 0.0;
  double final_phi = 0.0;
  double min_phi = 0.0;
  double eta_used = 0.0;
  std::uint64_t total_halvings = 0;
  std::uint64_t lyapunov_violations = 0;
  double lyapunov_worst_excess = 0.0;
  BlowupDetection detection;
  std::optional<BlowupTimeEstimate> time_estimate;
  std::optional<RateEstimate> rate;
  std::optional<BlowupSetClassification> blowup_set;
};

/// Aggregates every diagnostic that applies to the finished run. Time, rate,
/// and set classification only make sense once the functional went negative
/// and the run actually marched toward the singularity, so they stay empty
/// for decay/steady runs.
inline RunReport build_report(const Trajectory& traj) {
  RunReport r;
  r.termination = traj.termination;
  r.final_index = traj.final_index;
  r.final_time = traj.final_time;
  r.final_w = traj.final_w;
  r.final_phi = traj.final_phi;
  r.min_phi = traj.min_phi;
  r.eta_used = traj.eta_used;
  r.total_halvings = traj.total_halvings;
  r.lyapunov_violations = traj.lyapunov_violations;
  r.lyapunov_worst_excess = traj.lyapunov_worst_excess;
  r.detection = detect_blowup(traj);
  if (r.detection.detected && traj.final_index >= 1) {
    r.time_estimate = estimate_blowup_time(traj);
    if (!r.time_estimate->flagged) {
      r.rate = rate_constant(traj, r.time_estimate->T);
      r.blowup_set = classify_blowup_set(traj, *r.time_estimate);
    }
  }
  return r;
}

}  // namespace blowup
