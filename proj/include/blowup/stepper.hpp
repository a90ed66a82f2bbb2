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
#include "blowup/spectral.hpp"

namespace blowup {

enum class Scheme { explicit_euler, implicit_euler };

inline const char* scheme_name(Scheme s) {
  return s == Scheme::explicit_euler ? "explicit" : "implicit";
}

/// Adaptive-step solver configuration for M u' = -A u + M u^p with the step
/// law tau_j = lambda / (w^j)^p, w^j = sum_k m_k u_k^j.
struct SolverConfig {
  double p = 2.0;
  double lambda = 1e-3;
  Scheme scheme = Scheme::explicit_euler;
  double w_stop = 1e6;                  // stop once w^j reaches this
  std::uint64_t max_steps = 50'000'000;
  // Explicit-scheme safeguards (ignored by the implicit scheme, which is
  // unconditionally stable for this problem class):
  bool enforce_comparison_restriction = true;  // tau_j < min_i m_i/a_ii
  bool enforce_lyapunov_restriction = true;    // tau_j < 2/(p (w^{j+1})^{p-1} + eta), a posteriori
  double overflow_guard = 1e300;        // stop cleanly before u^p exceeds this
  std::optional<double> t_stop;         // integrate to a fixed time (order studies)
};

inline void validate(const SolverConfig& c) {
  if (!(c.p > 1.0)) throw std::invalid_argument("config: p must exceed 1");
  if (!(c.lambda > 0.0)) throw std::invalid_argument("config: lambda must be positive");
  if (!(c.w_stop > 0.0)) throw std::invalid_argument("config: w_stop must be positive");
  if (c.max_steps < 1) throw std::invalid_argument("config: max_steps must be at least 1");
  if (!(c.overflow_guard > 0.0)) throw std::invalid_argument("config: overflow_guard must be positive");
  if (c.t_stop && !(*c.t_stop >= 0.0)) throw std::invalid_argument("config: t_stop must be nonnegative");
}

enum class Termination { w_threshold, max_steps, steady, overflow_guard, time_horizon };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::w_threshold: return "w_threshold";
    case Termination::max_steps: return "max_steps";
    case Termination::steady: return "steady";
    case Termination::overflow_guard: return "overflow_guard";
    case Termination::time_horizon: return "time_horizon";
  }
  return "?";
}

struct ScalarRecord {
  std::uint64_t j = 0;
  double t = 0.0;
  double tau = 0.0;     // step taken from this state (prospective step at the final record)
  double w = 0.0;
  double phi = 0.0;
  double max_u = 0.0;
  std::int32_t argmax = 0;   // ties resolved to the lowest index
  std::uint32_t halvings = 0;
};

struct StateSnapshot {
  std::uint64_t j = 0;
  double t = 0.0;
  std::vector<double> u;
};

/// Run history. Scalar records cover every step up to a thinning stride that
/// doubles whenever the in-memory cap is hit; the final 200 steps are always
/// kept densely, and per-step checks that must see every step (Lyapunov
/// monotonicity, sign of phi, steadiness) are accumulated online during the
/// run, so thinning never weakens them.
struct Trajectory {
  const DiscreteSystem* system = nullptr;  // non-owning; caller keeps it alive
  SolverConfig config;

  std::vector<ScalarRecord> scalars;       // ascending j, thinned + dense tail
  std::uint64_t scalar_stride = 1;
  std::vector<StateSnapshot> snapshots;    // ascending j, thinned + dense tail
  std::uint64_t snapshot_stride = 1;

  Termination termination = Termination::max_steps;
  std::uint64_t final_index = 0;           // J
  double final_time = 0.0;
  double final_w = 0.0;
  double final_phi = 0.0;
  std::vector<double> final_state;

  double eta_used = 0.0;                   // spectral bound used by the restriction (0 if unused)
  std::uint64_t total_halvings = 0;
  std::uint64_t lyapunov_violations = 0;   // steps with phi above the slack envelope
  double lyapunov_worst_excess = 0.0;
  double min_phi = std::numeric_limits<double>::infinity();
  bool phi_went_negative = false;
  std::uint64_t first_negative_phi_index = 0;
  double first_negative_phi_time = 0.0;

  const ScalarRecord* record_at(std::uint64_t j) const {
    auto it = std::lower_bound(scalars.begin(), scalars.end(), j,
                               [](const ScalarRecord& r, std::uint64_t jj) { return r.j < jj; });
    return (it != scalars.end() && it->j == j) ? &*it : nullptr;
  }
};

/// w(U) = sum_k m_k u_k, summed in ascending index order.
inline double w_norm(const DiscreteSystem& sys, std::span<const double> u) {
  double w = 0.0;
  for (int k = 0; k < sys.n(); ++k) w += sys.mass[k] * u[k];
  return w;
}

/// tau = lambda / w^p. A nonpositive w is a contract violation.
inline double step_size(const SolverConfig& config, double w) {
  if (!(w > 0.0)) throw std::invalid_argument("step_size: w must be positive");
  return config.lambda / pow_p(w, config.p);
}

/// min_i m_i / a_ii: the per-step bound required by the discrete comparison
/// argument for the explicit scheme.
inline double comparison_step_bound(const DiscreteSystem& sys) {
  double b = std::numeric_limits<double>::infinity();
  for (int k = 0; k < sys.n(); ++k) b = std::min(b, sys.mass[k] / sys.diag(k));
  return b;
}

struct InitialLambdaCheck {
  bool passed = false;
  double bound = 0.0;  // lambda must stay strictly below this
};

/// lambda < min_i (m_i/a_ii) * w(U0)^p, i.e. the comparison bound at step 0.
inline InitialLambdaCheck check_initial_lambda(const DiscreteSystem& sys,
                                               const SolverConfig& config,
                                               std::span<const double> u0) {
  InitialLambdaCheck c;
  c.bound = comparison_step_bound(sys) * pow_p(w_norm(sys, u0), config.p);
  c.passed = config.lambda < c.bound;
  return c;
}

/// One explicit step: U + tau * (-M^-1 A U + U^p). When the comparison
/// restriction is enforced the step size must respect it.
inline std::vector<double> step_explicit(const DiscreteSystem& sys, const SolverConfig& config,
                                         std::span<const double> u, double tau) {
  int N = sys.n();
  if (static_cast<int>(u.size()) != N) throw std::invalid_argument("step_explicit: size mismatch");
  if (config.enforce_comparison_restriction && !(tau < comparison_step_bound(sys)))
    throw std::invalid_argument("step_explicit: tau violates the comparison bound");
  std::vector<double> out(N);
  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += v[i] * u[c[i]];
    double up = pow_p(u[k], config.p);
    out[k] = u[k] + tau * (up - s / sys.mass[k]);
  }
  return out;
}

/// One implicit step: solves (M + tau*A) X = M U + tau * M U^p. The start
/// point U + tau U^p hands the solver the diagonal-only solution.
inline std::vector<double> step_implicit(const DiscreteSystem& sys, const SolverConfig& config,
                                         std::span<const double> u, double tau) {
  int N = sys.n();
  if (static_cast<int>(u.size()) != N) throw std::invalid_argument("step_implicit: size mismatch");
  std::vector<double> rhs(N), x0(N);
  for (int k = 0; k < N; ++k) {
    double up = pow_p(u[k], config.p);
    rhs[k] = sys.mass[k] * u[k] + tau * (sys.mass[k] * up);
    x0[k] = u[k] + tau * up;
  }
  return solve_shifted(sys, tau, rhs, std::span<const double>(x0));
}

namespace detail {

struct Pow2 {
  static double f(double x) { return x * x; }
  static double fm1(double x) { return x; }
};
struct Pow3 {
  static double f(double x) { return x * x * x; }
  static double fm1(double x) { return x * x; }
};
struct PowGen {
  double p;
  double f(double x) const { return std::pow(x, p); }
  double fm1(double x) const { return std::pow(x, p - 1.0); }
};
// uniform call syntax
template <class P>
inline double pf(const P&, double x) { return P::f(x); }
inline double pf(const PowGen& g, double x) { return g.f(x); }
template <class P>
inline double pfm1(const P&, double x) { return P::fm1(x); }
inline double pfm1(const PowGen& g, double x) { return g.fm1(x); }

/// Tridiagonal stencil extracted once; row accumulation order matches the
/// ascending-column CSR order exactly.
struct TridiagOp {
  std::vector<double> lo, di, hi;
  int N = 0;
  static std::optional<TridiagOp> extract(const DiscreteSystem& sys) {
    TridiagOp op;
    op.N = sys.n();
    op.lo.assign(op.N, 0.0);
    op.di.assign(op.N, 0.0);
    op.hi.assign(op.N, 0.0);
    for (int k = 0; k < op.N; ++k) {
      auto c = sys.row_cols(k);
      auto v = sys.row_vals(k);
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (c[i] == k - 1) op.lo[k] = v[i];
        else if (c[i] == k) op.di[k] = v[i];
        else if (c[i] == k + 1) op.hi[k] = v[i];
        else return std::nullopt;
      }
    }
    return op;
  }
  double row(int k, const double* u) const {
    double s = 0.0;
    if (k > 0) s += lo[k] * u[k - 1];
    s += di[k] * u[k];
    if (k + 1 < N) s += hi[k] * u[k + 1];
    return s;
  }
};

struct CsrOp {
  const DiscreteSystem* sys;
  double row(int k, const double* u) const {
    auto c = sys->row_cols(k);
    auto v = sys->row_vals(k);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += v[i] * u[c[i]];
    return s;
  }
};

/// Bookkeeping for one run: thinned primary series plus dense tail rings.
class Recorder {
 public:
  static constexpr std::uint64_t kScalarCap = std::uint64_t(1) << 17;
  static constexpr std::uint64_t kSnapshotCap = 1024;
  static constexpr std::uint64_t kTail = 200;
  static constexpr std::uint64_t kRing = 256;

  explicit Recorder(int n) : n_(n) { scalar_ring_.resize(kRing); }

  void push_scalar(const ScalarRecord& r) {
    if ((r.j & scalar_mask_) == 0) {
      scalars_.push_back(r);
      if (scalars_.size() >= kScalarCap) {
        scalar_mask_ = scalar_mask_ * 2 + 1;
        std::size_t keep = 0;
        for (const auto& s : scalars_)
          if ((s.j & scalar_mask_) == 0) scalars_[keep++] = s;
        scalars_.resize(keep);
      }
    }
    scalar_ring_[r.j % kRing] = r;
  }

  // Snapshot states live in the step ring owned by the run loop; only the
  // stride-selected ones are copied out here.
  bool wants_snapshot(std::uint64_t j) const { return (j & snapshot_mask_) == 0; }
  void push_snapshot(std::uint64_t j, double t, const std::vector<double>& u) {
    snapshots_.push_back({j, t, u});
    if (snapshots_.size() >= kSnapshotCap) {
      snapshot_mask_ = snapshot_mask_ * 2 + 1;
      std::size_t keep = 0;
      for (std::size_t i = 0; i < snapshots_.size(); ++i)
        if ((snapshots_[i].j & snapshot_mask_) == 0) {
          if (keep != i) snapshots_[keep] = std::move(snapshots_[i]);
          ++keep;
        }
      snapshots_.resize(keep);
    }
  }

  /// Merge the primary series with the dense tail extracted from the rings.
  /// The primary series covers j <= tail_lo at the final stride; the window
  /// (tail_lo, J] comes densely from the rings (records for j < J were pushed
  /// during the run, j == J is the caller-built final record).
  void finalize(Trajectory& out, std::uint64_t J, const ScalarRecord& final_rec,
                const std::vector<std::vector<double>>& state_ring) {
    std::uint64_t tail_lo = J >= kTail ? J - kTail : 0;

    out.scalars.clear();
    for (const auto& s : scalars_)
      if (s.j <= tail_lo) out.scalars.push_back(s);
    for (std::uint64_t j = tail_lo + 1; j < J; ++j)
      out.scalars.push_back(scalar_ring_[j % kRing]);
    out.scalars.push_back(final_rec);
    out.scalar_stride = scalar_mask_ + 1;

    out.snapshots.clear();
    for (auto& s : snapshots_)
      if (s.j <= tail_lo) out.snapshots.push_back(std::move(s));
    for (std::uint64_t j = tail_lo + 1; j <= J; ++j) {
      const ScalarRecord& r = j == J ? final_rec : scalar_ring_[j % kRing];
      out.snapshots.push_back({j, r.t, state_ring[j % kRing]});
    }
    if (J == 0 && out.snapshots.empty())
      out.snapshots.push_back({0, final_rec.t, state_ring[0]});
    out.snapshot_stride = snapshot_mask_ + 1;
  }

 private:
  int n_;
  std::uint64_t scalar_mask_ = 0, snapshot_mask_ = 0;  // stride - 1, strides are powers of two
  std::vector<ScalarRecord> scalars_;
  std::vector<ScalarRecord> scalar_ring_;
  std::vector<StateSnapshot> snapshots_;
};

/// Conjugate gradients on (M + tau*A) with preallocated workspace; identical
/// update formulas to ShiftedSolver::solve so both paths agree.
template <class Op>
class StepSolver {
 public:
  StepSolver(const DiscreteSystem& sys, const Op& op)
      : m_(sys.mass.data()), op_(&op), N_(sys.n()), r_(N_), p_(N_), q_(N_) {}

  void solve(double tau, const double* rhs, double* x) {
    double nb2 = 0.0;
    for (int k = 0; k < N_; ++k) nb2 += rhs[k] * rhs[k];
    double target = kShiftedSolveTol * std::sqrt(nb2);

    double rr = 0.0;
    for (int k = 0; k < N_; ++k) {
      double kx = m_[k] * x[k] + tau * op_->row(k, x);
      r_[k] = rhs[k] - kx;
      rr += r_[k] * r_[k];
    }
    if (std::sqrt(rr) <= target) return;

    for (int k = 0; k < N_; ++k) p_[k] = r_[k];
    long max_it = 10L * N_;
    for (long it = 1; it <= max_it; ++it) {
      double pq = 0.0;
      for (int k = 0; k < N_; ++k) {
        q_[k] = m_[k] * p_[k] + tau * op_->row(k, p_.data());
        pq += p_[k] * q_[k];
      }
      if (!(pq > 0.0)) throw SolveError("shifted solve: operator lost definiteness");
      double alpha = rr / pq;
      double rr_next = 0.0;
      for (int k = 0; k < N_; ++k) {
        x[k] += alpha * p_[k];
        r_[k] -= alpha * q_[k];
        rr_next += r_[k] * r_[k];
      }
      if (std::sqrt(rr_next) <= target) return;
      double beta = rr_next / rr;
      rr = rr_next;
      for (int k = 0; k < N_; ++k) p_[k] = r_[k] + beta * p_[k];
    }
    throw SolveError("shifted solve: no convergence within 10*N iterations");
  }

 private:
  const double* m_;
  const Op* op_;
  int N_;
  std::vector<double> r_, p_, q_;
};

struct SweepOut {
  double wn = 0.0;       // w of the candidate next state
  double aq = 0.0;       // <A u, u> at the current state
  double pw = 0.0;       // sum_k m_k u_k^{p+1} at the current state
  double mx = 0.0;       // max_k u_k at the current state
  double mxn = 0.0;      // max_k of the candidate next state
  double mdiff = 0.0;    // ||candidate - u||_inf
  std::int32_t arg = 0;
};

template <class PowT, class Op>
Trajectory run_impl(const DiscreteSystem& sys, const SolverConfig& config,
                    std::span<const double> u0, const PowT& pw_f, const Op& op) {
  const int N = sys.n();
  const bool is_explicit = config.scheme == Scheme::explicit_euler;
  const bool enforce_cmp = is_explicit && config.enforce_comparison_restriction;
  const bool enforce_lyap = is_explicit && config.enforce_lyapunov_restriction;

  Trajectory traj;
  traj.system = &sys;
  traj.config = config;

  double eta_infl = 0.0;
  if (enforce_lyap) {
    SpectralEstimate est = eta_estimate(sys, 1e-8);
    traj.eta_used = est.converged ? est.eta : gershgorin_upper_bound(sys);
    eta_infl = traj.eta_used * 1.01;
  }
  const double cmp_bound = comparison_step_bound(sys);
  if (enforce_cmp) {
    auto chk = check_initial_lambda(sys, config, u0);
    if (!chk.passed)
      throw std::invalid_argument("run: lambda violates the initial comparison bound (need lambda < " +
                                  std::to_string(chk.bound) + ")");
  }
  const double u_cap = std::pow(config.overflow_guard, 1.0 / config.p);

  // Step states live in a ring so the dense trailing window costs no copies.
  std::vector<std::vector<double>> ring(Recorder::kRing);
  for (auto& s : ring) s.resize(N);
  std::copy(u0.begin(), u0.end(), ring[0].begin());

  Recorder rec(N);
  StepSolver<Op> solver(sys, op);
  std::vector<double> rhs(N);  // implicit scheme workspace

  const double* mass = sys.mass.data();
  std::vector<double> minv(N);
  for (int k = 0; k < N; ++k) minv[k] = 1.0 / mass[k];

  KahanAccumulator t_acc;
  double w = w_norm(sys, ring[0]);
  double mx_cur = *std::max_element(ring[0].begin(), ring[0].end());
  double phi_prev = 0.0;
  bool have_phi_prev = false;
  int steady_streak = 0;

  std::uint64_t J = config.max_steps;
  Termination reason = Termination::max_steps;

  auto note_phi = [&](double phi, std::uint64_t j, double tt) {
    traj.min_phi = std::min(traj.min_phi, phi);
    if (phi < 0.0 && !traj.phi_went_negative) {
      traj.phi_went_negative = true;
      traj.first_negative_phi_index = j;
      traj.first_negative_phi_time = tt;
    }
    if (have_phi_prev) {
      double envelope = phi_prev * (1.0 + 1e-10) + 1e-12;
      if (phi > envelope) {
        ++traj.lyapunov_violations;
        traj.lyapunov_worst_excess = std::max(traj.lyapunov_worst_excess, phi - envelope);
      }
    }
    phi_prev = phi;
    have_phi_prev = true;
  };

  auto sweep_explicit = [&](const double* __restrict u, double* __restrict un, double tau) {
    SweepOut o;
    double wn = 0.0, aq = 0.0, pp = 0.0, mx = 0.0, mxn = 0.0, md = 0.0;
    std::int32_t arg = 0;
    for (int k = 0; k < N; ++k) {
      double s = op.row(k, u);
      double up = pf(pw_f, u[k]);
      double du = tau * (up - s * minv[k]);
      double x = u[k] + du;
      un[k] = x;
      wn += mass[k] * x;
      aq += s * u[k];
      pp += (mass[k] * up) * u[k];
      if (u[k] > mx) { mx = u[k]; arg = k; }
      if (x > mxn) mxn = x;
      double ad = std::abs(du);
      if (ad > md) md = ad;
    }
    o.wn = wn; o.aq = aq; o.pw = pp; o.mx = mx; o.mxn = mxn; o.mdiff = md; o.arg = arg;
    return o;
  };

  auto sweep_implicit = [&](const double* __restrict u, double* __restrict un, double tau) {
    SweepOut o;
    double aq = 0.0, pp = 0.0, mx = 0.0;
    std::int32_t arg = 0;
    for (int k = 0; k < N; ++k) {
      double s = op.row(k, u);
      double up = pf(pw_f, u[k]);
      rhs[k] = mass[k] * u[k] + tau * (mass[k] * up);
      un[k] = u[k] + tau * up;  // diagonal-only start point
      aq += s * u[k];
      pp += (mass[k] * up) * u[k];
      if (u[k] > mx) { mx = u[k]; arg = k; }
    }
    solver.solve(tau, rhs.data(), un);
    double wn = 0.0, mxn = 0.0, md = 0.0;
    for (int k = 0; k < N; ++k) {
      wn += mass[k] * un[k];
      if (un[k] > mxn) mxn = un[k];
      double ad = std::abs(un[k] - u[k]);
      if (ad > md) md = ad;
    }
    o.wn = wn; o.aq = aq; o.pw = pp; o.mx = mx; o.mxn = mxn; o.mdiff = md; o.arg = arg;
    return o;
  };

  for (std::uint64_t j = 0; j < config.max_steps; ++j) {
    double* u = ring[j % Recorder::kRing].data();
    double* un = ring[(j + 1) % Recorder::kRing].data();
    double t_now = t_acc.value();

    if (config.t_stop && t_now >= *config.t_stop) {
      J = j; reason = Termination::time_horizon;
      break;
    }
    if (mx_cur >= u_cap || w >= u_cap) {
      J = j; reason = Termination::overflow_guard;
      break;
    }

    double tau = config.lambda / pf(pw_f, w);
    bool horizon_hit = false;
    if (config.t_stop && *config.t_stop - t_now <= tau) {
      tau = *config.t_stop - t_now;
      horizon_hit = true;
      if (!(tau > 0.0)) { J = j; reason = Termination::time_horizon; break; }
    }

    std::uint32_t halv = 0;
    if (enforce_cmp) {
      while (!(tau < cmp_bound)) {
        tau *= 0.5;
        ++halv;
        horizon_hit = false;
        if (halv > 2000) throw SolveError("run: time step underflow while enforcing restrictions");
      }
    }

    SweepOut o = is_explicit ? sweep_explicit(u, un, tau) : sweep_implicit(u, un, tau);
    if (enforce_lyap) {
      while (!(tau < 2.0 / (config.p * pfm1(pw_f, o.wn) + eta_infl))) {
        tau *= 0.5;
        ++halv;
        horizon_hit = false;
        if (halv > 2000) throw SolveError("run: time step underflow while enforcing restrictions");
        o = sweep_explicit(u, un, tau);
      }
    }
    if (!std::isfinite(o.wn) || !(o.wn > 0.0))
      throw SolveError("run: state left the positive cone at step " + std::to_string(j));

    double phi = 0.5 * o.aq - o.pw / (config.p + 1.0);
    note_phi(phi, j, t_now);
    rec.push_scalar({j, t_now, tau, w, phi, o.mx, o.arg, halv});
    if (rec.wants_snapshot(j)) rec.push_snapshot(j, t_now, ring[j % Recorder::kRing]);
    traj.total_halvings += halv;

    t_acc.add(tau);
    w = o.wn;
    mx_cur = o.mxn;

    if (o.wn >= config.w_stop) {
      J = j + 1; reason = Termination::w_threshold;
      break;
    }
    if (horizon_hit) {
      J = j + 1; reason = Termination::time_horizon;
      break;
    }
    if (o.mdiff < 1e-14 * o.mx) {
      if (++steady_streak >= 10) { J = j + 1; reason = Termination::steady; break; }
    } else {
      steady_streak = 0;
    }
    // Decayed to the zero steady state: far below this level the reaction is
    // negligible against the linear decay, so no turnaround is possible. The
    // generous margin also keeps tau = lambda / w^p representable.
    if (o.mxn < 1e-30) {
      J = j + 1; reason = Termination::steady;
      break;
    }
  }

  // Final record: phi of U^J needs one more stencil pass.
  const std::vector<double>& uJ = ring[J % Recorder::kRing];
  double aq = 0.0, pp = 0.0, mxf = 0.0;
  std::int32_t argf = 0;
  for (int k = 0; k < N; ++k) {
    double s = op.row(k, uJ.data());
    double up = pf(pw_f, uJ[k]);
    aq += s * uJ[k];
    pp += (mass[k] * up) * uJ[k];
    if (uJ[k] > mxf) { mxf = uJ[k]; argf = k; }
  }
  double phiJ = 0.5 * aq - pp / (config.p + 1.0);
  note_phi(phiJ, J, t_acc.value());

  ScalarRecord final_rec{J, t_acc.value(), config.lambda / pf(pw_f, w), w, phiJ, mxf, argf, 0};
  rec.finalize(traj, J, final_rec, ring);

  traj.termination = reason;
  traj.final_index = J;
  traj.final_time = t_acc.value();
  traj.final_w = w;
  traj.final_phi = phiJ;
  traj.final_state = uJ;
  return traj;
}

template <class PowT>
Trajectory run_pow(const DiscreteSystem& sys, const SolverConfig& config,
                   std::span<const double> u0, const PowT& pw_f) {
  if (auto tri = TridiagOp::extract(sys))
    return run_impl(sys, config, u0, pw_f, *tri);
  CsrOp op{&sys};
  return run_impl(sys, config, u0, pw_f, op);
}

}  // namespace detail

/// Integrates the adaptive scheme from U0 until a stopping rule fires.
/// Requires strictly positive initial data. For the explicit scheme with the
/// comparison restriction enforced, lambda must pass check_initial_lambda.
inline Trajectory run(const DiscreteSystem& sys, const SolverConfig& config,
                      std::span<const double> u0) {
  validate(config);
  int N = sys.n();
  if (N < 1) throw std::invalid_argument("run: empty system");
  if (static_cast<int>(u0.size()) != N) throw std::invalid_argument("run: initial data size mismatch");
  for (int k = 0; k < N; ++k)
    if (!(u0[k] > 0.0)) throw std::invalid_argument("run: initial data must be strictly positive");

  if (config.p == 2.0) return detail::run_pow(sys, config, u0, detail::Pow2{});
  if (config.p == 3.0) return detail::run_pow(sys, config, u0, detail::Pow3{});
  return detail::run_pow(sys, config, u0, detail::PowGen{config.p});
}

}  // namespace blowup
