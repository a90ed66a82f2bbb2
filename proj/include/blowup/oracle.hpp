#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "blowup/discrete_system.hpp"
#include "blowup/numerics.hpp"
#include "blowup/spectral.hpp"

namespace blowup {

/// A reference computation (not the solver under test) failed: the reference
/// integrator escaped the representable range or would not self-converge.
struct OracleError : SolveError {
  using SolveError::SolveError;
};

/// Output of the fixed-step reference integrator: checkpointed states along
/// the way (first entry is the initial data, last is the endpoint).
struct ReferenceSolution {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  double step = 0.0;
  const std::vector<double>& endpoint() const { return states.back(); }
};

/// Classical RK4 with a fixed step on M u' = -A u (+ M u^p when
/// with_reaction). Entirely independent of the adaptive stepper; used as a
/// short-horizon reference. Aborts loudly if any stage loses positivity
/// headroom toward overflow.
inline ReferenceSolution reference_integrate(const DiscreteSystem& sys, double p,
                                             std::span<const double> u0, double t_end,
                                             std::int64_t n_steps, bool with_reaction = true,
                                             int checkpoints = 16) {
  int N = sys.n();
  if (static_cast<int>(u0.size()) != N)
    throw std::invalid_argument("reference_integrate: initial data size mismatch");
  if (n_steps < 1) throw std::invalid_argument("reference_integrate: need at least one step");
  if (!(t_end >= 0.0)) throw std::invalid_argument("reference_integrate: t_end must be nonnegative");
  if (checkpoints < 1) checkpoints = 1;

  std::vector<double> u(u0.begin(), u0.end());
  std::vector<double> k1(N), k2(N), k3(N), k4(N), tmp(N), au(N);
  double h = t_end / static_cast<double>(n_steps);

  auto deriv = [&](const std::vector<double>& v, std::vector<double>& dv) {
    sys.apply_stiffness(v, au);
    for (int k = 0; k < N; ++k) {
      double r = -au[k] / sys.mass[k];
      if (with_reaction) r += pow_p(v[k], p);
      if (!std::isfinite(r) || std::abs(v[k]) > 1e150)
        throw OracleError("reference_integrate: solution escaped the representable range");
      dv[k] = r;
    }
  };

  ReferenceSolution sol;
  sol.step = h;
  sol.times.push_back(0.0);
  sol.states.push_back(u);
  std::int64_t every = (n_steps + checkpoints - 1) / checkpoints;

  for (std::int64_t s = 0; s < n_steps; ++s) {
    deriv(u, k1);
    for (int k = 0; k < N; ++k) tmp[k] = u[k] + 0.5 * h * k1[k];
    deriv(tmp, k2);
    for (int k = 0; k < N; ++k) tmp[k] = u[k] + 0.5 * h * k2[k];
    deriv(tmp, k3);
    for (int k = 0; k < N; ++k) tmp[k] = u[k] + h * k3[k];
    deriv(tmp, k4);
    for (int k = 0; k < N; ++k)
      u[k] += (h / 6.0) * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    if ((s + 1) % every == 0 || s + 1 == n_steps) {
      sol.times.push_back(static_cast<double>(s + 1) * h);
      sol.states.push_back(u);
    }
  }
  return sol;
}

/// u' = u^p, u(0) = u0 > 0 in closed form:
///   u(t) = (u0^{1-p} - (p-1) t)^{-1/(p-1)},  T = u0^{1-p}/(p-1).
struct ScalarBlowupSolution {
  double u0 = 1.0;
  double p = 2.0;
  double T = 1.0;
  double value(double t) const {
    if (!(t < T)) throw std::invalid_argument("ScalarBlowupSolution: t must precede T");
    return std::pow(std::pow(u0, 1.0 - p) - (p - 1.0) * t, -1.0 / (p - 1.0));
  }
};

inline ScalarBlowupSolution exact_ode_blowup(double u0, double p) {
  if (!(u0 > 0.0)) throw std::invalid_argument("exact_ode_blowup: u0 must be positive");
  if (!(p > 1.0)) throw std::invalid_argument("exact_ode_blowup: p must exceed 1");
  ScalarBlowupSolution s;
  s.u0 = u0;
  s.p = p;
  s.T = std::pow(u0, 1.0 - p) / (p - 1.0);
  return s;
}

/// Every generalized eigenvalue of A x = eta M x, ascending, via cyclic Jacobi
/// on the symmetric similarity M^{-1/2} A M^{-1/2}. Dense O(N^3): capped at
/// N <= 200, meant as an oracle for the iterative estimate.
inline std::vector<double> dense_generalized_eigs(const DiscreteSystem& sys) {
  int N = sys.n();
  if (N > 200) throw std::invalid_argument("dense_generalized_eigs: limited to N <= 200");
  if (N == 0) throw std::invalid_argument("dense_generalized_eigs: empty system");

  std::vector<double> S(static_cast<std::size_t>(N) * N, 0.0);
  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    for (std::size_t i = 0; i < c.size(); ++i)
      S[static_cast<std::size_t>(k) * N + c[i]] = v[i] / std::sqrt(sys.mass[k] * sys.mass[c[i]]);
  }

  auto at = [&](int i, int j) -> double& { return S[static_cast<std::size_t>(i) * N + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) off += at(i, j) * at(i, j);
    double fro = off;
    for (int i = 0; i < N; ++i) fro += at(i, i) * at(i, i);
    if (off <= 1e-26 * fro) break;

    for (int pi = 0; pi < N - 1; ++pi) {
      for (int qi = pi + 1; qi < N; ++qi) {
        double apq = at(pi, qi);
        if (apq == 0.0) continue;
        double app = at(pi, pi), aqq = at(qi, qi);
        double theta = (aqq - app) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < N; ++k) {
          double akp = at(k, pi), akq = at(k, qi);
          at(k, pi) = c * akp - s * akq;
          at(k, qi) = s * akp + c * akq;
        }
        for (int k = 0; k < N; ++k) {
          double apk = at(pi, k), aqk = at(qi, k);
          at(pi, k) = c * apk - s * aqk;
          at(qi, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eigs(N);
  for (int i = 0; i < N; ++i) eigs[i] = at(i, i);
  std::sort(eigs.begin(), eigs.end());
  return eigs;
}

/// A smooth space-time field with its exact time derivative and Laplacian,
/// for truncation-error measurements against the discrete operator.
struct ManufacturedSolution {
  std::function<double(std::span<const double>, double)> value;
  std::function<double(std::span<const double>, double)> dt;
  std::function<double(std::span<const double>, double)> laplacian;
};

/// w(x, t) = exp(-dim pi^2 t) prod_i sin(pi x_i): the principal heat mode on
/// the unit cube, an exact solution of w_t = Lap(w) with zero boundary data.
inline ManufacturedSolution decaying_sine(int dim) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("decaying_sine: dim must be 1..3");
  double mu = dim * std::numbers::pi * std::numbers::pi;
  auto shape = [dim](std::span<const double> x) {
    double s = 1.0;
    for (int i = 0; i < dim; ++i) s *= std::sin(std::numbers::pi * x[i]);
    return s;
  };
  ManufacturedSolution ms;
  ms.value = [mu, shape](std::span<const double> x, double t) {
    return std::exp(-mu * t) * shape(x);
  };
  ms.dt = [mu, shape](std::span<const double> x, double t) {
    return -mu * std::exp(-mu * t) * shape(x);
  };
  ms.laplacian = [mu, shape](std::span<const double> x, double t) {
    return -mu * std::exp(-mu * t) * shape(x);
  };
  return ms;
}

/// Nodewise truncation residual of the semi-discrete operator against a
/// manufactured field at time t, mass-normalized:
///   rho_k = [ (A w)_k + m_k Lap(w)(x_k) ] / m_k,
/// which is exactly how far -A/M is from the Laplacian on this field
/// (O(h^2) for second-order stencils).
inline std::vector<double> consistency_residual(const DiscreteSystem& sys,
                                                const ManufacturedSolution& ms, double t) {
  int N = sys.n();
  std::vector<double> w(N), aw(N), rho(N);
  for (int k = 0; k < N; ++k) w[k] = ms.value(sys.node(k), t);
  sys.apply_stiffness(w, aw);
  for (int k = 0; k < N; ++k)
    rho[k] = (aw[k] + sys.mass[k] * ms.laplacian(sys.node(k), t)) / sys.mass[k];
  return rho;
}

}  // namespace blowup
