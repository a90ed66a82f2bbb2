#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "blowup/numerics.hpp"

namespace blowup {

/// Spatially discretized Dirichlet problem in the form  M u' = -A u + M u^p.
/// M is diagonal with positive entries; A is symmetric with positive diagonal,
/// nonpositive off-diagonal entries and nonnegative row sums, stored sparsely
/// as per-row (column, value) lists with strictly ascending columns (CSR).
/// Boundary nodes are eliminated; only interior unknowns appear.
struct DiscreteSystem {
  int dim = 0;                     // coordinate dimension (1..3)
  std::vector<double> coords;      // node k at coords[k*dim .. k*dim+dim)
  std::vector<double> mass;        // m_k
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> cols;
  std::vector<double> vals;

  int n() const { return static_cast<int>(mass.size()); }

  std::span<const std::int32_t> row_cols(int k) const {
    return {cols.data() + row_ptr[k], static_cast<std::size_t>(row_ptr[k + 1] - row_ptr[k])};
  }
  std::span<const double> row_vals(int k) const {
    return {vals.data() + row_ptr[k], static_cast<std::size_t>(row_ptr[k + 1] - row_ptr[k])};
  }
  std::span<const double> node(int k) const {
    return {coords.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }

  double diag(int k) const {
    auto c = row_cols(k);
    auto v = row_vals(k);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] == k) return v[i];
    return 0.0;
  }

  /// y = A x
  void apply_stiffness(std::span<const double> x, std::span<double> y) const {
    int N = n();
    for (int k = 0; k < N; ++k) {
      auto c = row_cols(k);
      auto v = row_vals(k);
      double s = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) s += v[i] * x[c[i]];
      y[k] = s;
    }
  }
};

struct ValidationReport {
  bool structure_ok = true;        // CSR sane: sorted columns, no duplicates, in range
  bool mass_positive = true;       // every m_k > 0
  bool diagonal_positive = true;   // every a_kk > 0
  bool offdiag_nonpositive = true; // every a_kj <= 0 for j != k
  bool rowsums_nonnegative = true; // sum_j a_kj >= 0 (up to representation slack)
  bool symmetric = true;           // a_kj == a_jk within 1e-12 relative
  std::string detail;              // first failure, empty when ok

  bool ok() const {
    return structure_ok && mass_positive && diagonal_positive && offdiag_nonpositive &&
           rowsums_nonnegative && symmetric;
  }
};

/// Checks the structural sign/symmetry contract of a DiscreteSystem.
/// Entry signs are exact; row sums allow a few ulps because rounded entries
/// of a matrix with exact-zero row sums can sum to +-1/2 ulp; symmetry is
/// compared to 1e-12 relative.
inline ValidationReport validate_properties(const DiscreteSystem& sys) {
  ValidationReport rep;
  int N = sys.n();
  auto fail = [&rep](bool& flag, const std::string& msg) {
    flag = false;
    if (rep.detail.empty()) rep.detail = msg;
  };

  if (sys.row_ptr.size() != static_cast<std::size_t>(N) + 1 ||
      sys.cols.size() != sys.vals.size() ||
      sys.coords.size() != static_cast<std::size_t>(N) * sys.dim) {
    fail(rep.structure_ok, "inconsistent array sizes");
    return rep;
  }
  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] < 0 || c[i] >= N) fail(rep.structure_ok, "column out of range in row " + std::to_string(k));
      if (i > 0 && c[i] <= c[i - 1]) fail(rep.structure_ok, "unsorted or duplicate column in row " + std::to_string(k));
    }
  }
  if (!rep.structure_ok) return rep;

  for (int k = 0; k < N; ++k)
    if (!(sys.mass[k] > 0.0)) {
      fail(rep.mass_positive, "mass entry " + std::to_string(k) + " not positive");
      break;
    }

  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    NeumaierAccumulator rowsum;
    double absrow = 0.0;
    bool has_diag = false;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] == k) {
        has_diag = true;
        if (!(v[i] > 0.0)) fail(rep.diagonal_positive, "diagonal of row " + std::to_string(k) + " not positive");
      } else if (v[i] > 0.0) {
        fail(rep.offdiag_nonpositive, "positive off-diagonal in row " + std::to_string(k));
      }
      rowsum.add(v[i]);
      absrow += std::abs(v[i]);
    }
    if (!has_diag) fail(rep.diagonal_positive, "missing diagonal in row " + std::to_string(k));
    if (rowsum.value() < -8.0 * std::numeric_limits<double>::epsilon() * absrow)
      fail(rep.rowsums_nonnegative, "negative row sum in row " + std::to_string(k));
  }

  for (int k = 0; k < N; ++k) {
    auto c = sys.row_cols(k);
    auto v = sys.row_vals(k);
    for (std::size_t i = 0; i < c.size(); ++i) {
      int j = c[i];
      if (j <= k) continue;
      auto cj = sys.row_cols(j);
      auto vj = sys.row_vals(j);
      double mirror = 0.0;
      bool found = false;
      for (std::size_t q = 0; q < cj.size(); ++q)
        if (cj[q] == k) {
          mirror = vj[q];
          found = true;
          break;
        }
      double scale = std::max(std::abs(v[i]), std::abs(mirror));
      if (!found || std::abs(v[i] - mirror) > 1e-12 * scale) {
        fail(rep.symmetric, "asymmetric pair (" + std::to_string(k) + "," + std::to_string(j) + ")");
        return rep;
      }
    }
  }
  return rep;
}

/// Uniform finite differences on the unit cube in d dimensions (d = 1..3),
/// n interior nodes per side: m_k = h^d, a_kk = 2d*h^(d-2), face neighbors
/// -h^(d-2). Nodes ordered lexicographically by coordinate tuple.
inline DiscreteSystem build_fd_cube(int dim, int n_per_side) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("build_fd_cube: dim must be 1, 2 or 3");
  if (n_per_side < 1) throw std::invalid_argument("build_fd_cube: need at least one interior node per side");

  int n = n_per_side;
  double h = 1.0 / (n + 1);
  double off = ipow(h, dim - 2);   // magnitude of the neighbor coupling
  double adiag = 2.0 * dim * off;
  double m = ipow(h, dim);

  std::int64_t total = 1;
  for (int d = 0; d < dim; ++d) total *= n;

  DiscreteSystem sys;
  sys.dim = dim;
  sys.coords.reserve(total * dim);
  sys.mass.assign(total, m);
  sys.row_ptr.reserve(total + 1);
  sys.row_ptr.push_back(0);

  // stride of +-1 step in coordinate d under lexicographic ordering
  std::int64_t stride[3] = {0, 0, 0};
  stride[dim - 1] = 1;
  for (int d = dim - 2; d >= 0; --d) stride[d] = stride[d + 1] * n;

  std::vector<int> idx(dim, 1);  // 1-based grid multi-index
  for (std::int64_t k = 0; k < total; ++k) {
    for (int d = 0; d < dim; ++d) sys.coords.push_back(idx[d] * h);

    // neighbor linear indices, then sort ascending (columns must ascend)
    std::int64_t nb[7];
    int cnt = 0;
    for (int d = 0; d < dim; ++d) {
      if (idx[d] > 1) nb[cnt++] = k - stride[d];
      if (idx[d] < n) nb[cnt++] = k + stride[d];
    }
    nb[cnt++] = k;
    for (int i = 1; i < cnt; ++i)
      for (int j = i; j > 0 && nb[j] < nb[j - 1]; --j) std::swap(nb[j], nb[j - 1]);
    for (int i = 0; i < cnt; ++i) {
      sys.cols.push_back(static_cast<std::int32_t>(nb[i]));
      sys.vals.push_back(nb[i] == k ? adiag : -off);
    }
    sys.row_ptr.push_back(static_cast<std::int64_t>(sys.cols.size()));

    for (int d = dim - 1; d >= 0; --d) {
      if (++idx[d] <= n) break;
      idx[d] = 1;
    }
  }
  return sys;
}

/// Uniform finite differences on the unit interval: n interior nodes,
/// h = 1/(n+1), m_k = h, a_kk = 2/h, nearest neighbors -1/h.
inline DiscreteSystem build_fd_interval(int n_interior) { return build_fd_cube(1, n_interior); }

/// Piecewise-linear finite elements with lumped (diagonal) mass on a possibly
/// nonuniform partition 0 = b_0 < ... < b_M = 1. Interior nodes b_1..b_{M-1};
/// with element lengths h_k = b_{k+1} - b_k:
///   m_k = (h_{k-1} + h_k)/2,  a_kk = 1/h_{k-1} + 1/h_k,  a_{k,k+1} = -1/h_k.
inline DiscreteSystem build_fem_interval(const std::vector<double>& breakpoints) {
  std::size_t M = breakpoints.size();
  if (M < 3) throw std::invalid_argument("build_fem_interval: need at least one interior node");
  if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0)
    throw std::invalid_argument("build_fem_interval: partition must span [0, 1]");
  for (std::size_t i = 1; i < M; ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      throw std::invalid_argument("build_fem_interval: breakpoints must strictly increase");

  int N = static_cast<int>(M) - 2;
  DiscreteSystem sys;
  sys.dim = 1;
  sys.coords.assign(breakpoints.begin() + 1, breakpoints.end() - 1);
  sys.mass.resize(N);
  sys.row_ptr.reserve(N + 1);
  sys.row_ptr.push_back(0);

  auto hlen = [&breakpoints](int e) { return breakpoints[e + 1] - breakpoints[e]; };
  for (int k = 0; k < N; ++k) {
    double hl = hlen(k), hr = hlen(k + 1);
    sys.mass[k] = (hl + hr) / 2.0;
    if (k > 0) {
      sys.cols.push_back(k - 1);
      sys.vals.push_back(-1.0 / hl);
    }
    sys.cols.push_back(k);
    sys.vals.push_back(1.0 / hl + 1.0 / hr);
    if (k < N - 1) {
      sys.cols.push_back(k + 1);
      sys.vals.push_back(-1.0 / hr);
    }
    sys.row_ptr.push_back(static_cast<std::int64_t>(sys.cols.size()));
  }
  return sys;
}

enum class ProfileFamily { sine_product, bump, constant };

struct InitialProfile {
  ProfileFamily family = ProfileFamily::sine_product;
  double amplitude = 1.0;
};

inline const char* profile_name(ProfileFamily f) {
  switch (f) {
    case ProfileFamily::sine_product: return "sine_product";
    case ProfileFamily::bump: return "bump";
    case ProfileFamily::constant: return "constant";
  }
  return "?";
}

/// Evaluates a positive initial profile at the interior nodes.
/// sine_product: amplitude * prod_i sin(pi x_i)
/// bump:         amplitude * prod_i exp(1 - 1/(1 - (2 x_i - 1)^2))
/// constant:     amplitude
/// Rejects any profile that is not strictly positive at every node.
inline std::vector<double> sample_initial(const DiscreteSystem& sys, const InitialProfile& prof) {
  int N = sys.n();
  std::vector<double> u(N);
  for (int k = 0; k < N; ++k) {
    auto x = sys.node(k);
    double v = prof.amplitude;
    switch (prof.family) {
      case ProfileFamily::sine_product:
        for (int d = 0; d < sys.dim; ++d) v *= std::sin(std::numbers::pi * x[d]);
        break;
      case ProfileFamily::bump:
        for (int d = 0; d < sys.dim; ++d) {
          double s = 2.0 * x[d] - 1.0;
          v *= std::exp(1.0 - 1.0 / (1.0 - s * s));
        }
        break;
      case ProfileFamily::constant:
        break;
    }
    if (!(v > 0.0))
      throw std::invalid_argument("sample_initial: profile not strictly positive at node " + std::to_string(k));
    u[k] = v;
  }
  return u;
}

}  // namespace blowup
