#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "blowup/discrete_system.hpp"

using namespace blowup;

namespace {

double entry(const DiscreteSystem& sys, int r, int c) {
  auto cols = sys.row_cols(r);
  auto vals = sys.row_vals(r);
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] == c) return vals[i];
  return 0.0;
}

double row_sum(const DiscreteSystem& sys, int r) {
  auto vals = sys.row_vals(r);
  double s = 0.0;
  for (double v : vals) s += v;
  return s;
}

}  // namespace

TEST_CASE("one interior difference node has mass 1/2 and stiffness 4") {
  auto sys = build_fd_interval(1);
  REQUIRE(sys.n() == 1);
  REQUIRE(sys.dim == 1);
  REQUIRE(sys.mass[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(entry(sys, 0, 0) == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(sys.node(0)[0] == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("two interior difference nodes carry the three-point stencil") {
  auto sys = build_fd_interval(2);
  REQUIRE(sys.n() == 2);
  REQUIRE(sys.mass[0] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  REQUIRE(sys.mass[1] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  REQUIRE(entry(sys, 0, 0) == Catch::Approx(6.0).margin(1e-12));
  REQUIRE(entry(sys, 0, 1) == Catch::Approx(-3.0).margin(1e-12));
  REQUIRE(entry(sys, 1, 0) == Catch::Approx(-3.0).margin(1e-12));
  REQUIRE(entry(sys, 1, 1) == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("three interior difference nodes: entries and row sums") {
  auto sys = build_fd_interval(3);
  REQUIRE(sys.n() == 3);
  for (int k = 0; k < 3; ++k) REQUIRE(sys.mass[k] == Catch::Approx(0.25).margin(1e-15));
  REQUIRE(entry(sys, 1, 1) == Catch::Approx(8.0).margin(1e-12));
  REQUIRE(entry(sys, 1, 0) == Catch::Approx(-4.0).margin(1e-12));
  REQUIRE(entry(sys, 1, 2) == Catch::Approx(-4.0).margin(1e-12));
  // Boundary-adjacent rows keep the discarded boundary coupling as slack.
  REQUIRE(row_sum(sys, 0) == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(row_sum(sys, 1) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(row_sum(sys, 2) == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("square grid with two nodes per side") {
  auto sys = build_fd_cube(2, 2);
  REQUIRE(sys.n() == 4);
  REQUIRE(sys.dim == 2);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(sys.mass[k] == Catch::Approx(1.0 / 9.0).margin(1e-15));
    REQUIRE(entry(sys, k, k) == Catch::Approx(4.0).margin(1e-12));
  }
  // Every node touches exactly two of the other three (no diagonal coupling).
  REQUIRE(entry(sys, 0, 1) == Catch::Approx(-1.0).margin(1e-12));
  REQUIRE(entry(sys, 0, 2) == Catch::Approx(-1.0).margin(1e-12));
  REQUIRE(entry(sys, 0, 3) == 0.0);
  REQUIRE(entry(sys, 3, 0) == 0.0);
  REQUIRE(entry(sys, 3, 1) == Catch::Approx(-1.0).margin(1e-12));
  REQUIRE(entry(sys, 3, 2) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("square grid with three nodes per side: row sums by node position") {
  auto sys = build_fd_cube(2, 3);
  REQUIRE(sys.n() == 9);
  // Lexicographic ordering puts the center at linear index 4.
  REQUIRE(sys.node(4)[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(sys.node(4)[1] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(row_sum(sys, 4) == Catch::Approx(0.0).margin(1e-12));  // four neighbors
  REQUIRE(row_sum(sys, 0) == Catch::Approx(2.0).margin(1e-12));  // corner: two neighbors
  REQUIRE(row_sum(sys, 1) == Catch::Approx(1.0).margin(1e-12));  // edge: three neighbors
}

TEST_CASE("one-dimensional cube build matches the interval build") {
  auto a = build_fd_cube(1, 3);
  auto b = build_fd_interval(3);
  REQUIRE(a.mass == b.mass);
  REQUIRE(a.coords == b.coords);
  REQUIRE(a.row_ptr == b.row_ptr);
  REQUIRE(a.cols == b.cols);
  REQUIRE(a.vals == b.vals);
}

TEST_CASE("cube nodes are ordered lexicographically with the last axis fastest") {
  auto sys = build_fd_cube(2, 2);
  double h = 1.0 / 3.0;
  REQUIRE(sys.node(0)[0] == Catch::Approx(h));
  REQUIRE(sys.node(0)[1] == Catch::Approx(h));
  REQUIRE(sys.node(1)[0] == Catch::Approx(h));
  REQUIRE(sys.node(1)[1] == Catch::Approx(2 * h));
  REQUIRE(sys.node(2)[0] == Catch::Approx(2 * h));
  REQUIRE(sys.node(2)[1] == Catch::Approx(h));
}

TEST_CASE("three-dimensional build satisfies the structural contract") {
  auto sys = build_fd_cube(3, 3);
  REQUIRE(sys.n() == 27);
  auto rep = validate_properties(sys);
  REQUIRE(rep.ok());
  // Interior center has six neighbors; its row cancels exactly.
  REQUIRE(row_sum(sys, 13) == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("element build on a nonuniform partition") {
  auto sys = build_fem_interval({0.0, 0.5, 0.75, 1.0});
  REQUIRE(sys.n() == 2);
  REQUIRE(sys.mass[0] == Catch::Approx(0.375).margin(1e-15));
  REQUIRE(sys.mass[1] == Catch::Approx(0.25).margin(1e-15));
  REQUIRE(entry(sys, 0, 0) == Catch::Approx(6.0).margin(1e-12));
  REQUIRE(entry(sys, 0, 1) == Catch::Approx(-4.0).margin(1e-12));
  REQUIRE(entry(sys, 1, 0) == Catch::Approx(-4.0).margin(1e-12));
  REQUIRE(entry(sys, 1, 1) == Catch::Approx(8.0).margin(1e-12));
  REQUIRE(validate_properties(sys).ok());
}

TEST_CASE("element build on a uniform partition reproduces the difference build") {
  auto fem = build_fem_interval({0.0, 0.25, 0.5, 0.75, 1.0});
  auto fd = build_fd_interval(3);
  REQUIRE(fem.n() == fd.n());
  for (int k = 0; k < fd.n(); ++k) {
    REQUIRE(fem.mass[k] == Catch::Approx(fd.mass[k]).margin(1e-14));
    for (int c = 0; c < fd.n(); ++c)
      REQUIRE(entry(fem, k, c) == Catch::Approx(entry(fd, k, c)).margin(1e-11));
  }
}

TEST_CASE("element build rejects bad partitions") {
  REQUIRE_THROWS_AS(build_fem_interval({0.0, 1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(build_fem_interval({0.0, 0.5, 0.4, 1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(build_fem_interval({0.1, 0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("builder argument validation") {
  REQUIRE_THROWS_AS(build_fd_cube(0, 3), std::invalid_argument);
  REQUIRE_THROWS_AS(build_fd_cube(4, 3), std::invalid_argument);
  REQUIRE_THROWS_AS(build_fd_interval(0), std::invalid_argument);
}

TEST_CASE("structural validation flags each broken property") {
  auto good = build_fd_interval(4);
  REQUIRE(validate_properties(good).ok());

  SECTION("nonpositive mass") {
    auto sys = good;
    sys.mass[2] = 0.0;
    auto rep = validate_properties(sys);
    REQUIRE_FALSE(rep.ok());
    REQUIRE_FALSE(rep.mass_positive);
  }
  SECTION("nonpositive diagonal") {
    auto sys = good;
    for (std::size_t i = 0; i < sys.cols.size(); ++i)
      if (sys.cols[i] == 1 && i >= std::size_t(sys.row_ptr[1]) && i < std::size_t(sys.row_ptr[2]))
        sys.vals[i] = -1.0;
    auto rep = validate_properties(sys);
    REQUIRE_FALSE(rep.ok());
    REQUIRE_FALSE(rep.diagonal_positive);
  }
  SECTION("positive off-diagonal") {
    auto sys = good;
    for (std::size_t i = 0; i < sys.cols.size(); ++i)
      if (sys.cols[i] == 0 && i >= std::size_t(sys.row_ptr[1]) && i < std::size_t(sys.row_ptr[2]))
        sys.vals[i] = +2.0;
    auto rep = validate_properties(sys);
    REQUIRE_FALSE(rep.ok());
    // Making a_{1,0} positive also breaks symmetry; the sign flag must trip.
    REQUIRE_FALSE(rep.offdiag_nonpositive);
  }
  SECTION("negative row sum") {
    auto sys = good;
    for (std::size_t i = 0; i < sys.cols.size(); ++i)
      if (sys.cols[i] == 1 && i >= std::size_t(sys.row_ptr[1]) && i < std::size_t(sys.row_ptr[2]))
        sys.vals[i] = 7.0;  // diag 7 < |off| sum 10
    auto rep = validate_properties(sys);
    REQUIRE_FALSE(rep.ok());
    REQUIRE_FALSE(rep.rowsums_nonnegative);
  }
  SECTION("asymmetry") {
    auto sys = good;
    for (std::size_t i = 0; i < sys.cols.size(); ++i)
      if (sys.cols[i] == 2 && i >= std::size_t(sys.row_ptr[1]) && i < std::size_t(sys.row_ptr[2]))
        sys.vals[i] = -2.0;  // a_{1,2} != a_{2,1} = -5; signs and row sums stay legal
    auto rep = validate_properties(sys);
    REQUIRE_FALSE(rep.ok());
    REQUIRE_FALSE(rep.symmetric);
  }
  SECTION("broken structure: unsorted columns") {
    auto sys = good;
    std::swap(sys.cols[sys.row_ptr[1]], sys.cols[sys.row_ptr[1] + 1]);
    auto rep = validate_properties(sys);
    REQUIRE_FALSE(rep.structure_ok);
  }
}

TEST_CASE("sine profile on three nodes") {
  auto sys = build_fd_interval(3);
  auto u = sample_initial(sys, {ProfileFamily::sine_product, 1.0});
  REQUIRE(u.size() == 3);
  REQUIRE(u[0] == Catch::Approx(0.70711).margin(5e-6));
  REQUIRE(u[1] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(u[2] == Catch::Approx(0.70711).margin(5e-6));
}

TEST_CASE("amplitude scales the sampled profile linearly") {
  auto sys = build_fd_interval(7);
  auto u1 = sample_initial(sys, {ProfileFamily::sine_product, 1.0});
  auto u50 = sample_initial(sys, {ProfileFamily::sine_product, 50.0});
  for (int k = 0; k < 7; ++k) REQUIRE(u50[k] == Catch::Approx(50.0 * u1[k]).epsilon(1e-14));
}

TEST_CASE("constant and bump profiles stay strictly positive") {
  auto sys = build_fd_cube(2, 4);
  auto uc = sample_initial(sys, {ProfileFamily::constant, 2.5});
  for (double v : uc) REQUIRE(v == 2.5);
  auto ub = sample_initial(sys, {ProfileFamily::bump, 1.0});
  for (double v : ub) {
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("profiles that are not strictly positive are rejected") {
  auto sys = build_fd_interval(3);
  REQUIRE_THROWS_AS(sample_initial(sys, {ProfileFamily::sine_product, -1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(sample_initial(sys, {ProfileFamily::constant, 0.0}), std::invalid_argument);
}

TEST_CASE("sine profile in two dimensions is a product over axes") {
  auto sys = build_fd_cube(2, 3);
  auto u = sample_initial(sys, {ProfileFamily::sine_product, 1.0});
  double s1 = std::sin(std::numbers::pi * 0.25);
  REQUIRE(u[4] == Catch::Approx(1.0).margin(1e-12));        // center
  REQUIRE(u[0] == Catch::Approx(s1 * s1).epsilon(1e-12));   // corner
}

TEST_CASE("refining the mesh scales mass and stiffness consistently") {
  // Doubling the node count roughly halves h: mass ~ h, diagonal ~ 2/h.
  auto c = build_fd_interval(10);
  auto f = build_fd_interval(21);  // h exactly halved: 1/11 -> 1/22
  REQUIRE(f.mass[0] == Catch::Approx(c.mass[0] / 2.0).epsilon(1e-13));
  REQUIRE(entry(f, 0, 0) == Catch::Approx(2.0 * entry(c, 0, 0)).epsilon(1e-13));
}
