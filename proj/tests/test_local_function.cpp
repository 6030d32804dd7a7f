#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gkdiff/local_function.hpp"

using namespace gkdiff;
using Catch::Matchers::WithinAbs;

namespace {
Coord c1(int x) { return Coord{x, 0, 0}; }
Coord c2(int x, int y) { return Coord{x, y, 0}; }
}  // namespace

TEST_CASE("occupation moments on a pair of sites", "[local]") {
  auto m = Marginal::bernoulli(0.5);
  auto e0 = LocalFunction::occupation(m, 1, c1(0));
  auto e1 = LocalFunction::occupation(m, 1, c1(1));
  REQUIRE_THAT(e0.mean(), WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(e0.inner(e0), WithinAbs(0.5, 1e-15));    // <eta_0^2>
  REQUIRE_THAT(e0.inner(e1), WithinAbs(0.25, 1e-15));   // independent sites
  REQUIRE_THAT(e0.shifted_inner(c1(1), e1), WithinAbs(0.5, 1e-15));  // tau_1 e0 = e1
  auto prod = e0 * e1;
  REQUIRE(prod.window().size() == 2);
  REQUIRE_THAT(prod.mean(), WithinAbs(0.25, 1e-15));
}

TEST_CASE("multi index ordering and orbits", "[local]") {
  MultiIndex n;
  n.set(c1(2), 1);
  n.set(c1(3), 2);
  auto [shift, rep] = n.orbit_split();
  REQUIRE(shift == c1(2));
  REQUIRE(rep.at(c1(0)) == 1);
  REQUIRE(rep.at(c1(1)) == 2);
  REQUIRE(rep.is_orbit_rep());
  REQUIRE(rep.shifted(shift) == n);
  REQUIRE(n.total_degree() == 3);
  REQUIRE(n.rad() == 1);

  MultiIndex z;
  REQUIRE(z.zero());
  REQUIRE_THROWS_AS(z.orbit_split(), InputError);

  MultiIndex two;
  two.set(c2(0, 0), 1);
  two.set(c2(2, 1), 1);
  REQUIRE(two.rad() == 2);

  // set with degree 0 erases
  MultiIndex e;
  e.set(c1(0), 2);
  e.set(c1(0), 0);
  REQUIRE(e.zero());
}

TEST_CASE("coefficients of a single occupation variable", "[local][fourier]") {
  auto m = Marginal::bernoulli(0.5);
  auto b = OrthonormalBasis::build(m);
  auto e0 = LocalFunction::occupation(m, 1, c1(0));
  auto co = e0.fourier(b);
  // eta = 1/2 + (1/2) phi_1
  REQUIRE(co.size() == 2);
  REQUIRE_THAT(co.at(MultiIndex{}), WithinAbs(0.5, 1e-14));
  REQUIRE_THAT(co.at(MultiIndex::single(c1(0), 1)), WithinAbs(0.5, 1e-14));
}

TEST_CASE("coefficients of a product split across sites", "[local][fourier]") {
  auto m = Marginal::bernoulli(0.5);
  auto b = OrthonormalBasis::build(m);
  auto f = LocalFunction::occupation(m, 1, c1(0)) * LocalFunction::occupation(m, 1, c1(1));
  auto co = f.fourier(b);
  REQUIRE(co.size() == 4);
  REQUIRE_THAT(co.at(MultiIndex{}), WithinAbs(0.25, 1e-14));
  REQUIRE_THAT(co.at(MultiIndex::single(c1(0), 1)), WithinAbs(0.25, 1e-14));
  REQUIRE_THAT(co.at(MultiIndex::single(c1(1), 1)), WithinAbs(0.25, 1e-14));
  MultiIndex both;
  both.set(c1(0), 1);
  both.set(c1(1), 1);
  REQUIRE_THAT(co.at(both), WithinAbs(0.25, 1e-14));
  // Parseval
  double ssq = 0.0;
  for (auto& [k, v] : co) ssq += v * v;
  REQUIRE_THAT(ssq, WithinAbs(f.inner(f), 1e-14));
}

TEST_CASE("round trip through coefficients", "[local][fourier]") {
  auto m = Marginal::uniform_levels(2);
  auto b = OrthonormalBasis::build(m);
  Window w(1, {c1(-1), c1(0), c1(1)});
  auto f = LocalFunction::tabulate(m, w, [](const std::vector<int>& d) {
    return 0.3 * d[0] - 1.7 * d[1] * d[2] + 0.05 * d[2] * d[2];
  });
  auto co = f.fourier(b);
  auto g = LocalFunction::from_fourier(b, co, 1);
  auto diff = f - g;
  REQUIRE(diff.max_abs() < 1e-12);
  double ssq = 0.0;
  for (auto& [k, v] : co) ssq += v * v;
  REQUIRE_THAT(ssq, WithinAbs(f.inner(f), 1e-12));
}

TEST_CASE("basis modes are orthonormal across sites", "[local][fourier]") {
  auto m = Marginal::uniform_levels(2);
  auto b = OrthonormalBasis::build(m);
  MultiIndex n1;
  n1.set(c1(0), 1);
  n1.set(c1(1), 2);
  MultiIndex n2;
  n2.set(c1(0), 2);
  n2.set(c1(1), 1);
  auto f1 = LocalFunction::basis_mode(b, n1, 1);
  auto f2 = LocalFunction::basis_mode(b, n2, 1);
  REQUIRE_THAT(f1.inner(f1), WithinAbs(1.0, 1e-12));
  REQUIRE_THAT(f1.inner(f2), WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(f1.mean(), WithinAbs(0.0, 1e-12));
  // its own coefficient map is a single unit entry
  auto co = f1.fourier(b);
  REQUIRE(co.size() == 1);
  REQUIRE_THAT(co.at(n1), WithinAbs(1.0, 1e-12));
}

TEST_CASE("trim removes inert sites", "[local]") {
  auto m = Marginal::bernoulli(0.5);
  Window w(1, {c1(0), c1(1), c1(2)});
  auto atoms = m->atoms();
  auto f = LocalFunction::tabulate(m, w, [&](const std::vector<int>& d) {
    return 3.0 * atoms[d[1]];  // depends on site 1 only
  });
  auto t = f.trimmed();
  REQUIRE(t.window().size() == 1);
  REQUIRE(t.window().site(0) == c1(1));
  REQUIRE_THAT((t - f).max_abs(), WithinAbs(0.0, 0.0));
}

TEST_CASE("dimension and marginal mismatches are rejected", "[local]") {
  auto m = Marginal::bernoulli(0.5);
  auto m2 = Marginal::bernoulli(0.25);
  auto f = LocalFunction::occupation(m, 1, c1(0));
  auto g = LocalFunction::occupation(m2, 1, c1(0));
  REQUIRE_THROWS_AS(f * g, InputError);
  auto h2 = LocalFunction::occupation(m, 2, c2(0, 1));
  REQUIRE_THROWS_AS(f * h2, DimensionError);
  REQUIRE_THROWS_AS(Window(1, {c2(0, 1)}), DimensionError);
  REQUIRE_THROWS_AS(Window(1, {c1(0), c1(0)}), InputError);
}

TEST_CASE("incomplete bases cannot expand functions", "[local][fourier]") {
  auto m = Marginal::uniform_levels(2);
  auto b1 = OrthonormalBasis::build(m, 2);  // only 2 of 3 modes
  auto f = LocalFunction::occupation(m, 1, c1(0));
  REQUIRE_THROWS_AS(f.fourier(b1), CompletenessError);
}

TEST_CASE("oversized windows hit the capacity cap", "[local]") {
  auto m = Marginal::bernoulli(0.5);
  std::vector<Coord> sites;
  for (int x = 0; x < 25; ++x) sites.push_back(c1(x));
  Window w(1, sites);
  REQUIRE_THROWS_AS(
      LocalFunction::tabulate(m, w, [](const std::vector<int>&) { return 0.0; }),
      CapacityError);
}

TEST_CASE("orbit collection groups shifted indices", "[local]") {
  std::map<MultiIndex, double> co;
  MultiIndex a = MultiIndex::single(c1(0), 1);
  MultiIndex b = MultiIndex::single(c1(4), 1);
  MultiIndex c = MultiIndex::single(c1(2), 2);
  co[a] = 1.5;
  co[b] = -0.5;
  co[c] = 2.0;
  co[MultiIndex{}] = 9.0;  // constant mode is skipped
  auto oc = orbit_collect(co);
  REQUIRE(oc.sums.size() == 2);
  REQUIRE_THAT(oc.sums.at(MultiIndex::single(c1(0), 1)), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(oc.sums.at(MultiIndex::single(c1(0), 2)), WithinAbs(2.0, 1e-15));
  REQUIRE(oc.members.at(MultiIndex::single(c1(0), 1)).size() == 2);
}
