// Acceptance gate: one line per criterion, [PASS]/[FAIL], exit code equal to
// the number of failures.  Tolerances and seeds are pinned here on purpose;
// loosening them is a contract change, not a tuning knob.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gkdiff/dynamics.hpp"
#include "gkdiff/exchange_kernel.hpp"
#include "gkdiff/gradient.hpp"
#include "gkdiff/montecarlo.hpp"
#include "gkdiff/variational.hpp"

namespace {

using namespace gkdiff;

struct Outcome {
  bool pass = false;
  std::string detail;
};

Coord c1(int x) { return Coord{x, 0, 0}; }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << x;
  return os.str();
}

LocalFunction random_centered(MarginalPtr m, const Window& w, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto f =
      LocalFunction::tabulate(m, w, [&](const std::vector<int>&) { return u(rng); });
  return f.centered();
}

Window random_window(int dim, int radius, int max_sites, std::mt19937& rng) {
  std::uniform_int_distribution<int> pick(-radius, radius);
  std::set<Coord> sites;
  while (sites.size() < static_cast<std::size_t>(max_sites)) {
    Coord p{};
    for (int i = 0; i < dim; ++i) p[i] = pick(rng);
    sites.insert(p);
  }
  return Window(dim, std::vector<Coord>(sites.begin(), sites.end()));
}

std::vector<BondGenerator> builtin_models() {
  std::vector<BondGenerator> m;
  m.push_back(BondGenerator::make_ssep(0.5));
  m.push_back(BondGenerator::make_gep(2));
  m.push_back(BondGenerator::make_gep(3));
  m.push_back(BondGenerator::make_zero_range([](int k) { return double(k); }, 3));
  return m;
}

// 1. Orbit-sum and brute-force seminorms agree on random mean-zero inputs.
Outcome criterion_seminorm_routes() {
  std::mt19937 rng(901);
  const std::vector<MarginalPtr> marginals = {
      Marginal::bernoulli(0.5), Marginal::bernoulli(0.3), Marginal::uniform_levels(2)};
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto f = random_centered(marginals[trial % marginals.size()],
                             random_window(1, 2, 3, rng), rng);
    worst = std::max(worst, std::abs(seminorm_sq(f) - seminorm_brute(f)));
  }
  for (int trial = 0; trial < 50; ++trial) {
    auto f = random_centered(marginals[trial % marginals.size()],
                             random_window(2, 2, 3, rng), rng);
    worst = std::max(worst, std::abs(seminorm_sq(f) - seminorm_brute(f)));
  }
  return {worst <= 1e-10, "250 cases, max route gap " + fmt(worst)};
}

// 2. Random gradients: zero seminorm, successful decomposition, energy bound.
Outcome criterion_gradient_decompose() {
  std::mt19937 rng(902);
  const std::vector<MarginalPtr> marginals = {Marginal::bernoulli(0.5),
                                              Marginal::bernoulli(0.3)};
  double worst_semi = 0.0, worst_res = 0.0, worst_ratio = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = trial < 70 ? 1 : 2;
    auto m = marginals[trial % marginals.size()];
    const Window w = dim == 1 ? Window::box(Box::cube(1, -1, 1))
                              : Window::box(Box::cube(2, 0, 1));
    auto f = LocalFunction::constant(m, dim, 0.0);
    for (int axis = 0; axis < dim; ++axis) {
      auto g = random_centered(m, w, rng);
      f = f + (g.shifted(unit_vec(axis)) - g);
    }
    worst_semi = std::max(worst_semi, seminorm_sq(f));
    const auto dec = decompose(f);
    worst_res = std::max(worst_res, dec.residual);
    const double bound =
        dim * std::pow(2.0 * dec.s_f + 1.0, 2.0) * f.inner(f) * (1 + 1e-9);
    worst_ratio = std::max(worst_ratio, dec.energy / bound);
  }
  const bool ok = worst_semi <= 1e-18 && worst_res <= 1e-10 && worst_ratio <= 1.0;
  return {ok, "100 gradients, max seminorm " + fmt(worst_semi) + ", max residual " +
                  fmt(worst_res) + ", max energy/bound " + fmt(worst_ratio)};
}

// 3. Gradient plus a basis mode: rejected, witness bounded by the seminorm.
Outcome criterion_witness() {
  std::mt19937 rng(903);
  const std::vector<MarginalPtr> marginals = {Marginal::bernoulli(0.5),
                                              Marginal::uniform_levels(2)};
  std::uniform_real_distribution<double> amp(0.2, 1.0);
  std::uniform_int_distribution<int> site(-1, 1);
  int rejected = 0;
  double worst_excess = -1.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = marginals[trial % marginals.size()];
    auto basis = OrthonormalBasis::build(m);
    MultiIndex n;
    std::uniform_int_distribution<int> mode(1, static_cast<int>(m->size()) - 1);
    n.set(c1(site(rng)), mode(rng));
    if (trial % 5 == 0) {
      int other = site(rng);
      while (n.at(c1(other)) != 0) other = site(rng);
      n.set(c1(other), mode(rng));
    }
    auto g = random_centered(m, Window::box(Box::cube(1, 0, 1)), rng);
    const double c = (trial % 2 ? 1.0 : -1.0) * amp(rng);
    auto f = (g.shifted(c1(1)) - g) + c * LocalFunction::basis_mode(basis, n, 1);
    try {
      decompose(f);
    } catch (const NotAGradientError& e) {
      ++rejected;
      worst_excess = std::max(
          worst_excess, e.witness_sum * e.witness_sum - (seminorm_sq(f) + 1e-12));
    }
  }
  return {rejected == 100 && worst_excess <= 0.0,
          std::to_string(rejected) + "/100 rejected, max bound excess " +
              fmt(worst_excess)};
}

// 4. Telescoping a coefficient profile against a single mode stays inside
// its energy bound; side-3 cubes in d = 3 go through the validated
// shift-coefficient identity (the dense table would need 2^27 entries).
Outcome criterion_telescoping() {
  std::mt19937 rng(904);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;        // energy / bound
  double worst_ident = 0.0;  // dense energy vs identity energy
  auto centered_profile = [&](int dim, int side) {
    std::map<Coord, double> coeffs;
    double total = 0.0;
    for (const Coord& x : Box::cube(dim, 0, side - 1).sites()) {
      coeffs[x] = u(rng);
      total += coeffs[x];
    }
    coeffs[kOrigin] -= total;
    return CoefficientProfile(dim, coeffs);
  };
  auto identity_energy = [](const CoefficientProfile& a) {
    double e = 0.0;
    for (const auto& axis : detail::telescope_shift_coefficients(a))
      for (const auto& [x, c] : axis) e += c * c;
    return e;
  };

  const auto mb = Marginal::bernoulli(0.5);
  const auto mu = Marginal::uniform_levels(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = trial % 2 ? mb : mu;
    auto basis = OrthonormalBasis::build(m);
    MultiIndex n0;
    n0.set(kOrigin, 1 + (trial % static_cast<int>(m->size() - 1)));
    auto h = LocalFunction::basis_mode(basis, n0, 1);
    std::map<Coord, double> coeffs;
    double total = 0.0;
    for (int x = -2; x <= 2; ++x) {
      coeffs[c1(x)] = u(rng);
      total += coeffs[c1(x)];
    }
    coeffs[kOrigin] -= total;
    CoefficientProfile a(1, coeffs);
    auto g = telescope_1d(a, h);
    const double s_a = static_cast<double>(a.cube_size());
    worst = std::max(worst, g.inner(g) / (s_a * s_a * a.sum_sq() * h.inner(h)));
  }

  auto basis = OrthonormalBasis::build(mb);
  for (auto [dim, side, trials] :
       {std::array<int, 3>{2, 2, 6}, {2, 3, 6}, {3, 2, 3}}) {
    MultiIndex n0;
    n0.set(kOrigin, 1);
    auto h = LocalFunction::basis_mode(basis, n0, dim);
    for (int trial = 0; trial < trials; ++trial) {
      const CoefficientProfile a = centered_profile(dim, side);
      auto parts = telescope_nd(a, h);
      double energy = 0.0;
      for (const auto& g : parts) energy += g.inner(g);
      const double s_a = static_cast<double>(a.cube_size());
      worst = std::max(worst, energy / (s_a * s_a * a.sum_sq() * h.inner(h)));
      worst_ident =
          std::max(worst_ident,
                   std::abs(energy - identity_energy(a) * h.inner(h)));
    }
  }
  for (int trial = 0; trial < 4; ++trial) {
    const CoefficientProfile a = centered_profile(3, 3);
    const double s_a = static_cast<double>(a.cube_size());
    worst = std::max(worst, identity_energy(a) / (s_a * s_a * a.sum_sq()));
  }
  const bool ok = worst <= 1.0 + 1e-9 && worst_ident <= 1e-10;
  return {ok, "max energy/bound " + fmt(worst) + ", identity gap " +
                  fmt(worst_ident)};
}

// 5. Snake path: bijective unit-step enumeration of every small hypercube.
Outcome criterion_snake_path() {
  int boxes = 0;
  for (int dim = 1; dim <= 3; ++dim) {
    std::array<int, 3> sides{1, 1, 1};
    while (true) {
      Box b(dim, kOrigin, kOrigin);
      for (int i = 0; i < dim; ++i) b.hi[i] = sides[i] - 1;
      const auto path = snake_path(b);
      ++boxes;
      if (path.size() != static_cast<std::size_t>(b.volume()))
        return {false, "short path on a side " + std::to_string(sides[0]) + " box"};
      auto sorted = path;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        return {false, "repeated site in a path"};
      for (const Coord& p : path)
        if (!b.contains(p)) return {false, "path leaves its box"};
      for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const Coord d = sub(path[i + 1], path[i]);
        if (std::abs(d[0]) + std::abs(d[1]) + std::abs(d[2]) != 1)
          return {false, "non-unit step in a path"};
      }
      int axis = 0;
      while (axis < dim && sides[axis] == 4) sides[axis++] = 1;
      if (axis == dim) break;
      ++sides[axis];
    }
  }
  return {true, std::to_string(boxes) + " boxes, all bijective with unit steps"};
}

// 6. Bond generator invariants for every built-in model.
Outcome criterion_generator_invariants() {
  for (const auto& model : builtin_models()) {
    const auto r = model.self_check();
    if (r.constants_defect != 0.0 || r.conservation_defect != 0.0 ||
        r.offsite_defect != 0.0)
      return {false, model.name() + ": exact invariant violated"};
    if (r.conjugation_defect > 1e-12)
      return {false, model.name() + ": conjugation defect " + fmt(r.conjugation_defect)};
    if (r.reversibility_defect > 1e-12)
      return {false,
              model.name() + ": reversibility defect " + fmt(r.reversibility_defect)};
    if (r.nonpositivity_eig > 1e-12)
      return {false, model.name() + ": positive generator eigenvalue " +
                         fmt(r.nonpositivity_eig)};
    const auto xi0 = model.xi_fn(kOrigin);
    for (const Coord z : {unit_vec(0), neg(unit_vec(0))})
      if (model.dirichlet(z, xi0) < -1e-12)
        return {false, model.name() + ": negative bond dissipation"};
  }
  return {true, "4 models: conjugation, reversibility, nonnegativity, conservation"};
}

// 7. Variational corrections: exclusion vanishes at every radius with
// D = Ds = 1; capped exchange has a positive current seminorm and strictly
// negative, nonincreasing corrections.
Outcome criterion_variational() {
  const auto ssep = BondGenerator::make_ssep(0.5);
  if (std::abs(static_D(ssep).Ds(0, 0) - 1.0) > 1e-14)
    return {false, "exclusion static part is not 1"};
  for (int r = 1; r <= 3; ++r) {
    const auto v = minimize(ssep, {1.0}, r);
    if (std::abs(v.correction) > 1e-10 || std::abs(v.D_dir - 1.0) > 1e-10)
      return {false, "exclusion correction at radius " + std::to_string(r) +
                         " is " + fmt(v.correction)};
  }
  const auto gep = BondGenerator::make_gep(2);
  if (seminorm_sq(gep.current_axis(0)) <= 0.0)
    return {false, "capped-exchange current seminorm is not positive"};
  std::vector<double> corr;
  for (int r = 1; r <= 3; ++r) corr.push_back(minimize(gep, {1.0}, r).correction);
  if (!(corr[0] < 0.0))
    return {false, "first capped-exchange correction is not negative"};
  for (std::size_t i = 0; i + 1 < corr.size(); ++i)
    if (corr[i + 1] > corr[i] + 1e-12)
      return {false, "correction increased from radius " + std::to_string(i + 1)};
  return {true, "exclusion corrections 0 at r=1..3; capped-exchange " +
                    fmt(corr[0]) + " -> " + fmt(corr[2]) + " nonincreasing"};
}

// 8. Axis current equals its two bond halves pointwise, exactly.
Outcome criterion_current_split() {
  for (const auto& model : builtin_models()) {
    const auto ja = model.current_axis(0);
    const auto split =
        model.current(c1(1)) + model.current(c1(1)).shifted(c1(-1));
    if ((ja - split).max_abs() != 0.0)
      return {false, model.name() + ": split differs pointwise"};
  }
  return {true, "4 models split exactly"};
}

// 9. Monte Carlo consistency at pinned seed 20260815.
Outcome criterion_monte_carlo() {
  const std::uint64_t seed = 20260815;
  std::ostringstream d;

  const auto ssep = BondGenerator::make_ssep(0.5);
  const auto lags = uniform_lags(32.0, 33);
  const auto traj = simulate(ssep, 64, lags, 2400, seed);
  const auto spread = moment_spreading_D(estimate_S(traj));
  const auto gk_ssep =
      integrate_gk(current_autocorrelation(traj, lattice_pair_current(ssep)));
  d << "exclusion D " << fmt(spread.D) << "+-" << fmt(spread.se);
  if (std::abs(spread.D - 1.0) > 3.0 * spread.se)
    return {false, d.str() + " is not within 3 SE of 1"};
  if (std::abs(gk_ssep.correction) >
      std::max(3.0 * gk_ssep.correction_se, 1e-12))
    return {false, "exclusion correction " + fmt(gk_ssep.correction) +
                       " is not within 3 SE of 0"};

  const auto uniform = ExchangeKernel::uniform();
  const auto traj_u = simulate(uniform, 64, uniform_lags(16.0, 33), 1200, seed);
  const auto gk_u = integrate_gk(current_autocorrelation(
      traj_u, [&](double a, double b) { return uniform.pair_current(a, b); }));
  const auto ks = ks_stationarity(traj_u, *uniform.marginal());
  d << "; uniform corr " << fmt(gk_u.correction) << ", KS p " << fmt(ks.p_value);
  if (std::abs(gk_u.correction) > std::max(3.0 * gk_u.correction_se, 1e-12))
    return {false, "uniform-kernel correction " + fmt(gk_u.correction) +
                       " is not within 3 SE of 0"};
  if (ks.p_value < 0.01)
    return {false, "stationarity KS p-value " + fmt(ks.p_value) + " below 0.01"};

  const auto sqrt_k = ExchangeKernel::sqrt_rate();
  if (sqrt_k.balance_defect_value() > 1e-6)
    return {false, "sqrt-rate balance defect above 1e-6"};
  const auto traj_s = simulate(sqrt_k, 64, uniform_lags(16.0, 33), 1200, seed);
  const auto gk_s = integrate_gk(current_autocorrelation(
      traj_s, [&](double a, double b) { return sqrt_k.pair_current(a, b); }));
  d << "; sqrt corr " << fmt(gk_s.correction) << "+-" << fmt(gk_s.correction_se);
  if (gk_s.correction > 3.0 * gk_s.correction_se)
    return {false, "sqrt-rate correction " + fmt(gk_s.correction) +
                       " is not <= 0 within error"};
  return {true, d.str()};
}

// 10. Two-route dissipation identity for the conserved field.
Outcome criterion_dissipation_identity() {
  double worst = 0.0;
  for (const auto& model : builtin_models()) {
    const auto xi0 = model.xi_fn(kOrigin);
    for (const Coord z : {unit_vec(0), neg(unit_vec(0))}) {
      const double lhs = 2.0 * model.dirichlet(z, xi0);
      const double rhs = -xi0.inner(model.current(z));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return {worst <= 1e-12, "max defect " + fmt(worst) + " over 4 models"};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int failures = 0;

  struct Entry {
    const char* label;
    Outcome (*body)();
    double budget_s;  // 0: no runtime bound
  };
  const std::vector<Entry> entries = {
      {"seminorm dual route on random local functions", criterion_seminorm_routes, 10},
      {"random gradients decompose within the energy bound", criterion_gradient_decompose, 30},
      {"non-gradients rejected with a bounding witness", criterion_witness, 0},
      {"telescoping energy bounds up to side-3 cubes", criterion_telescoping, 0},
      {"snake path enumerates hypercubes bijectively", criterion_snake_path, 0},
      {"bond generator invariants", criterion_generator_invariants, 0},
      {"variational corrections across radii", criterion_variational, 120},
      {"range-one current split is pointwise exact", criterion_current_split, 0},
      {"monte carlo spreading, corrections and stationarity", criterion_monte_carlo, 600},
      {"two-route dissipation identity", criterion_dissipation_identity, 0},
  };

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto t0 = clock::now();
    Outcome out;
    try {
      out = entries[i].body();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(clock::now() - t0).count();
    if (entries[i].budget_s > 0 && secs > entries[i].budget_s) {
      out.pass = false;
      out.detail += " [over budget " + std::to_string(entries[i].budget_s) + " s]";
    }
    if (!out.pass) ++failures;
    std::printf("[%s] %2zu. %s (%s; %.2f s)\n", out.pass ? "PASS" : "FAIL",
                i + 1, entries[i].label, out.detail.c_str(), secs);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
