#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gkdiff/dynamics.hpp"
#include "gkdiff/exchange_kernel.hpp"
#include "gkdiff/gradient.hpp"
#include "gkdiff/rng.hpp"
#include "gkdiff/variational.hpp"

namespace gkdiff {

struct SelfTestCase {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SelfTestReport {
  std::vector<SelfTestCase> cases;
  bool all_pass() const {
    for (const auto& c : cases)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

template <class Fn>
void selftest_case(SelfTestReport& rep, const std::string& name, Fn&& body) {
  SelfTestCase c;
  c.name = name;
  try {
    std::ostringstream detail;
    c.pass = body(detail);
    c.detail = detail.str();
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail = e.what();
  }
  rep.cases.push_back(std::move(c));
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << x;
  return os.str();
}

// A valid-looking kernel whose redistribution law does not match its
// marginal; construction skips the balance gate so the battery can catch it.
inline ExchangeKernel skewed_kernel() {
  const double g = 3.0;
  const double lognorm = 2.0 * std::lgamma(g) - std::lgamma(2.0 * g);
  auto density = [g, lognorm](double u, double a, double b) {
    const double s = a + b;
    const double x = (a - u) / s;
    if (!(x > 0.0) || !(x < 1.0)) return 0.0;
    return std::exp((g - 1.0) * (std::log(x) + std::log1p(-x)) - lognorm) / s;
  };
  auto sample = [g](double a, double b, Philox& rng) {
    return a - (a + b) * rng.beta(g, g);
  };
  return ExchangeKernel("injected-skew", Marginal::gamma(1.0, 1.0),
                        [](double) { return 1.0; }, density, sample, nullptr,
                        nullptr, 1e9);
}

}  // namespace detail

// Built-in consistency battery.  Every case is an independent recomputation
// of something the library claims; a fresh build must pass all of them.
inline SelfTestReport run_selftest(bool inject_asymmetric_kernel = false) {
  using detail::fmt;
  SelfTestReport rep;

  detail::selftest_case(rep, "rng-known-answer", [](std::ostringstream& d) {
    struct Vec {
      std::array<std::uint32_t, 4> ctr;
      std::array<std::uint32_t, 2> key;
      std::array<std::uint32_t, 4> out;
    };
    const std::vector<Vec> vecs = {
        {{0u, 0u, 0u, 0u},
         {0u, 0u},
         {0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}},
        {{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
         {0xffffffffu, 0xffffffffu},
         {0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}},
        {{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
         {0xa4093822u, 0x299f31d0u},
         {0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}}};
    for (const Vec& v : vecs) {
      if (Philox::round10(v.ctr, v.key) != v.out) {
        d << "counter stream disagrees with the published vectors";
        return false;
      }
    }
    d << "3 reference vectors";
    return true;
  });

  const auto models = [] {
    std::vector<BondGenerator> m;
    m.push_back(BondGenerator::make_ssep(0.5));
    m.push_back(BondGenerator::make_gep(2));
    m.push_back(BondGenerator::make_zero_range([](int k) { return double(k); }, 3));
    return m;
  }();

  detail::selftest_case(rep, "generator-invariants", [&](std::ostringstream& d) {
    for (const auto& model : models) {
      const auto r = model.self_check();
      if (!r.ok) {
        d << model.name() << ": reversibility defect " << fmt(r.reversibility_defect)
          << ", conservation defect " << fmt(r.conservation_defect);
        return false;
      }
    }
    d << models.size() << " models";
    return true;
  });

  detail::selftest_case(rep, "fluctuation-dissipation", [&](std::ostringstream& d) {
    double worst = 0.0;
    for (const auto& model : models) {
      const auto xi0 = model.xi_fn(kOrigin);
      for (const Coord z : {unit_vec(0), neg(unit_vec(0))}) {
        const double lhs = 2.0 * model.dirichlet(z, xi0);
        const double rhs = -xi0.inner(model.current(z));
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    }
    d << "max defect " << fmt(worst);
    return worst <= 1e-12;
  });

  detail::selftest_case(rep, "seminorm-dual-route", [&](std::ostringstream& d) {
    double worst = 0.0;
    for (const auto& model : models) {
      const auto j = model.current_axis(0);
      worst = std::max(worst, std::abs(seminorm_sq(j) - seminorm_brute(j)));
    }
    d << "max route gap " << fmt(worst);
    return worst <= 1e-10;
  });

  detail::selftest_case(rep, "gradient-roundtrip", [&](std::ostringstream& d) {
    const auto ssep = BondGenerator::make_ssep(0.5);
    const auto dec = decompose(ssep.current_axis(0));
    d << "residual " << fmt(dec.residual);
    return dec.residual <= 1e-10 && dec.seminorm_sq <= 1e-10;
  });

  detail::selftest_case(rep, "non-gradient-witness", [&](std::ostringstream& d) {
    const auto gep = BondGenerator::make_gep(2);
    const auto rep2 = gradient_membership(gep.current_axis(0));
    if (rep2.in_gradient_space) {
      d << "no witness found for a current with positive seminorm";
      return false;
    }
    d << "witness orbit sum " << fmt(rep2.witness_sum);
    return rep2.witness_orbit.has_value() && std::abs(rep2.witness_sum) > 1e-10;
  });

  detail::selftest_case(rep, "kernel-detailed-balance", [&](std::ostringstream& d) {
    const auto u = ExchangeKernel::uniform();
    const auto s = ExchangeKernel::sqrt_rate();
    d << "uniform defect " << fmt(u.balance_defect_value()) << ", sqrt defect "
      << fmt(s.balance_defect_value());
    if (u.balance_defect_value() > 1e-6 || s.balance_defect_value() > 1e-6)
      return false;
    if (inject_asymmetric_kernel) {
      const auto bad = detail::skewed_kernel();
      d.str("");
      d << "injected kernel '" << bad.name() << "' breaks detailed balance: defect "
        << fmt(bad.balance_defect_value()) << " exceeds 1e-06";
      return bad.balance_defect_value() <= 1e-6;
    }
    return true;
  });

  detail::selftest_case(rep, "static-closed-forms", [](std::ostringstream& d) {
    const auto qu = static_quadrature(ExchangeKernel::uniform());
    const auto qs = static_quadrature(ExchangeKernel::sqrt_rate());
    const double ref = std::tgamma(4.5) / 12.0;
    d << "uniform Ds " << fmt(qu.Ds) << ", sqrt Ds " << fmt(qs.Ds);
    return std::abs(qu.Ds - 0.5) <= 1e-8 && std::abs(qs.Ds - ref) <= 1e-8;
  });

  detail::selftest_case(rep, "variational-gradient-limit", [](std::ostringstream& d) {
    const auto v = minimize(BondGenerator::make_ssep(0.5), {1.0}, 1);
    d << "ssep correction " << fmt(v.correction);
    return std::abs(v.correction) <= 1e-10 && std::abs(v.D_dir - 1.0) <= 1e-10;
  });

  return rep;
}

}  // namespace gkdiff
