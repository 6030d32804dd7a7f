#pragma once

#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "gkdiff/dynamics.hpp"
#include "gkdiff/exchange_kernel.hpp"
#include "gkdiff/gradient.hpp"
#include "gkdiff/local_function.hpp"
#include "gkdiff/marginal.hpp"
#include "gkdiff/montecarlo.hpp"
#include "gkdiff/variational.hpp"

namespace gkdiff {

// Insertion-ordered documents keep reruns byte-identical.
using Json = nlohmann::ordered_json;

namespace jsonio {

inline void require_object(const Json& j, const std::string& what) {
  if (!j.is_object())
    throw InputError(what + " config must be a JSON object");
}

// Schema guard: every present key must be allowed, every required key present.
inline void check_keys(const Json& j, const std::string& what,
                       const std::vector<std::string>& allowed,
                       const std::vector<std::string>& required = {}) {
  require_object(j, what);
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw InputError("unknown key '" + item.key() + "' in " + what +
                       " config");
  }
  for (const std::string& key : required)
    if (!j.contains(key))
      throw InputError(what + " config needs key '" + key + "'");
}

template <class T>
T get_or(const Json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace jsonio

// Number + provenance label.  Everything the CLI emits goes through one of
// these three, so each reported value says how it was obtained.
inline Json labeled_exact(double value) {
  return Json{{"value", value}, {"method", "exact"}};
}
inline Json labeled_quadrature(double value, double error) {
  return Json{{"value", value}, {"method", "quadrature"}, {"error", error}};
}
inline Json labeled_monte_carlo(double value, double se) {
  return Json{{"value", value}, {"method", "monte-carlo"}, {"se", se}};
}

inline Json marginal_to_json(const Marginal& m) {
  if (m.is_finite())
    return Json{{"type", "finite"}, {"atoms", m.atoms()}, {"weights", m.weights()}};
  return Json{{"type", "gamma"},
              {"shape", m.shape()},
              {"temperature", m.temperature()}};
}

inline MarginalPtr marginal_from_json(const Json& j) {
  jsonio::require_object(j, "marginal");
  const std::string type = jsonio::get_or<std::string>(j, "type", "");
  if (type == "bernoulli") {
    jsonio::check_keys(j, "marginal", {"type", "p"}, {"p"});
    return Marginal::bernoulli(j.at("p").get<double>());
  }
  if (type == "finite") {
    jsonio::check_keys(j, "marginal", {"type", "atoms", "weights"},
                       {"atoms", "weights"});
    return Marginal::finite(j.at("atoms").get<std::vector<double>>(),
                            j.at("weights").get<std::vector<double>>());
  }
  if (type == "uniform-levels") {
    jsonio::check_keys(j, "marginal", {"type", "kappa"}, {"kappa"});
    return Marginal::uniform_levels(j.at("kappa").get<int>());
  }
  if (type == "gamma") {
    jsonio::check_keys(j, "marginal", {"type", "shape", "temperature"},
                       {"shape", "temperature"});
    return Marginal::gamma(j.at("shape").get<double>(),
                           j.at("temperature").get<double>());
  }
  throw InputError(
      "marginal type must be bernoulli, finite, uniform-levels or gamma");
}

inline Json local_function_to_json(const LocalFunction& f) {
  Json sites = Json::array();
  for (const Coord& p : f.window().sites()) {
    Json s = Json::array();
    for (int i = 0; i < f.dim(); ++i) s.push_back(p[i]);
    sites.push_back(s);
  }
  return Json{{"marginal", marginal_to_json(*f.marginal())},
              {"dim", f.dim()},
              {"sites", sites},
              {"values", f.values()}};
}

inline LocalFunction local_function_from_json(const Json& j) {
  jsonio::check_keys(j, "function", {"marginal", "dim", "sites", "values"},
                     {"marginal", "dim", "sites", "values"});
  const MarginalPtr m = marginal_from_json(j.at("marginal"));
  const int dim = j.at("dim").get<int>();
  std::vector<Coord> sites;
  for (const Json& s : j.at("sites")) {
    if (!s.is_array() || static_cast<int>(s.size()) != dim)
      throw InputError("each site needs exactly " + std::to_string(dim) +
                       " coordinates");
    Coord p{};
    for (int i = 0; i < dim; ++i) p[i] = s[i].get<int>();
    sites.push_back(p);
  }
  return LocalFunction(m, Window(dim, std::move(sites)),
                       j.at("values").get<std::vector<double>>());
}

// Lattice models by name.  The zero-range rate is the linear one; other rate
// laws are a library-level construction, not a config option.
inline BondGenerator model_from_json(const Json& j) {
  jsonio::require_object(j, "model");
  const std::string name = jsonio::get_or<std::string>(j, "model", "");
  const int dim = jsonio::get_or<int>(j, "dim", 1);
  if (name == "ssep") {
    jsonio::check_keys(j, "model", {"model", "density", "rate", "dim"});
    return BondGenerator::make_ssep(jsonio::get_or<double>(j, "density", 0.5),
                                    jsonio::get_or<double>(j, "rate", 1.0), dim);
  }
  if (name == "gep") {
    jsonio::check_keys(j, "model", {"model", "kappa", "fugacity", "dim"},
                       {"kappa"});
    return BondGenerator::make_gep(j.at("kappa").get<int>(),
                                   jsonio::get_or<double>(j, "fugacity", 1.0),
                                   dim);
  }
  if (name == "zero-range") {
    jsonio::check_keys(j, "model", {"model", "kappa", "fugacity", "dim"},
                       {"kappa"});
    return BondGenerator::make_zero_range([](int k) { return double(k); },
                                          j.at("kappa").get<int>(),
                                          jsonio::get_or<double>(j, "fugacity", 1.0),
                                          dim);
  }
  throw InputError("model must be ssep, gep or zero-range");
}

// Kernel selector: "uniform" | "sqrt_rate" | {"custom": {...}}.  The string
// forms read shape/temperature (defaults 1) from the surrounding config.
inline ExchangeKernel kernel_from_json(const Json& kernel, double shape,
                                       double temperature) {
  if (kernel.is_string()) {
    const std::string name = kernel.get<std::string>();
    if (name == "uniform") return ExchangeKernel::uniform(1.0, temperature);
    if (name == "sqrt_rate") return ExchangeKernel::sqrt_rate(shape, temperature);
    if (name == "zero") return ExchangeKernel::zero(shape, temperature);
    throw InputError("kernel must be uniform, sqrt_rate, zero or {custom:...}");
  }
  jsonio::check_keys(kernel, "kernel", {"custom"}, {"custom"});
  const Json& c = kernel.at("custom");
  jsonio::check_keys(c, "custom kernel",
                     {"name", "shape", "temperature", "rate_scale",
                      "rate_power", "beta"});
  const double s = jsonio::get_or<double>(c, "shape", shape);
  return ExchangeKernel::beta_split(
      jsonio::get_or<std::string>(c, "name", "custom"), s,
      jsonio::get_or<double>(c, "temperature", temperature),
      jsonio::get_or<double>(c, "rate_scale", 1.0),
      jsonio::get_or<double>(c, "rate_power", 0.0),
      jsonio::get_or<double>(c, "beta", s));
}

inline Json multi_index_to_json(const MultiIndex& n, int dim) {
  Json out = Json::array();
  for (const auto& [site, mode] : n.entries()) {
    Json s = Json::array();
    for (int i = 0; i < dim; ++i) s.push_back(site[i]);
    out.push_back(Json{{"site", s}, {"mode", mode}});
  }
  return out;
}

inline Json decomposition_to_json(const GradientDecomposition& d) {
  Json components = Json::array();
  for (const auto& g : d.components) components.push_back(local_function_to_json(g));
  return Json{{"components", components},
              {"residual", labeled_exact(d.residual)},
              {"energy", labeled_exact(d.energy)},
              {"seminorm_sq", labeled_exact(d.seminorm_sq)},
              {"orbit_count", d.orbit_count}};
}

// Fixed three-column layout: lag, series value, standard error.
inline void write_series_csv(std::ostream& os, const CorrelationSeries& c) {
  os << "lag,C,SE\n";
  for (std::size_t l = 0; l < c.lags.size(); ++l)
    os << c.lags[l] << ',' << c.values[l] << ',' << c.se[l] << '\n';
}

inline Json diffusion_to_json(const DiffusionEstimate& e, const Json& Ds_labeled) {
  Json warnings = Json::array();
  if (!e.warnings.empty()) warnings.push_back(e.warnings);
  return Json{{"Ds_static", Ds_labeled},
              {"dynamical_correction",
               labeled_monte_carlo(e.dynamical_correction, e.correction_se)},
              {"D_total", labeled_monte_carlo(e.D_total, e.correction_se)},
              {"moment_spreading_D",
               labeled_monte_carlo(e.spreading_D, e.spreading_se)},
              {"N", e.N},
              {"trajectories", e.trajectories},
              {"t_max", e.t_max},
              {"seed", e.seed},
              {"warnings", warnings}};
}

}  // namespace gkdiff
