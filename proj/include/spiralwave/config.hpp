#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spiralwave/errors.hpp"
#include "spiralwave/model.hpp"

namespace spiralwave {

// Flat INI: [model] [grid] [series] [finiteq] [fit] [output]. Unknown sections or keys are errors.
struct RunConfig {
  struct Model {
    std::string name = "ginzburg-landau";  // ginzburg-landau, greenberg or custom
    int n = 1;
    std::vector<double> lambda_poly, omega_poly;  // custom only
  } model;
  struct Grid {
    double eps = 1e-3;
    double R = 800.0;
    int N = 8000;
  } grid;
  struct Series {
    int K = 3;
    double omega_tol = 1e-6;
  } series;
  struct FiniteQ {
    std::vector<double> q_list = {0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2};
    std::string R_policy = "adaptive";  // adaptive or fixed
    double R0 = 0.0;                    // 0: max(100, 12/q)
    int N = 4000;
    double bc_tol = 1e-8;
  } finiteq;
  struct Fit {
    double q_min = 0.0, q_max = 1.0;
    bool weighted = false;
  } fit;
  std::string output_dir = "out";

  ModelFunctions build_model() const;
  std::string canonical() const;
};

namespace detail {

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double x;
  try {
    x = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + text + "'");
  }
  if (text.find_first_not_of(" \t", used) != std::string::npos) throw ConfigError(key + ": trailing characters in '" + text + "'");
  return x;
}

inline int parse_int(const std::string& key, const std::string& text) {
  const double x = parse_double(key, text);
  if (x != static_cast<int>(x)) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return static_cast<int>(x);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

}  // namespace detail

inline ModelFunctions RunConfig::build_model() const {
  if (model.name == "ginzburg-landau") return models::ginzburg_landau(model.n);
  if (model.name == "greenberg") return models::greenberg(model.n);
  if (model.name == "custom") {
    if (model.lambda_poly.empty() || model.omega_poly.empty())
      throw ConfigError("model: custom needs lambda_poly and omega_poly");
    return ModelFunctions::from_polynomials("custom", model.n, Polynomial(model.lambda_poly), Polynomial(model.omega_poly));
  }
  throw ConfigError("model.name: unknown model '" + model.name + "'");
}

// Every field that can change a result, fixed order, full precision; the hash is taken over this.
// The output directory is left out so identical runs written to different places hash the same.
inline std::string RunConfig::canonical() const {
  using detail::fmt_double;
  std::ostringstream os;
  os << "model.name=" << model.name << "\nmodel.n=" << model.n << "\nmodel.lambda_poly=" << detail::fmt_list(model.lambda_poly)
     << "\nmodel.omega_poly=" << detail::fmt_list(model.omega_poly) << "\ngrid.eps=" << fmt_double(grid.eps)
     << "\ngrid.R=" << fmt_double(grid.R) << "\ngrid.N=" << grid.N << "\nseries.K=" << series.K
     << "\nseries.omega_tol=" << fmt_double(series.omega_tol) << "\nfiniteq.q_list=" << detail::fmt_list(finiteq.q_list)
     << "\nfiniteq.R_policy=" << finiteq.R_policy << "\nfiniteq.R0=" << fmt_double(finiteq.R0) << "\nfiniteq.N=" << finiteq.N
     << "\nfiniteq.bc_tol=" << fmt_double(finiteq.bc_tol) << "\nfit.q_min=" << fmt_double(fit.q_min)
     << "\nfit.q_max=" << fmt_double(fit.q_max) << "\nfit.weighted=" << (fit.weighted ? "true" : "false") << '\n';
  return os.str();
}

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.canonical())));
  return buf;
}

inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"model", {"name", "n", "lambda_poly", "omega_poly"}},
      {"grid", {"eps", "R", "N"}},
      {"series", {"K", "omega_tol"}},
      {"finiteq", {"q_list", "R_policy", "R0", "N", "bc_tol"}},
      {"fit", {"q_min", "q_max", "weighted"}},
      {"output", {"dir"}},
  };
  for (const auto& [section, body] : pt) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) throw ConfigError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw ConfigError("config: unknown key " + section + "." + key);
  }

  RunConfig c;
  const auto get = [&](const std::string& path) { return pt.get_optional<std::string>(path); };
  if (!pt.get_child_optional("model")) throw ConfigError("config: missing [model] section");
  if (auto v = get("model.name")) c.model.name = *v;
  const auto n = get("model.n");
  if (!n) throw ConfigError("config: missing model.n");
  c.model.n = detail::parse_int("model.n", *n);
  if (c.model.n < 0) throw ConfigError("model.n must be >= 0");
  if (auto v = get("model.lambda_poly")) c.model.lambda_poly = detail::parse_list("model.lambda_poly", *v);
  if (auto v = get("model.omega_poly")) c.model.omega_poly = detail::parse_list("model.omega_poly", *v);
  if (c.model.name != "custom" && (!c.model.lambda_poly.empty() || !c.model.omega_poly.empty()))
    throw ConfigError("model: polynomials are only accepted with name = custom");
  if (c.model.name != "ginzburg-landau" && c.model.name != "greenberg" && c.model.name != "custom")
    throw ConfigError("model.name: unknown model '" + c.model.name + "'");
  if (c.model.name == "custom" && (c.model.lambda_poly.empty() || c.model.omega_poly.empty()))
    throw ConfigError("model: custom needs lambda_poly and omega_poly");

  if (auto v = get("grid.eps")) c.grid.eps = detail::parse_double("grid.eps", *v);
  if (auto v = get("grid.R")) c.grid.R = detail::parse_double("grid.R", *v);
  if (auto v = get("grid.N")) c.grid.N = detail::parse_int("grid.N", *v);
  if (auto v = get("series.K")) c.series.K = detail::parse_int("series.K", *v);
  if (auto v = get("series.omega_tol")) c.series.omega_tol = detail::parse_double("series.omega_tol", *v);
  if (auto v = get("finiteq.q_list")) c.finiteq.q_list = detail::parse_list("finiteq.q_list", *v);
  if (auto v = get("finiteq.R_policy")) c.finiteq.R_policy = *v;
  if (auto v = get("finiteq.R0")) c.finiteq.R0 = detail::parse_double("finiteq.R0", *v);
  if (auto v = get("finiteq.N")) c.finiteq.N = detail::parse_int("finiteq.N", *v);
  if (auto v = get("finiteq.bc_tol")) c.finiteq.bc_tol = detail::parse_double("finiteq.bc_tol", *v);
  if (auto v = get("fit.q_min")) c.fit.q_min = detail::parse_double("fit.q_min", *v);
  if (auto v = get("fit.q_max")) c.fit.q_max = detail::parse_double("fit.q_max", *v);
  if (auto v = get("fit.weighted")) c.fit.weighted = detail::parse_bool("fit.weighted", *v);
  if (auto v = get("output.dir")) c.output_dir = *v;
  return c;
}

// Range checks that apply after command-line overrides.
inline void check_config(const RunConfig& c) {
  if (!(c.grid.eps > 0.0 && c.grid.eps < 1.0)) throw ConfigError("grid.eps must lie in (0, 1)");
  if (!(c.grid.R > 1.0)) throw ConfigError("grid.R must exceed 1");
  if (c.grid.N < 200) throw ConfigError("grid.N must be >= 200");
  if (c.series.K < 0) throw ConfigError("series.K must be >= 0");
  if (!(c.series.omega_tol > 0.0)) throw ConfigError("series.omega_tol must be positive");
  if (c.finiteq.R_policy != "adaptive" && c.finiteq.R_policy != "fixed")
    throw ConfigError("finiteq.R_policy must be adaptive or fixed");
  if (c.finiteq.R_policy == "fixed" && !(c.finiteq.R0 > 1.0)) throw ConfigError("finiteq.R_policy = fixed needs R0 > 1");
  if (c.finiteq.N < 200) throw ConfigError("finiteq.N must be >= 200");
  if (!(c.finiteq.bc_tol > 0.0)) throw ConfigError("finiteq.bc_tol must be positive");
  for (double q : c.finiteq.q_list)
    if (!(q > 0.0)) throw ConfigError("finiteq.q_list entries must be positive");
  if (!(c.fit.q_min < c.fit.q_max)) throw ConfigError("fit.q_min must be below fit.q_max");
  if (c.output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_config(in);
}

}  // namespace spiralwave
