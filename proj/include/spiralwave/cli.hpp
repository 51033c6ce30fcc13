#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spiralwave/config.hpp"
#include "spiralwave/finite_q.hpp"
#include "spiralwave/fit.hpp"
#include "spiralwave/series_engine.hpp"

namespace spiralwave {

namespace exit_code {
constexpr int ok = 0;
constexpr int hypothesis = 2;
constexpr int theorem = 3;
constexpr int solver = 4;
constexpr int too_few_points = 5;
constexpr int usage = 64;
constexpr int cant_create = 73;
}  // namespace exit_code

constexpr double kReferenceB = 1.588191499224517;

namespace detail {

class OutputDir {
 public:
  OutputDir(const RunConfig& c) : dir_(c.output_dir), hash_(config_hash(c)) {}

  // False when the directory cannot be created or written to.
  bool prepare() const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) return false;
    const auto probe = dir_ / ".write_probe";
    {
      std::ofstream f(probe);
      if (!f || !(f << 'x') || !f.flush()) return false;
    }
    std::filesystem::remove(probe, ec);
    return true;
  }

  std::vector<std::string> comments() const { return {"config_hash=" + hash_}; }
  const std::string& hash() const { return hash_; }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  template <class Fn>
  void write(const std::string& name, Fn&& fn) const {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path(name).string());
    fn(f);
    if (!f) throw ConfigError("write failed: " + path(name).string());
  }

  void write_json(const std::string& name, nlohmann::json j) const {
    j["config_hash"] = hash_;
    write(name, [&](std::ostream& os) { os << std::setw(2) << j << '\n'; });
  }

 private:
  std::filesystem::path dir_;
  std::string hash_;
};

inline FiniteQOptions finite_q_options(const RunConfig& c) {
  FiniteQOptions o;
  o.eps = c.grid.eps;
  o.N = c.finiteq.N;
  o.bc_tol = c.finiteq.bc_tol;
  o.adaptive_R = c.finiteq.R_policy == "adaptive";
  o.R = c.finiteq.R0;
  return o;
}

inline nlohmann::json hypothesis_json(const HypothesisReport& h) {
  auto j = nlohmann::json::array();
  for (const auto& c : h.checks)
    j.push_back({{"name", c.name}, {"passed", c.passed}, {"worst_margin", c.worst_margin}, {"worst_at", c.worst_at}});
  return j;
}

inline void print_hypotheses(std::ostream& log, const HypothesisReport& h) {
  for (const auto& c : h.checks)
    log << (c.passed ? "  ok    " : "  FAIL  ") << c.name << "  margin " << c.worst_margin << " at x=" << c.worst_at << '\n';
}

inline nlohmann::json solver_failure_json(const Error& e) {
  nlohmann::json j{{"error", e.what()}};
  if (const auto* s = dynamic_cast<const SolverError*>(&e)) j["history"] = s->history();
  return j;
}

// Log-space weights from the v_inf uncertainty.
inline std::vector<double> fit_weights(const std::vector<const FiniteQSolution*>& sols) {
  std::vector<double> w;
  for (const auto* s : sols) {
    const double rel = std::max(s->v_inf.uncertainty / s->v_inf.value, 1e-12);
    w.push_back(1.0 / (rel * rel));
  }
  return w;
}

inline void write_svg(std::ostream& os, const std::vector<SweepPoint>& pts, const FitResult& fit) {
  std::vector<double> x, y;
  for (const auto& p : pts) {
    x.push_back(1.0 / p.q);
    y.push_back(std::log(p.q * p.v_inf));
  }
  const auto [x0, x1] = std::minmax_element(x.begin(), x.end());
  const auto [y0, y1] = std::minmax_element(y.begin(), y.end());
  const double W = 480, H = 360, pad = 40;
  const double xs = (W - 2 * pad) / std::max(*x1 - *x0, 1e-12), ys = (H - 2 * pad) / std::max(*y1 - *y0, 1e-12);
  const double xlo = *x0, ylo = *y0;
  auto px = [&](double v) { return pad + (v - xlo) * xs; };
  auto py = [&](double v) { return H - pad - (v - ylo) * ys; };
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"gray\" stroke-dasharray=\"4 3\" points=\"" << px(xlo) << ','
     << py(fit.log_A - fit.B * xlo) << ' ' << px(*x1) << ',' << py(fit.log_A - fit.B * *x1) << "\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"blue\" points=\"";
  for (std::size_t k = 0; k < order.size(); ++k) os << (k ? " " : "") << px(x[order[k]]) << ',' << py(y[order[k]]);
  os << "\"/>\n";
  for (auto i : order) os << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(y[i]) << "\" r=\"3\" fill=\"blue\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">1/q</text>\n";
  os << "<text x=\"12\" y=\"" << H / 2 << "\" transform=\"rotate(-90 12 " << H / 2
     << ")\" text-anchor=\"middle\">log(q v_inf)</text>\n";
  os << std::setprecision(6) << "<text x=\"" << W - pad << "\" y=\"" << pad - 10 << "\" text-anchor=\"end\">B = " << fit.B
     << "</text>\n";
  os << "</svg>\n";
}

}  // namespace detail

inline int cmd_validate(const RunConfig& c, std::ostream& log) {
  const auto model = c.build_model();
  const auto h = validate_hypotheses(model);
  log << "model " << model.name() << ", n = " << model.n() << '\n';
  detail::print_hypotheses(log, h);
  log << (h.all_passed() ? "hypotheses hold\n" : "hypotheses fail\n");
  return h.all_passed() ? exit_code::ok : exit_code::hypothesis;
}

// Leading order plus orders 1..K: order_<k>.csv per order and summary.json.
inline int cmd_series(const RunConfig& c, std::ostream& log) {
  const detail::OutputDir out(c);
  if (!out.prepare()) {
    log << "output directory not writable: " << c.output_dir << '\n';
    return exit_code::cant_create;
  }
  const auto model = c.build_model();
  const auto h = validate_hypotheses(model);
  if (!h.all_passed()) {
    detail::print_hypotheses(log, h);
    return exit_code::hypothesis;
  }
  SeriesOptions so;
  so.K = c.series.K;
  so.omega_tol = c.series.omega_tol;
  SeriesSolution s;
  try {
    s = run_series(model, build_grid(c.grid.eps, c.grid.R, c.grid.N), so);
  } catch (const TheoremViolation& e) {
    log << "frequency correction out of tolerance: " << e.what() << '\n';
    out.write_json("diagnostics.json", {{"error", e.what()},
                                        {"order", e.order()},
                                        {"Omega_k", e.value()},
                                        {"tolerance", e.tolerance()},
                                        {"R", c.grid.R},
                                        {"N", c.grid.N},
                                        {"hint", "rerun with a larger R before reading this as a genuine failure"}});
    return exit_code::theorem;
  } catch (const SolverError& e) {
    log << "solver failure: " << e.what() << '\n';
    out.write_json("diagnostics.json", detail::solver_failure_json(e));
    return exit_code::solver;
  } catch (const InvariantViolation& e) {
    log << "invariant violated: " << e.what() << '\n';
    out.write_json("diagnostics.json", detail::solver_failure_json(e));
    return exit_code::solver;
  }

  for (const auto& o : s.orders)
    out.write("order_" + std::to_string(o.k) + ".csv", [&](std::ostream& os) { write_order_csv(os, o, out.comments()); });
  const auto rc = residual_order_check(model, s, 0.1, 0.05);
  auto j = series_summary(s, &rc);
  j["model"] = model.name();
  j["n"] = model.n();
  j["hypotheses"] = detail::hypothesis_json(h);
  j["grid"] = {{"eps", c.grid.eps}, {"R", c.grid.R}, {"N", c.grid.N}};
  out.write_json("summary.json", j);
  log << "alpha = " << std::setprecision(12) << s.alpha << '\n';
  for (const auto& o : s.orders) log << "Omega_" << o.k << " = " << o.Omega << '\n';
  return exit_code::ok;
}

// Continuation sweep in descending q, then the exponential fit over [q_min, q_max].
inline int cmd_sweep_fit(const RunConfig& c, std::ostream& log) {
  const detail::OutputDir out(c);
  if (!out.prepare()) {
    log << "output directory not writable: " << c.output_dir << '\n';
    return exit_code::cant_create;
  }
  const auto model = c.build_model();
  const auto h = validate_hypotheses(model);
  if (!h.all_passed()) {
    detail::print_hypotheses(log, h);
    return exit_code::hypothesis;
  }
  auto qs = c.finiteq.q_list;
  std::sort(qs.begin(), qs.end(), std::greater<>());
  if (std::adjacent_find(qs.begin(), qs.end()) != qs.end()) throw ConfigError("finiteq.q_list has repeated values");

  const auto sweep = continuation_sweep(model, qs, detail::finite_q_options(c));
  out.write("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, sweep, out.comments()); });

  std::vector<SweepPoint> pts;
  std::vector<const FiniteQSolution*> used;
  for (const auto& e : sweep) {
    if (!e.solution) {
      log << "q = " << e.q << ": failed: " << e.error << '\n';
      continue;
    }
    const auto& s = *e.solution;
    log << "q = " << e.q << ": v_inf = " << std::setprecision(10) << s.v_inf.value << " R = " << s.R()
        << (s.tail_warning ? " (tail not settled)" : "") << (s.converged ? "" : " (not converged)") << '\n';
    if (!s.converged || e.q < c.fit.q_min || e.q > c.fit.q_max) continue;
    pts.push_back({e.q, s.v_inf.value});
    used.push_back(&s);
  }
  if (pts.size() < 4) {
    log << "only " << pts.size() << " converged points in the fit window; need 4\n";
    return exit_code::too_few_points;
  }
  std::optional<std::vector<double>> w;
  if (c.fit.weighted) w = detail::fit_weights(used);
  const auto fit = fit_exponential(pts, w);
  out.write("fit_report.csv", [&](std::ostream& os) { write_fit_report(os, fit, kReferenceB, out.comments()); });
  out.write("figure_data.dat", [&](std::ostream& os) { write_figure_data(os, pts, out.comments()); });
  out.write("figure.svg", [&](std::ostream& os) { detail::write_svg(os, pts, fit); });
  log << "B = " << std::setprecision(10) << fit.B << "  CI95 [" << fit.ci95_B[0] << ", " << fit.ci95_B[1]
      << "]  r^2 = " << fit.r_squared << '\n';
  return exit_code::ok;
}

inline int cmd_solve_one(const RunConfig& c, double q, std::ostream& log) {
  const detail::OutputDir out(c);
  if (!out.prepare()) {
    log << "output directory not writable: " << c.output_dir << '\n';
    return exit_code::cant_create;
  }
  const auto model = c.build_model();
  const auto h = validate_hypotheses(model);
  if (!h.all_passed()) {
    detail::print_hypotheses(log, h);
    return exit_code::hypothesis;
  }
  if (!(q > 0.0 && q <= 0.6)) throw ConfigError("--q must lie in (0, 0.6]");
  FiniteQSolution s;
  try {
    s = solve_bvp(model, q, detail::finite_q_options(c));
  } catch (const SolverError& e) {
    log << "solver failure: " << e.what() << '\n';
    out.write_json("diagnostics.json", detail::solver_failure_json(e));
    return exit_code::solver;
  } catch (const InvariantViolation& e) {
    log << "invariant violated: " << e.what() << '\n';
    out.write_json("diagnostics.json", detail::solver_failure_json(e));
    return exit_code::solver;
  }
  out.write("profile.csv", [&](std::ostream& os) { write_profile_csv(os, s, out.comments()); });
  out.write_json("solve_summary.json", {{"q", q},
                                        {"Omega", s.Omega},
                                        {"v_inf", s.v_inf.value},
                                        {"v_inf_uncertainty", s.v_inf.uncertainty},
                                        {"low_confidence", s.v_inf.low_confidence},
                                        {"f_inf", s.f_inf},
                                        {"R", s.R()},
                                        {"R_history", s.R_history},
                                        {"newton_iters", s.newton_iters},
                                        {"collocation_residual", s.collocation_residual},
                                        {"bc_res_max", s.bc_res_max()},
                                        {"tail_warning", s.tail_warning},
                                        {"converged", s.converged},
                                        {"message", s.message}});
  log << "q = " << q << ": v_inf = " << std::setprecision(12) << s.v_inf.value << " +- " << s.v_inf.uncertainty
      << "  Omega = " << s.Omega << "  R = " << s.R() << (s.tail_warning ? " (tail not settled)" : "") << '\n';
  if (!s.converged) {
    out.write_json("diagnostics.json", {{"error", "not converged"}, {"message", s.message}});
    return exit_code::solver;
  }
  return exit_code::ok;
}

}  // namespace spiralwave
