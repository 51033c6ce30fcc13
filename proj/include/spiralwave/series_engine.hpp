#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spiralwave/bessel_solver.hpp"
#include "spiralwave/errors.hpp"
#include "spiralwave/grid.hpp"
#include "spiralwave/jet.hpp"
#include "spiralwave/leading_order.hpp"
#include "spiralwave/model.hpp"

namespace spiralwave {

// One order of f = sum f_k q^{2k}, v = q sum v_k q^{2k}, Omega = sum Omega_k q^{2k}.
struct SeriesOrder {
  int k = 0;
  GridFunction f, fp, fpp;
  GridFunction v, vp, vpp;
  double Omega = 0.0;
  // Sources of the order-k problems (empty for k = 0); c carries c' alongside.
  GridFunction b, bp, bpp, c, cp;
  double omega_fit_residual = 0.0;
  double omega_tolerance = 0.0;
  OrderEstimate f_order, v_order;
  int kernel_iterations = 0;
  double kernel_tail_bound = 0.0;
  bool hypothesis_ok = true;
};

struct SeriesSolution {
  int K = 0;
  double alpha = 0.0;
  double contraction_bound = 0.0;
  std::vector<SeriesOrder> orders;

  std::vector<double> Omega() const {
    std::vector<double> out;
    for (const auto& o : orders) out.push_back(o.Omega);
    return out;
  }
};

struct SeriesOptions {
  int K = 3;
  double omega_tol = 1e-6;     // scaled by max(1, |c_k|_inf)
  bool enforce_omega = true;   // throw TheoremViolation when |Omega_k| exceeds it
  double omega_window = 5.0;  // Omega_k is fitted on [R / omega_window, R]
  LinearSolveOptions kernel;
  F0Options f0;
};

namespace detail {

inline Jet f_jet(const SeriesOrder& o, int i) { return {o.f[i], o.fp[i], o.fpp[i]}; }
inline Jet fp_jet(const SeriesOrder& o, int i) {
  return {o.fp[i], o.fpp[i], std::numeric_limits<double>::quiet_NaN()};
}
inline Jet v_jet(const SeriesOrder& o, int i) { return {o.v[i], o.vp[i], o.vpp[i]}; }
inline Jet vp_jet(const SeriesOrder& o, int i) {
  return {o.vp[i], o.vpp[i], std::numeric_limits<double>::quiet_NaN()};
}

inline std::vector<double> omega_tilde_derivs(const ModelFunctions& model, double x, int max_order) {
  return detail::times_x_derivs([&](double t, int m) { return model.omega(t, m); }, x, max_order);
}

}  // namespace detail

// b_k = -[F(f)]_k with f_k left out, plus [f (sum v_i eps^i)^2]_{k-1}. Value and both
// derivatives come from Jet arithmetic on the stored derivative fields.
inline std::array<GridFunction, 3> build_bk(const ModelFunctions& model, const std::vector<SeriesOrder>& s, int k) {
  if (k < 1 || static_cast<int>(s.size()) < k) throw RangeError("build_bk: orders 0..k-1 required");
  const auto& grid = s[0].f.grid_ptr();
  const int N = grid->size();
  std::array<GridFunction, 3> out{GridFunction(grid, 0.0), GridFunction(grid, 0.0), GridFunction(grid, 0.0)};
  for (int i = 0; i < N; ++i) {
    const Jet f0 = detail::f_jet(s[0], i);
    const auto Fj = derivative_jets(eval_F_derivs(model, s[0].f[i], k + 2), f0, k);
    JetSeries delta(static_cast<std::size_t>(k + 1));
    for (int j = 1; j < k; ++j) delta[static_cast<std::size_t>(j)] = detail::f_jet(s[static_cast<std::size_t>(j)], i);
    const Jet Fk = compose(Fj, delta, k)[static_cast<std::size_t>(k)];

    JetSeries fs(static_cast<std::size_t>(k)), vs(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      fs[static_cast<std::size_t>(j)] = detail::f_jet(s[static_cast<std::size_t>(j)], i);
      vs[static_cast<std::size_t>(j)] = detail::v_jet(s[static_cast<std::size_t>(j)], i);
    }
    const Jet fU = series_mul(fs, series_mul(vs, vs, k - 1), k - 1)[static_cast<std::size_t>(k - 1)];
    const Jet b = fU - Fk;
    out[0][i] = b.v;
    out[1][i] = b.d1;
    out[2][i] = b.d2;
  }
  return out;
}

// c_k = -sum_{i<k} [f_{k-i}(v_i' + v_i/r) + 2 f_{k-i}' v_i + f_{k-i} Omega_i] + [omega~(f)]_k.
// Needs f_k (it enters through the omega~ composition). Returns c and c'.
inline std::array<GridFunction, 2> build_ck(const ModelFunctions& model, const std::vector<SeriesOrder>& s,
                                            const SeriesOrder& fk, int k) {
  if (k < 1 || static_cast<int>(s.size()) < k) throw RangeError("build_ck: orders 0..k-1 required");
  const auto& grid = s[0].f.grid_ptr();
  const int N = grid->size();
  std::array<GridFunction, 2> out{GridFunction(grid, 0.0), GridFunction(grid, 0.0)};
  auto order = [&](int j) -> const SeriesOrder& { return j == k ? fk : s[static_cast<std::size_t>(j)]; };
  for (int i = 0; i < N; ++i) {
    const Jet r = Jet::variable(grid->nodes()[static_cast<std::size_t>(i)]);
    const Jet f0 = detail::f_jet(s[0], i);
    const auto Wj = derivative_jets(detail::omega_tilde_derivs(model, s[0].f[i], k + 2), f0, k);
    JetSeries delta(static_cast<std::size_t>(k + 1));
    for (int j = 1; j <= k; ++j) delta[static_cast<std::size_t>(j)] = detail::f_jet(order(j), i);
    Jet c = compose(Wj, delta, k)[static_cast<std::size_t>(k)];
    for (int j = 0; j < k; ++j) {
      const auto& oj = s[static_cast<std::size_t>(j)];
      const Jet fkj = detail::f_jet(order(k - j), i);
      const Jet vj = detail::v_jet(oj, i);
      c -= fkj * (detail::vp_jet(oj, i) + vj / r) + 2.0 * detail::fp_jet(order(k - j), i) * vj + fkj * oj.Omega;
    }
    out[0][i] = c.v;
    out[1][i] = c.d1;
  }
  return out;
}

struct OmegaFit {
  double Omega = 0.0;
  double rms_residual = 0.0;
};

// Limit of c_k/f0 from a least-squares fit on [R/window, R] with basis
// {1, r^-2 log^j r, r^-4 log^j r (j = 0..2k)}.
inline OmegaFit fit_Omega(const GridFunction& c, const GridFunction& f0, int k, double window = 5.0) {
  GridFunction ratio(c.grid_ptr(), 0.0);
  for (int i = 0; i < c.size(); ++i) ratio[i] = c[i] / f0[i];
  std::vector<std::function<double(double)>> basis{[](double) { return 1.0; }};
  for (int p : {2, 4})
    for (int j = 0; j <= 2 * k; ++j) basis.push_back([j, p](double r) { return std::pow(std::log(r), j) / std::pow(r, p); });
  const double R = c.grid().R();
  const auto fit = least_squares_window(ratio, R / window, R, basis);
  return {fit.coefficients[0], fit.rms_residual};
}

// v_k = (r f0^2)^{-1} int_0^r t f0 (c_k - f0 Omega_k); v_k' from the order-k phase equation,
// v_k'' by differentiating that relation.
inline void phase_from_source(const SeriesOrder& o0, SeriesOrder& ok, int n) {
  const auto& grid = o0.f.grid_ptr();
  const int N = grid->size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  GridFunction psi(grid, 0.0);
  for (int i = 0; i < N; ++i) psi[i] = o0.f[i] * (ok.c[i] - o0.f[i] * ok.Omega);
  psi.with_origin(2 * n);
  const auto I = cumulative_integral_from_zero(psi, 1);
  ok.v = GridFunction(grid, 0.0);
  ok.vp = GridFunction(grid, 0.0);
  ok.vpp = GridFunction(grid, 0.0);
  for (int i = 0; i < N; ++i) {
    const double r = (*grid)[i];
    const double f = o0.f[i];
    const double v = I[i] / (r * f * f);
    const double vp = (ok.c[i] - f * ok.Omega) / f - v / r - 2.0 * o0.fp[i] * v / f;
    const Jet fj = detail::f_jet(o0, i);
    const Jet vj{v, vp, nan};
    const Jet cj{ok.c[i], ok.cp[i], nan};
    const Jet expr = (cj - fj * ok.Omega) / fj - vj / Jet::variable(r) - 2.0 * detail::fp_jet(o0, i) * vj / fj;
    ok.v[i] = v;
    ok.vp[i] = vp;
    ok.vpp[i] = expr.d1;
  }
}

inline SeriesOrder leading_as_order(const LeadingOrder& lo) {
  SeriesOrder o;
  o.k = 0;
  o.f = lo.f0;
  o.fp = lo.f0p;
  o.fpp = lo.f0pp;
  o.v = lo.v0;
  o.vp = lo.v0p;
  o.vpp = lo.v0pp;
  o.Omega = lo.Omega0;
  return o;
}

// Order k from orders 0..k-1.
inline SeriesOrder solve_order_k(const ModelFunctions& model, const LeadingOrder& lo, const KernelWorkspace& ws,
                                 const std::vector<SeriesOrder>& s, int k, const SeriesOptions& opt = {}) {
  const int n = model.n();
  SeriesOrder ok;
  ok.k = k;
  auto [b, bp, bpp] = build_bk(model, s, k);
  const auto lin = solve_linear_bvp(ws, model, lo, b, bp, bpp, opt.kernel);
  ok.b = std::move(b);
  ok.bp = std::move(bp);
  ok.bpp = std::move(bpp);
  ok.f = lin.g;
  ok.fp = lin.gp;
  ok.fpp = lin.gpp;
  ok.kernel_iterations = lin.iterations;
  ok.kernel_tail_bound = lin.tail_error_bound;
  ok.hypothesis_ok = lin.hypothesis_ok;

  auto [c, cp] = build_ck(model, s, ok, k);
  ok.c = std::move(c);
  ok.cp = std::move(cp);
  const auto fit = fit_Omega(ok.c, lo.f0, k, opt.omega_window);
  ok.Omega = fit.Omega;
  ok.omega_fit_residual = fit.rms_residual;
  ok.omega_tolerance = opt.omega_tol * std::max(1.0, ok.c.max_abs());
  if (opt.enforce_omega && !(std::abs(ok.Omega) <= ok.omega_tolerance))
    throw TheoremViolation("Omega_" + std::to_string(k) + " = " + std::to_string(ok.Omega) +
                               " exceeds tolerance (fit rms " + std::to_string(fit.rms_residual) +
                               "; try a larger R if the fit residual is large)",
                           k, ok.Omega, ok.omega_tolerance);

  phase_from_source(s[0], ok, n);

  ok.f.with_origin(n).with_tail(2.0, 2 * k);
  if (n >= 1) ok.fp.with_origin(n - 1);
  ok.v.with_origin(1).with_tail(1.0, 2 * k + 1);
  OrderOptions oo;
  oo.j_max = std::max(8, 2 * k + 3);
  ok.f_order = estimate_order(ok.f, oo);
  ok.v_order = estimate_order(ok.v, oo);
  return ok;
}

inline SeriesSolution run_series(const ModelFunctions& model, const GridPtr& grid, const SeriesOptions& opt = {}) {
  if (opt.K < 0) throw RangeError("run_series: K must be non-negative");
  const auto hyp = validate_hypotheses(model);
  if (!hyp.all_passed()) throw InvariantViolation("run_series: model '" + model.name() + "' fails the hypothesis checks");
  const auto lo = solve_leading_order(model, grid, opt.f0);
  SeriesSolution sol;
  sol.K = opt.K;
  sol.alpha = lo.alpha;
  sol.orders.push_back(leading_as_order(lo));
  OrderOptions oo;
  sol.orders[0].f_order = estimate_order(lo.f0, oo);
  sol.orders[0].v_order = estimate_order(lo.v0, oo);
  if (opt.K == 0) return sol;
  const auto ws = build_kernel_workspace(model, lo);
  sol.contraction_bound = ws.contraction_bound;
  for (int k = 1; k <= opt.K; ++k) sol.orders.push_back(solve_order_k(model, lo, ws, sol.orders, k, opt));
  return sol;
}

struct ResidualCheck {
  double q1 = 0.0, q2 = 0.0;
  double amplitude_q1 = 0.0, amplitude_q2 = 0.0, amplitude_ratio = 0.0;
  double phase_q1 = 0.0, phase_q2 = 0.0, phase_ratio = 0.0;
  double expected_amplitude_ratio = 0.0, expected_phase_ratio = 0.0;
};

// Sup-norm residuals of f'' + f'/r - n^2 f/r^2 + F(f) - f v^2 and f(v' + v/r) + 2 f'v + q(f Omega - omega~(f))
// for the truncated sums.
inline std::array<double, 2> truncated_residuals(const ModelFunctions& model, const SeriesSolution& s, double q) {
  const auto& o0 = s.orders[0];
  const int N = o0.f.size();
  const int n = model.n();
  const double e = q * q;
  double Om = 0.0;
  for (int k = static_cast<int>(s.orders.size()) - 1; k >= 0; --k) Om = Om * e + s.orders[static_cast<std::size_t>(k)].Omega;
  double amp = 0.0, ph = 0.0;
  for (int i = 0; i < N; ++i) {
    const double r = o0.f.r(i);
    double f = 0.0, fp = 0.0, fpp = 0.0, v = 0.0, vp = 0.0;
    for (int k = static_cast<int>(s.orders.size()) - 1; k >= 0; --k) {
      const auto& o = s.orders[static_cast<std::size_t>(k)];
      f = f * e + o.f[i];
      fp = fp * e + o.fp[i];
      fpp = fpp * e + o.fpp[i];
      v = v * e + o.v[i];
      vp = vp * e + o.vp[i];
    }
    v *= q;
    vp *= q;
    const double a = fpp + fp / r - n * n * f / (r * r) + F_deriv(model, f, 0) - f * v * v;
    const double p = f * (vp + v / r) + 2.0 * fp * v + q * (f * Om - omega_tilde_deriv(model, f, 0));
    amp = std::max(amp, std::abs(a));
    ph = std::max(ph, std::abs(p));
  }
  return {amp, ph};
}

inline ResidualCheck residual_order_check(const ModelFunctions& model, const SeriesSolution& s, double q1, double q2) {
  ResidualCheck rc;
  rc.q1 = q1;
  rc.q2 = q2;
  const auto a = truncated_residuals(model, s, q1), b = truncated_residuals(model, s, q2);
  rc.amplitude_q1 = a[0];
  rc.amplitude_q2 = b[0];
  rc.phase_q1 = a[1];
  rc.phase_q2 = b[1];
  rc.amplitude_ratio = a[0] / b[0];
  rc.phase_ratio = a[1] / b[1];
  const double x = q1 / q2;
  rc.expected_amplitude_ratio = std::pow(x, 2 * s.K + 2);
  rc.expected_phase_ratio = std::pow(x, 2 * s.K + 3);
  return rc;
}

inline void write_order_csv(std::ostream& os, const SeriesOrder& o, const std::vector<std::string>& comments = {}) {
  write_csv(os, {"f" + std::to_string(o.k), "f" + std::to_string(o.k) + "p", "v" + std::to_string(o.k),
                 "v" + std::to_string(o.k) + "p"},
            {&o.f, &o.fp, &o.v, &o.vp}, comments);
}

inline nlohmann::json order_estimate_json(const OrderEstimate& e) {
  return {{"m_hat", e.m_hat},       {"origin_indeterminate", e.origin_indeterminate},
          {"l_hat", e.l_hat},       {"j_hat", e.j_hat},
          {"tail_residual", e.tail_residual}, {"tail_indeterminate", e.tail_indeterminate}};
}

inline nlohmann::json series_summary(const SeriesSolution& s, const ResidualCheck* rc = nullptr) {
  nlohmann::json j;
  j["K"] = s.K;
  j["alpha"] = s.alpha;
  j["contraction_bound"] = s.contraction_bound;
  auto& orders = j["orders"] = nlohmann::json::array();
  for (const auto& o : s.orders) {
    orders.push_back({{"k", o.k},
                      {"Omega_k", o.Omega},
                      {"c_max", o.c.size() ? o.c.max_abs() : 0.0},
                      {"omega_tolerance", o.omega_tolerance},
                      {"omega_fit_residual", o.omega_fit_residual},
                      {"kernel_iterations", o.kernel_iterations},
                      {"f_order", order_estimate_json(o.f_order)},
                      {"v_order", order_estimate_json(o.v_order)}});
  }
  if (rc) {
    j["residual_ratios"] = {{"q", {rc->q1, rc->q2}},
                            {"amplitude", {rc->amplitude_q1, rc->amplitude_q2}},
                            {"amplitude_ratio", rc->amplitude_ratio},
                            {"expected_amplitude_ratio", rc->expected_amplitude_ratio},
                            {"phase", {rc->phase_q1, rc->phase_q2}},
                            {"phase_ratio", rc->phase_ratio},
                            {"expected_phase_ratio", rc->expected_phase_ratio}};
  }
  return j;
}

}  // namespace spiralwave
