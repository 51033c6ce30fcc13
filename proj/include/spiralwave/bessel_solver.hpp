#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "spiralwave/errors.hpp"
#include "spiralwave/grid.hpp"
#include "spiralwave/leading_order.hpp"
#include "spiralwave/model.hpp"
#include "spiralwave/specfun.hpp"

namespace spiralwave {

// Everything about the kernel operator that depends only on (model, f0, grid).
// Functions on the s grid share node indices with the r grid (s = sqrt(d) r).
struct KernelWorkspace {
  int n = 0;
  double d = 0.0, sqrt_d = 0.0;
  GridPtr r_grid, s_grid;
  std::vector<BesselQuad> node;  // scaled
  // Per interval: 4 Gauss points and the scaled I_n, K_n there.
  std::vector<std::array<double, 4>> gs, gI, gK;
  GridFunction w, h0, mu;
  GridFunction T_direct, T_of_h0;
  double contraction_bound = 0.0;
};

struct KernelOutput {
  GridFunction value, derivative;  // on the s grid
  double tail_error_bound = 0.0;
};

namespace detail {

inline constexpr std::array<double, 4> kGaussX = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                                  0.8611363115940526};
inline constexpr std::array<double, 4> kGaussW = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                                  0.3478548451374538};

}  // namespace detail

// T[psi](s) = K_n(s) int_0^s xi I_n psi + I_n(s) int_s^inf xi K_n psi, and its derivative.
// Both running integrals are kept in exponentially scaled form.
inline KernelOutput apply_T(const KernelWorkspace& ws, const GridFunction& psi) {
  if (!psi.origin()) throw MissingMetadata("apply_T: origin order of psi not set");
  if (!psi.tail()) throw MissingMetadata("apply_T: tail order of psi not set");
  const auto& s = *ws.s_grid;
  const int N = s.size();
  if (psi.size() != N) throw RangeError("apply_T: psi must live on the s grid");
  const int m = psi.origin()->m;
  const int n = ws.n;
  if (n + m + 2 <= 0) throw RangeError("apply_T: integral diverges at the origin");

  std::vector<double> hat(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) hat[static_cast<std::size_t>(i)] = psi[i] / std::pow(s[i], m);

  std::vector<double> A(static_cast<std::size_t>(N)), B(static_cast<std::size_t>(N));
  {
    const double s0 = s[0];
    const double p1 = (hat[1] - hat[0]) / (s[1] - s0);
    const double p0 = hat[0] - p1 * s0;
    const double a = n + m + 2;
    const double c = 1.0 / (4.0 * (n + 1));
    const double stub = (p0 * (std::pow(s0, a) / a + c * std::pow(s0, a + 2) / (a + 2)) +
                         p1 * (std::pow(s0, a + 1) / (a + 1) + c * std::pow(s0, a + 3) / (a + 3))) /
                        (std::pow(2.0, n) * detail::factorial(n));
    A[0] = std::exp(-s0) * stub;
  }
  const auto& nodes = s.nodes();
  auto psi_at = [&](int i, double x) {
    const int k = std::clamp(i - 1, 0, N - 4);
    return std::pow(x, m) * detail::lagrange4(&nodes[static_cast<std::size_t>(k)], &hat[static_cast<std::size_t>(k)], x);
  };
  std::vector<std::array<double, 4>> gpsi(static_cast<std::size_t>(N - 1));
  for (int i = 0; i + 1 < N; ++i)
    for (int q = 0; q < 4; ++q) gpsi[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] = psi_at(i, ws.gs[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)]);

  for (int i = 0; i + 1 < N; ++i) {
    const double h = s[i + 1] - s[i];
    double acc = 0.0;
    for (std::size_t q = 0; q < 4; ++q) {
      const double x = ws.gs[static_cast<std::size_t>(i)][q];
      acc += detail::kGaussW[q] * std::exp(x - s[i + 1]) * x * ws.gI[static_cast<std::size_t>(i)][q] * gpsi[static_cast<std::size_t>(i)][q];
    }
    A[static_cast<std::size_t>(i + 1)] = std::exp(-h) * A[static_cast<std::size_t>(i)] + 0.5 * h * acc;
  }

  // Beyond S the integrand is G(xi) e^{-xi} with G = xi K~ psi algebraic, so repeated integration
  // by parts gives e^{S} int_S^inf = G + G' + G'' + ...; G', G'' from one-sided differences and the
  // rest from G ~ xi^a with a = 1/2 - l + j/log S.
  KernelOutput out;
  {
    const double S = s[N - 1];
    auto G_at = [&](int i) { return s[i] * ws.node[static_cast<std::size_t>(i)].K * psi[i]; };
    std::array<double, 5> x{}, y{};
    for (int k = 0; k < 5; ++k) {
      x[static_cast<std::size_t>(k)] = s[N - 5 + k];
      y[static_cast<std::size_t>(k)] = G_at(N - 5 + k);
    }
    const auto wts = detail::fornberg<5>(S, x);
    double G1 = 0.0, G2 = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      G1 += wts[1][k] * y[k];
      G2 += wts[2][k] * y[k];
    }
    const double G = y[4];
    const double at = 0.5 - psi.tail()->l + psi.tail()->j / std::log(S);
    double term = G2, sum = G + G1 + G2;
    for (int k = 2; k < 5; ++k) {
      term *= (at - k) / S;
      sum += term;
    }
    B[static_cast<std::size_t>(N - 1)] = sum;
    out.tail_error_bound = std::abs(term * (at - 5) / S) * ws.node[static_cast<std::size_t>(N - 1)].I;
  }
  for (int i = N - 2; i >= 0; --i) {
    const double h = s[i + 1] - s[i];
    double acc = 0.0;
    for (std::size_t q = 0; q < 4; ++q) {
      const double x = ws.gs[static_cast<std::size_t>(i)][q];
      acc += detail::kGaussW[q] * std::exp(s[i] - x) * x * ws.gK[static_cast<std::size_t>(i)][q] * gpsi[static_cast<std::size_t>(i)][q];
    }
    B[static_cast<std::size_t>(i)] = std::exp(-h) * B[static_cast<std::size_t>(i + 1)] + 0.5 * h * acc;
  }

  out.value = GridFunction(ws.s_grid, 0.0);
  out.derivative = GridFunction(ws.s_grid, 0.0);
  for (int i = 0; i < N; ++i) {
    const auto& b = ws.node[static_cast<std::size_t>(i)];
    out.value[i] = b.K * A[static_cast<std::size_t>(i)] + b.I * B[static_cast<std::size_t>(i)];
    out.derivative[i] = b.Kprime * A[static_cast<std::size_t>(i)] + b.Iprime * B[static_cast<std::size_t>(i)];
  }
  const int mo = (m < n - 1) ? m + 2 : n;
  out.value.with_origin(mo).with_tail(psi.tail()->l, psi.tail()->j);
  out.derivative.with_origin(mo - 1).with_tail(psi.tail()->l, psi.tail()->j);
  return out;
}

// sup |psi / w| over the nodes.
inline double weighted_norm(const KernelWorkspace& ws, const GridFunction& psi) {
  double best = 0.0;
  for (int i = 0; i < psi.size(); ++i) best = std::max(best, std::abs(psi[i] / ws.w[i]));
  return best;
}

inline KernelWorkspace build_kernel_workspace(const ModelFunctions& model, const LeadingOrder& lo) {
  KernelWorkspace ws;
  ws.n = model.n();
  ws.d = model.d();
  ws.sqrt_d = std::sqrt(ws.d);
  ws.r_grid = lo.f0.grid_ptr();
  ws.s_grid = scale_grid(*ws.r_grid, ws.sqrt_d);
  const auto& s = *ws.s_grid;
  const int N = s.size();
  const int n = ws.n;

  ws.node.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) ws.node.push_back(bessel_quad(n, s[i], true));
  ws.gs.resize(static_cast<std::size_t>(N - 1));
  ws.gI.resize(static_cast<std::size_t>(N - 1));
  ws.gK.resize(static_cast<std::size_t>(N - 1));
  for (int i = 0; i + 1 < N; ++i) {
    const double mid = 0.5 * (s[i] + s[i + 1]), half = 0.5 * (s[i + 1] - s[i]);
    for (std::size_t q = 0; q < 4; ++q) {
      const double x = mid + half * detail::kGaussX[q];
      const auto b = bessel_quad(n, x, true);
      ws.gs[static_cast<std::size_t>(i)][q] = x;
      ws.gI[static_cast<std::size_t>(i)][q] = b.I;
      ws.gK[static_cast<std::size_t>(i)][q] = b.K;
    }
  }

  ws.w = GridFunction(ws.s_grid, lo.f0p.values());
  ws.w.with_origin(std::max(n - 1, 0)).with_tail(3.0);
  ws.h0 = GridFunction(ws.s_grid, 0.0);
  ws.mu = GridFunction(ws.s_grid, 0.0);
  for (int i = 0; i < N; ++i) {
    const double r = lo.f0.r(i);
    ws.h0[i] = ws.sqrt_d / std::pow(s[i], 3) * (2.0 * n * n * lo.f0[i] - r * lo.f0p[i]);
    ws.mu[i] = F_deriv(model, lo.f0[i], 1) / ws.d + 1.0;
  }
  ws.h0.with_origin(n - 3).with_tail(3.0);
  ws.mu.with_origin(0).with_tail(2.0);

  GridFunction muw = ws.mu * ws.w;
  muw.with_origin(std::max(n - 1, 0)).with_tail(5.0);
  ws.T_direct = apply_T(ws, muw).value;
  ws.T_of_h0 = apply_T(ws, ws.h0).value;
  double bound = 0.0;
  for (int i = 0; i < N; ++i) bound = std::max(bound, ws.T_direct[i] / ws.w[i]);
  ws.contraction_bound = bound;
  return ws;
}

// Remainder map F[psi] = T[mu psi] for psi in the weighted space (origin n-1, tail 3).
inline GridFunction apply_F(const KernelWorkspace& ws, const GridFunction& psi) {
  GridFunction p = ws.mu * psi;
  p.with_origin(std::max(ws.n - 1, 0)).with_tail(5.0);
  return apply_T(ws, p).value;
}

// E[h] = h'' + h'/r - n^2 h/r^2 + [DF(f0) + d] h on the r grid.
inline GridFunction apply_E(const GridFunction& h, const GridFunction& hp, const GridFunction& hpp,
                            const ModelFunctions& model, const LeadingOrder& lo) {
  const int n = model.n();
  const double d = model.d();
  GridFunction out(h.grid_ptr(), 0.0);
  for (int i = 0; i < h.size(); ++i) {
    const double r = h.r(i);
    out[i] = hpp[i] + hp[i] / r - n * n * h[i] / (r * r) + (F_deriv(model, lo.f0[i], 1) + d) * h[i];
  }
  return out;
}

struct LinearSolveOptions {
  double tol = 1e-11;  // on the w-norm of the last update, relative to max(1, first iterate)
  int max_iterations = 2000;
};

struct LinearSolveResult {
  GridFunction g, gp, gpp;  // on the r grid
  GridFunction delta_g;     // on the s grid
  int iterations = 0;
  double final_update_wnorm = 0.0;
  std::vector<double> update_history;
  double tail_error_bound = 0.0;
  bool hypothesis_ok = true;
  OrderEstimate E_order;
};

// Bounded solution of g'' + g'/r - n^2 g/r^2 + DF(f0) g = h, g(0) = 0, through the fixed point
// dg = T[mu dg - E~[h~]] in s = sqrt(d) r with g~ = -h~ + dg. (Substituting g~ = -h~ + dg gives
// L[dg] = E~[h~] - mu dg, and L[T psi] = -psi.)
inline LinearSolveResult solve_linear_bvp(const KernelWorkspace& ws, const ModelFunctions& model,
                                          const LeadingOrder& lo, const GridFunction& h, const GridFunction& hp,
                                          const GridFunction& hpp, const LinearSolveOptions& opt = {}) {
  if (!(ws.contraction_bound < 1.0))
    throw Error("solve_linear_bvp: kernel map is not contractive (bound " + std::to_string(ws.contraction_bound) + ")");
  const int n = ws.n;
  const double d = ws.d;
  const int N = ws.s_grid->size();
  LinearSolveResult res;

  const GridFunction E = apply_E(h, hp, hpp, model, lo);
  if (E.max_abs() > 0.0) {
    res.E_order = estimate_order(E);
    const bool origin_ok = res.E_order.origin_indeterminate || res.E_order.m_hat >= n - 1 - 0.3;
    const bool tail_ok = res.E_order.tail_indeterminate || res.E_order.l_hat >= 3.0 - 0.3;
    res.hypothesis_ok = origin_ok && tail_ok;
  }

  GridFunction phi(ws.s_grid, E.values());
  phi *= 1.0 / (d * d);
  const int m_psi = n - 1;

  GridFunction dg(ws.s_grid, 0.0), dgp(ws.s_grid, 0.0);
  double scale = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    GridFunction psi = ws.mu * dg - phi;
    psi.with_origin(m_psi).with_tail(3.0);
    auto out = apply_T(ws, psi);
    GridFunction diff = out.value - dg;
    const double upd = weighted_norm(ws, diff);
    res.update_history.push_back(upd);
    dg = std::move(out.value);
    dgp = std::move(out.derivative);
    res.tail_error_bound = out.tail_error_bound;
    res.iterations = it + 1;
    if (it == 0) scale = std::max(1.0, weighted_norm(ws, dg));
    res.final_update_wnorm = upd;
    if (upd <= opt.tol * scale) break;
    // Rounding floor: the w-norm divides by w ~ r^-3, so updates stop shrinking around 1e-12.
    const auto& hist = res.update_history;
    if (hist.size() > 8 && *std::min_element(hist.end() - 8, hist.end()) >= hist[hist.size() - 9]) break;
  }
  if (!(res.final_update_wnorm <= opt.tol * scale))
    throw SolverError("solve_linear_bvp: fixed point not reached", res.update_history);

  res.delta_g = dg;
  res.delta_g.with_origin(n).with_tail(3.0);
  res.g = GridFunction(ws.r_grid, 0.0);
  res.gp = GridFunction(ws.r_grid, 0.0);
  res.gpp = GridFunction(ws.r_grid, 0.0);
  for (int i = 0; i < N; ++i) {
    const double r = h.r(i);
    const double g = -h[i] / d + dg[i];
    const double gp = -hp[i] / d + ws.sqrt_d * dgp[i];
    res.g[i] = g;
    res.gp[i] = gp;
    res.gpp[i] = h[i] - gp / r + n * n * g / (r * r) - F_deriv(model, lo.f0[i], 1) * g;
  }
  res.g.with_origin(n);
  if (n >= 1) res.gp.with_origin(n - 1);
  return res;
}

struct TIdentityReport {
  double sup_weighted_error = 0.0;
  double ratio_at_origin = 0.0;  // T[h0]/w at the first node
  double ratio_at_end = 0.0;     // T[h0]/w at the last node
  double contraction_bound = 0.0;
  GridFunction w_minus_Th0;
};

// T computed directly as T[mu w] and as w - T[h0].
inline TIdentityReport verify_T_identity(const KernelWorkspace& ws) {
  TIdentityReport rep;
  rep.w_minus_Th0 = ws.w - ws.T_of_h0;
  const int N = ws.w.size();
  for (int i = 0; i < N; ++i)
    rep.sup_weighted_error = std::max(rep.sup_weighted_error, std::abs(ws.T_direct[i] - rep.w_minus_Th0[i]) / ws.w[i]);
  rep.ratio_at_origin = ws.T_of_h0[0] / ws.w[0];
  rep.ratio_at_end = ws.T_of_h0[N - 1] / ws.w[N - 1];
  rep.contraction_bound = ws.contraction_bound;
  return rep;
}

inline void write_kernel_diagnostics(std::ostream& os, const KernelWorkspace& ws, const std::vector<std::string>& comments = {}) {
  const auto rep = verify_T_identity(ws);
  GridFunction ratio(ws.s_grid, 0.0);
  for (int i = 0; i < ratio.size(); ++i) ratio[i] = ws.T_direct[i] / ws.w[i];
  GridFunction s_col = GridFunction::sample(ws.s_grid, [](double x) { return x; });
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "s,w,h0,T_direct,w_minus_Th0,ratio\n" << std::setprecision(17);
  for (int i = 0; i < ratio.size(); ++i)
    os << s_col[i] << ',' << ws.w[i] << ',' << ws.h0[i] << ',' << ws.T_direct[i] << ',' << rep.w_minus_Th0[i] << ','
       << ratio[i] << '\n';
}

}  // namespace spiralwave
