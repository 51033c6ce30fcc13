#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "spiralwave/collocation.hpp"
#include "spiralwave/errors.hpp"
#include "spiralwave/grid.hpp"
#include "spiralwave/jet.hpp"
#include "spiralwave/model.hpp"

namespace spiralwave {

struct LeadingOrder {
  GridFunction f0, f0p, f0pp;
  double alpha = 0.0;
  GridFunction v0, v0p, v0pp;
  double Omega0 = 0.0;
  double residual_norm = 0.0;
  int newton_iterations = 0;
};

namespace detail {

// f'' + f'/r - n^2 f/r^2 + F(f) = 0 as a first-order system in (f, f').
struct AmplitudeProblem {
  static constexpr int dim = 2, params = 0;
  const ModelFunctions* model;
  double n2, target_R, eps;

  void rhs(double r, const double* y, const double*, double* F) const {
    F[0] = y[1];
    F[1] = -y[1] / r + n2 * y[0] / (r * r) - F_deriv(*model, y[0], 0);
  }
  void jac(double r, const double* y, const double*, double* J, double*) const {
    J[0] = 0.0;
    J[1] = 1.0;
    J[2] = n2 / (r * r) - F_deriv(*model, y[0], 1);
    J[3] = -1.0 / r;
  }
  void bc(const double* ya, const double* yb, const double*, double* g) const {
    g[0] = std::sqrt(n2) * ya[0] - eps * ya[1];
    g[1] = yb[0] - target_R;
  }
  void bc_jac(const double*, const double*, const double*, double* Ga, double* Gb, double*) const {
    Ga[0] = std::sqrt(n2);
    Ga[1] = -eps;
    Ga[2] = Ga[3] = 0.0;
    Gb[0] = Gb[1] = Gb[3] = 0.0;
    Gb[2] = 1.0;
  }
};

}  // namespace detail

struct F0Options {
  double tol = 1e-10;
  double guess_scale = 1.0;  // multiplies the initial guess (uniqueness probes)
  int outer_terms = 4;       // terms of the far-field expansion used for f(R): 2, 3 or 4
};

// f0 = 1 - a/r^2 + b/r^4 + c/r^6 + O(r^-8) with a = n^2/d,
// b = (a(n^2 - 4) + F2 a^2/2)/d, c = (b(16 - n^2) - F2 a b - F3 a^3/6)/d, Fk = D^kF(1).
inline double f0_far_field(const ModelFunctions& model, double r, int terms) {
  const int n = model.n();
  const double d = model.d();
  const double F2 = F_deriv(model, 1.0, 2), F3 = F_deriv(model, 1.0, 3);
  const double a = n * n / d;
  const double b = (a * (n * n - 4.0) + 0.5 * F2 * a * a) / d;
  const double c = (b * (16.0 - n * n) - F2 * a * b - F3 * a * a * a / 6.0) / d;
  const double x = 1.0 / (r * r);
  double f = 1.0 - a * x;
  if (terms >= 3) f += b * x * x;
  if (terms >= 4) f += c * x * x * x;
  return f;
}

// f0 ~ alpha r^n at 0 and f0 ~ 1 - n^2/(d r^2) at infinity.
inline LeadingOrder solve_f0(const ModelFunctions& model, const GridPtr& grid, const F0Options& opt = {}) {
  const int n = model.n();
  const double d = model.d();
  detail::AmplitudeProblem pb{&model, double(n * n), f0_far_field(model, grid->R(), opt.outer_terms), grid->eps()};
  LobattoSolver<detail::AmplitudeProblem> solver(pb, grid->nodes());

  const int N = grid->size();
  Eigen::VectorXd z(2 * N);
  const double k = std::sqrt(d) / 2.0;
  for (int i = 0; i < N; ++i) {
    const double r = (*grid)[i];
    const double t = std::tanh(k * r);
    const double sech2 = 1.0 - t * t;
    z(2 * i) = opt.guess_scale * std::pow(t, n);
    z(2 * i + 1) = opt.guess_scale * (n == 0 ? 0.0 : n * std::pow(t, n - 1) * k * sech2);
  }
  CollocationOptions co;
  co.tol = opt.tol;
  const auto res = solver.solve(z, co);

  LeadingOrder lo;
  std::vector<double> f(static_cast<std::size_t>(N)), fp(static_cast<std::size_t>(N)), fpp(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const double r = (*grid)[i];
    f[static_cast<std::size_t>(i)] = res.y[static_cast<std::size_t>(2 * i)];
    fp[static_cast<std::size_t>(i)] = res.y[static_cast<std::size_t>(2 * i + 1)];
    const double fi = f[static_cast<std::size_t>(i)];
    fpp[static_cast<std::size_t>(i)] = -fp[static_cast<std::size_t>(i)] / r + n * n * fi / (r * r) - F_deriv(model, fi, 0);
  }
  lo.f0 = GridFunction(grid, std::move(f));
  lo.f0p = GridFunction(grid, std::move(fp));
  lo.f0pp = GridFunction(grid, std::move(fpp));
  lo.alpha = lo.f0[0] / std::pow(grid->eps(), n);
  lo.f0.with_origin(n, lo.alpha).with_tail(0.0);
  if (n >= 1) lo.f0p.with_origin(n - 1, n * lo.alpha);
  lo.f0p.with_tail(3.0);
  lo.residual_norm = res.residual;
  lo.newton_iterations = res.iterations;

  for (int i = 0; i < N; ++i) {
    if (!(lo.f0[i] > 0.0 && lo.f0[i] < 1.0))
      throw InvariantViolation("solve_f0: profile leaves (0,1) at r = " + std::to_string((*grid)[i]));
    if (i > 0 && !(lo.f0[i] > lo.f0[i - 1]))
      throw InvariantViolation("solve_f0: profile not increasing at r = " + std::to_string((*grid)[i]));
  }
  return lo;
}

// Omega0 = omega(1); v0 = (r f0^2)^{-1} int_0^r t f0^2 (omega(f0) - Omega0) dt.
inline void compute_v0(const ModelFunctions& model, LeadingOrder& lo) {
  const auto& grid = lo.f0.grid_ptr();
  const int N = grid->size();
  const int n = model.n();
  lo.Omega0 = model.omega(1.0, 0);
  for (int i = 0; i < N; ++i)
    if (!(lo.f0[i] > 0.0)) throw InvariantViolation("compute_v0: f0 must be positive");

  GridFunction psi = GridFunction::sample(grid, [](double) { return 0.0; });
  for (int i = 0; i < N; ++i) psi[i] = lo.f0[i] * lo.f0[i] * (model.omega(lo.f0[i], 0) - lo.Omega0);
  psi.with_origin(2 * n);
  const auto I = cumulative_integral_from_zero(psi, 1);

  lo.v0 = GridFunction(grid, 0.0);
  lo.v0p = GridFunction(grid, 0.0);
  lo.v0pp = GridFunction(grid, 0.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < N; ++i) {
    const double r = (*grid)[i];
    const double f = lo.f0[i];
    const double v = I[i] / (r * f * f);
    const double om[3] = {model.omega(f, 0), model.omega(f, 1), model.omega(f, 2)};
    const Jet fj{f, lo.f0p[i], lo.f0pp[i]};
    const Jet fpj{lo.f0p[i], lo.f0pp[i], nan};
    const Jet rj = Jet::variable(r);
    const double vp = -v / r - 2.0 * lo.f0p[i] * v / f - (lo.Omega0 - om[0]);
    const Jet vj{v, vp, nan};
    const Jet expr = -(vj / rj) - 2.0 * fpj * vj / fj + chain(om, fj) - Jet::constant(lo.Omega0);
    lo.v0[i] = v;
    lo.v0p[i] = vp;
    lo.v0pp[i] = expr.d1;
  }
  lo.v0.with_origin(1, (model.omega(0.0, 0) - lo.Omega0) / (2.0 * n + 2.0)).with_tail(1.0, 1);
  lo.v0p.with_origin(0).with_tail(2.0, 1);
  lo.v0pp.with_origin(1).with_tail(3.0, 1);
}

inline LeadingOrder solve_leading_order(const ModelFunctions& model, const GridPtr& grid, const F0Options& opt = {}) {
  auto lo = solve_f0(model, grid, opt);
  compute_v0(model, lo);
  return lo;
}

// Inequality 0 < r f0' <= n^2 f0; returns the worst value of r f0' - n^2 f0 (must be <= 0)
// and the smallest r f0'.
struct F0Bounds {
  double worst_upper = -std::numeric_limits<double>::infinity();
  double min_rfp = std::numeric_limits<double>::infinity();
};

inline F0Bounds check_f0_bounds(const LeadingOrder& lo, int n) {
  F0Bounds b;
  for (int i = 0; i < lo.f0.size(); ++i) {
    const double rfp = lo.f0.r(i) * lo.f0p[i];
    b.worst_upper = std::max(b.worst_upper, rfp - n * n * lo.f0[i]);
    b.min_rfp = std::min(b.min_rfp, rfp);
  }
  return b;
}

inline void write_leading_order_csv(std::ostream& os, const LeadingOrder& lo, const std::vector<std::string>& comments = {}) {
  write_csv(os, {"f0", "f0p", "v0", "v0p"}, {&lo.f0, &lo.f0p, &lo.v0, &lo.v0p}, comments);
}

inline std::string leading_order_summary(const LeadingOrder& lo) {
  std::ostringstream os;
  os << std::setprecision(17) << "alpha=" << lo.alpha << " Omega0=" << lo.Omega0 << " residual=" << lo.residual_norm;
  return os.str();
}

}  // namespace spiralwave
