#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spiralwave/collocation.hpp"
#include "spiralwave/errors.hpp"
#include "spiralwave/grid.hpp"
#include "spiralwave/leading_order.hpp"
#include "spiralwave/model.hpp"
#include "spiralwave/series_engine.hpp"

namespace spiralwave {

// How the two outer conditions are closed at r = R.
//   asymptotic:     lambda(f(R)) = v(R)^2 and Omega = omega(f(R)), the r -> inf identities.
//   series_matched: lambda(f(R)) - v(R)^2 = lambda(f0_far(R)) and Omega = omega(1), which is what the
//                   truncated series imposes on a finite domain. Only meaningful for small q.
enum class OuterClosure { asymptotic, series_matched };

struct FiniteQOptions {
  double eps = 1e-3;
  double R = 0.0;                 // starting radius; 0 means max(100, 12/q)
  int N = 4000;
  Stretch stretch{1.0, 30.0};
  bool adaptive_R = true;         // double R until the far field is reached
  double R_max = 51200.0;
  double far_field_x = 10.0;      // stop once 2 q v(R) R exceeds this ...
  double v_rel_change = 1e-4;     // ... and v(R) moved by less than this under the last doubling
  int nodes_per_doubling = 250;
  double tol = 1e-9;              // collocation residual; the rounding floor near eps is ~1e-10
  double bc_tol = 1e-8;
  bool stub_inner_bc = true;      // false: v(eps) = 0
  OuterClosure closure = OuterClosure::asymptotic;
  int warm_series_K = 1;
};

struct VInf {
  double value = std::numeric_limits<double>::quiet_NaN();
  double uncertainty = std::numeric_limits<double>::quiet_NaN();
  bool low_confidence = false;
};

struct FiniteQSolution {
  double q = 0.0;
  GridFunction f, fp, v;
  double Omega = 0.0;
  VInf v_inf;
  double f_inf = 0.0;
  int newton_iters = 0;
  double collocation_residual = 0.0;
  std::array<double, 4> bc_residuals{};
  std::vector<double> R_history;
  double v_prev = std::numeric_limits<double>::quiet_NaN();  // v(R) on the previous radius
  double tail_fit = std::numeric_limits<double>::quiet_NaN();  // Richardson estimate from the profile
  bool tail_warning = false;
  bool converged = false;
  std::string message;

  const RadialGrid& mesh() const { return f.grid(); }
  double R() const { return f.grid().R(); }
  double bc_res_max() const {
    double m = 0.0;
    for (double b : bc_residuals) m = std::max(m, std::abs(b));
    return m;
  }
};

namespace detail {

struct FullProblem {
  static constexpr int dim = 3, params = 1;
  const ModelFunctions* model;
  double q, n2, eps, R;
  bool stub;
  OuterClosure closure;
  double lambda_shift = 0.0;  // lambda(f0_far(R)) for the matched closure

  void rhs(double r, const double* y, const double* p, double* F) const {
    const double f = y[0], fp = y[1], v = y[2];
    F[0] = fp;
    F[1] = -fp / r + n2 * f / (r * r) - F_deriv(*model, f, 0) + f * v * v;
    F[2] = -v / r - 2.0 * fp * v / f - q * (p[0] - model->omega(f, 0));
  }
  void jac(double r, const double* y, const double*, double* J, double* Jp) const {
    const double f = y[0], fp = y[1], v = y[2];
    J[0] = 0.0;
    J[1] = 1.0;
    J[2] = 0.0;
    J[3] = n2 / (r * r) - F_deriv(*model, f, 1) + v * v;
    J[4] = -1.0 / r;
    J[5] = 2.0 * f * v;
    J[6] = 2.0 * fp * v / (f * f) + q * model->omega(f, 1);
    J[7] = -2.0 * v / f;
    J[8] = -1.0 / r - 2.0 * fp / f;
    Jp[0] = 0.0;
    Jp[1] = 0.0;
    Jp[2] = -q;
  }
  double stub_coeff() const { return stub ? q * eps / (2.0 * std::sqrt(n2) + 2.0) : 0.0; }
  void bc(const double* ya, const double* yb, const double* p, double* g) const {
    const double Om = p[0];
    g[0] = std::sqrt(n2) * ya[0] - eps * ya[1];
    g[1] = ya[2] - stub_coeff() * (model->omega(0.0, 0) - Om);
    g[2] = model->lambda(yb[0], 0) - yb[2] * yb[2] - lambda_shift;
    g[3] = closure == OuterClosure::asymptotic ? Om - model->omega(yb[0], 0) : Om - model->omega(1.0, 0);
  }
  void bc_jac(const double*, const double* yb, const double*, double* Ga, double* Gb, double* Gp) const {
    std::fill(Ga, Ga + 12, 0.0);
    std::fill(Gb, Gb + 12, 0.0);
    Ga[0] = std::sqrt(n2);
    Ga[1] = -eps;
    Ga[5] = 1.0;
    Gb[6] = model->lambda(yb[0], 1);
    Gb[8] = -2.0 * yb[2];
    if (closure == OuterClosure::asymptotic) Gb[9] = -model->omega(yb[0], 1);
    Gp[0] = 0.0;
    Gp[1] = stub_coeff();
    Gp[2] = 0.0;
    Gp[3] = 1.0;
  }
};

struct Profile {
  std::vector<double> r, f, fp, v;
  double Omega;
};

inline double interp_linear(const std::vector<double>& x, const std::vector<double>& y, double t) {
  if (t <= x.front()) return y.front();
  if (t >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
  const double w = (t - x[i]) / (x[i + 1] - x[i]);
  return (1.0 - w) * y[i] + w * y[i + 1];
}

// Warm start on a new mesh; beyond the old R the far-field values are held constant.
inline Eigen::VectorXd guess_from(const Profile& p, const std::vector<double>& mesh, double v_scale) {
  const int N = static_cast<int>(mesh.size());
  Eigen::VectorXd z(3 * N + 1);
  const double Rold = p.r.back();
  for (int i = 0; i < N; ++i) {
    const double r = mesh[static_cast<std::size_t>(i)];
    z(3 * i) = interp_linear(p.r, p.f, r);
    z(3 * i + 1) = r > Rold ? 0.0 : interp_linear(p.r, p.fp, r);
    z(3 * i + 2) = v_scale * interp_linear(p.r, p.v, r);
  }
  z(3 * N) = p.Omega;
  return z;
}

inline Profile profile_of(const FiniteQSolution& s) {
  return {s.f.grid().nodes(), s.f.values(), s.fp.values(), s.v.values(), s.Omega};
}

// f ~ f0 + q^2 f1, v ~ q v0 + q^3 v1, Omega ~ Omega0.
inline Profile profile_from_series(const SeriesSolution& s, double q) {
  const auto& o0 = s.orders.at(0);
  Profile p{o0.f.grid().nodes(), o0.f.values(), o0.fp.values(), o0.v.values(), o0.Omega};
  double qk = 1.0;
  for (std::size_t k = 0; k < s.orders.size(); ++k, qk *= q * q) {
    const auto& o = s.orders[k];
    for (std::size_t i = 0; i < p.r.size(); ++i) {
      const int ii = static_cast<int>(i);
      if (k == 0) {
        p.v[i] = q * o.v[ii];
        continue;
      }
      p.f[i] += qk * o.f[ii];
      p.fp[i] += qk * o.fp[ii];
      p.v[i] += q * qk * o.v[ii];
    }
  }
  return p;
}

inline int nodes_for(const FiniteQOptions& opt, double R, double R0) {
  const double doublings = std::max(0.0, std::log2(R / R0));
  return opt.N + static_cast<int>(std::lround(opt.nodes_per_doubling * doublings));
}

}  // namespace detail

// Richardson estimate from a profile alone: v(r) ~ v_inf + a log(r)/r + b/r on [R/4, R],
// with |v(R) - v_inf| as the uncertainty. A non-monotone window returns v(R), flagged.
inline VInf tail_extrapolate(const GridFunction& v) {
  VInf out;
  const double R = v.grid().R();
  const double vR = v[v.size() - 1];
  const int i0 = v.grid().lower_index(R / 4.0);
  bool monotone = true;
  for (int i = i0 + 1; i < v.size(); ++i) {
    const double d0 = v[i] - v[i - 1], d1 = v[v.size() - 1] - v[i0];
    if (d0 * d1 < 0.0 && std::abs(d0) > 1e-14 * std::abs(vR)) {
      monotone = false;
      break;
    }
  }
  if (!monotone) {
    out.value = vR;
    out.uncertainty = std::abs(v[v.size() - 1] - v[i0]);
    out.low_confidence = true;
    return out;
  }
  const auto fit = least_squares_window(v, R / 4.0, R,
                                        {[](double) { return 1.0; }, [](double r) { return std::log(r) / r; },
                                         [](double r) { return 1.0 / r; }});
  out.value = fit.coefficients[0];
  out.uncertainty = std::abs(vR - out.value);
  return out;
}

namespace detail {

inline FiniteQSolution solve_fixed(const ModelFunctions& model, double q, const GridPtr& grid, const Eigen::VectorXd& z0,
                                   const FiniteQOptions& opt) {
  const int n = model.n();
  FullProblem pb{&model, q, double(n * n), grid->eps(), grid->R(), opt.stub_inner_bc, opt.closure, 0.0};
  if (opt.closure == OuterClosure::series_matched) pb.lambda_shift = model.lambda(f0_far_field(model, grid->R(), 4), 0);
  LobattoSolver<FullProblem> solver(pb, grid->nodes());
  CollocationOptions co;
  co.tol = opt.tol;
  const auto res = solver.solve(z0, co);

  const int N = grid->size();
  FiniteQSolution s;
  s.q = q;
  std::vector<double> f(static_cast<std::size_t>(N)), fp(f.size()), v(f.size());
  for (int i = 0; i < N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    f[k] = res.y[3 * k];
    fp[k] = res.y[3 * k + 1];
    v[k] = res.y[3 * k + 2];
  }
  s.f = GridFunction(grid, std::move(f));
  s.fp = GridFunction(grid, std::move(fp));
  s.v = GridFunction(grid, std::move(v));
  s.Omega = res.p[0];
  s.newton_iters = res.iterations;
  s.collocation_residual = res.residual;
  const double ya[3] = {s.f[0], s.fp[0], s.v[0]}, yb[3] = {s.f[N - 1], s.fp[N - 1], s.v[N - 1]};
  pb.bc(ya, yb, &s.Omega, s.bc_residuals.data());
  // Report the outer identities themselves, whatever closure was imposed.
  s.bc_residuals[2] = model.lambda(yb[0], 0) - yb[2] * yb[2];
  s.bc_residuals[3] = s.Omega - model.omega(yb[0], 0);
  s.f_inf = yb[0];
  return s;
}

inline void check_structure(FiniteQSolution& s) {
  const int N = s.f.size();
  const bool pos = s.v[N - 1] > 0.0;
  for (int i = 1; i < N; ++i) {
    if (!(s.f[i] > 0.0)) throw InvariantViolation("finite-q: f not positive at r = " + std::to_string(s.f.r(i)));
    if ((s.v[i] > 0.0) != pos || s.v[i] == 0.0)
      throw InvariantViolation("finite-q: v changes sign at r = " + std::to_string(s.f.r(i)));
  }
}

inline void finish(FiniteQSolution& s, const FiniteQOptions& opt);

}  // namespace detail

// The outer identities tie v(R) to Omega through lambda(f_inf) = v_inf^2, omega(f_inf) = Omega, so v(R)
// is the estimate; the interior profile still carries the slow c/r approach and a layer near R.
// The uncertainty is the change of v(R) under the last doubling of R (the tail fit when there was none).
inline VInf extract_v_inf(const FiniteQSolution& s) {
  VInf out;
  out.value = s.v[s.v.size() - 1];
  out.uncertainty = std::isnan(s.v_prev) ? std::abs(out.value - s.tail_fit) : std::abs(out.value - s.v_prev);
  out.low_confidence = s.tail_warning;
  return out;
}

namespace detail {

inline void finish(FiniteQSolution& s, const FiniteQOptions& opt) {
  check_structure(s);
  const double vR = s.v[s.v.size() - 1];
  const bool far = 2.0 * s.q * std::abs(vR) * s.R() >= opt.far_field_x;
  const bool settled = !std::isnan(s.v_prev) && std::abs(vR - s.v_prev) <= opt.v_rel_change * std::abs(vR);
  s.tail_warning = !far || !settled;
  s.tail_fit = tail_extrapolate(s.v).value;
  s.v_inf = extract_v_inf(s);
  s.converged = true;
}

}  // namespace detail

inline double R_min(double q) { return std::max(100.0, 12.0 / q); }

// Warm start: the truncated series at this q when no profile is given.
inline FiniteQSolution solve_bvp(const ModelFunctions& model, double q, const FiniteQOptions& opt = {},
                                 const std::optional<detail::Profile>& init = std::nullopt) {
  if (!(q > 0.0 && q <= 0.6)) throw RangeError("solve_bvp: need 0 < q <= 0.6");
  const double R0 = opt.R > 0.0 ? opt.R : R_min(q);
  GridPtr grid = build_grid(opt.eps, R0, opt.N, opt.stretch);

  detail::Profile start;
  if (init) {
    start = *init;
  } else {
    SeriesOptions so;
    so.K = opt.warm_series_K;
    so.enforce_omega = false;
    const auto series = run_series(model, build_grid(opt.eps, std::min(R0, 400.0), 4000), so);
    start = detail::profile_from_series(series, q);
  }

  auto sol = detail::solve_fixed(model, q, grid, detail::guess_from(start, grid->nodes(), 1.0), opt);
  std::vector<double> history{R0};
  double vprev = std::numeric_limits<double>::quiet_NaN();
  if (opt.adaptive_R) {
    double R = R0;
    while (true) {
      const double vR = sol.v[sol.v.size() - 1];
      if (history.size() > 1 && 2.0 * q * std::abs(vR) * R >= opt.far_field_x &&
          std::abs(vR - vprev) <= opt.v_rel_change * std::abs(vR))
        break;
      if (2.0 * R > opt.R_max) {
        sol.message = "R_max reached before the far field settled";
        break;
      }
      R *= 2.0;
      auto g = build_grid(opt.eps, R, detail::nodes_for(opt, R, R0), opt.stretch);
      vprev = vR;
      sol = detail::solve_fixed(model, q, g, detail::guess_from(detail::profile_of(sol), g->nodes(), 1.0), opt);
      history.push_back(R);
    }
  }
  sol.R_history = std::move(history);
  sol.v_prev = vprev;
  detail::finish(sol, opt);
  return sol;
}

struct SweepEntry {
  double q = 0.0;
  std::optional<FiniteQSolution> solution;
  std::string error;
};

// Descending q with each solve warm-started from the previous one; failures are recorded and skipped.
inline std::vector<SweepEntry> continuation_sweep(const ModelFunctions& model, const std::vector<double>& q_list,
                                                  const FiniteQOptions& opt = {}) {
  for (std::size_t i = 1; i < q_list.size(); ++i)
    if (!(q_list[i] < q_list[i - 1])) throw RangeError("continuation_sweep: q_list must be strictly descending");
  std::vector<SweepEntry> out;
  std::optional<detail::Profile> prev;
  double prev_q = 0.0;
  for (double q : q_list) {
    SweepEntry e;
    e.q = q;
    try {
      std::optional<detail::Profile> init;
      if (prev) {
        init = *prev;
        for (double& v : init->v) v *= q / prev_q;
      }
      FiniteQOptions o = opt;
      if (prev) o.R = std::max(opt.R > 0.0 ? opt.R : R_min(q), std::min(prev->r.back(), opt.R_max));
      e.solution = solve_bvp(model, q, o, init);
      prev = detail::profile_of(*e.solution);
      prev_q = q;
    } catch (const Error& err) {
      e.error = err.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

// max |f v' + f v/r + 2 f' v - (f^2 v r)'/(r f)| with the derivatives taken on the grid.
inline double propv_identity_residual(const FiniteQSolution& s) {
  const auto& g = s.f.grid_ptr();
  const auto vp = differentiate(s.v, 1);
  GridFunction w = GridFunction::sample(g, [](double) { return 0.0; });
  for (int i = 0; i < w.size(); ++i) w[i] = s.f[i] * s.f[i] * s.v[i] * s.f.r(i);
  const auto wp = differentiate(w, 1);
  double m = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    const double r = s.f.r(i);
    const double lhs = s.f[i] * vp[i] + s.f[i] * s.v[i] / r + 2.0 * s.fp[i] * s.v[i];
    m = std::max(m, std::abs(lhs - wp[i] / (r * s.f[i])));
  }
  return m;
}

struct MeshOrder {
  double order = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 3> Omega{};
  std::array<double, 2> diffs{};
};

// Fixed R; N, 2N-1 and 4N-3 nodes share every coarse node. Order from max|u_N - u_2N| / max|u_2N - u_4N| on f.
inline MeshOrder mesh_refinement_order(const ModelFunctions& model, double q, double R, int N,
                                       const FiniteQOptions& base = {}) {
  FiniteQOptions o = base;
  o.adaptive_R = false;
  o.R = R;
  std::array<FiniteQSolution, 3> sols;
  std::optional<detail::Profile> init;
  for (int k = 0; k < 3; ++k) {
    o.N = (N - 1) * (1 << k) + 1;
    sols[static_cast<std::size_t>(k)] = solve_bvp(model, q, o, init);
    init = detail::profile_of(sols[static_cast<std::size_t>(k)]);
  }
  MeshOrder m;
  for (int k = 0; k < 2; ++k) {
    double d = 0.0;
    const auto &a = sols[static_cast<std::size_t>(k)], &b = sols[static_cast<std::size_t>(k + 1)];
    for (int i = 0; i < N; ++i) d = std::max(d, std::abs(a.f[i << k] - b.f[i << (k + 1)]));
    m.diffs[static_cast<std::size_t>(k)] = d;
  }
  for (int k = 0; k < 3; ++k) m.Omega[static_cast<std::size_t>(k)] = sols[static_cast<std::size_t>(k)].Omega;
  m.order = std::log2(m.diffs[0] / m.diffs[1]);
  return m;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepEntry>& sweep,
                            const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "q,v_inf,Omega,f_inf,newton_iters,bc_res_max\n";
  os << std::setprecision(17);
  for (const auto& e : sweep) {
    if (!e.solution) continue;
    const auto& s = *e.solution;
    os << e.q << ',' << s.v_inf.value << ',' << s.Omega << ',' << s.f_inf << ',' << s.newton_iters << ','
       << s.bc_res_max() << '\n';
  }
}

inline void write_profile_csv(std::ostream& os, const FiniteQSolution& s, const std::vector<std::string>& comments = {}) {
  write_csv(os, {"f", "fp", "v"}, {&s.f, &s.fp, &s.v}, comments);
}

}  // namespace spiralwave
