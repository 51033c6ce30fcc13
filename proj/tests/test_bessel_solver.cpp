#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "spiralwave/bessel_solver.hpp"
#include "spiralwave/jet.hpp"
#include "support/direct_linear.hpp"
#include "support/manufactured.hpp"

using namespace spiralwave;

namespace {

struct Setup {
  ModelFunctions model;
  LeadingOrder lo;
  KernelWorkspace ws;
};

const Setup& gl(int n) {
  static std::map<int, Setup> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    auto model = models::ginzburg_landau(n);
    auto lo = solve_leading_order(model, build_grid(1e-3, 100.0, 4000));
    auto ws = build_kernel_workspace(model, lo);
    it = cache.emplace(n, Setup{model, std::move(lo), std::move(ws)}).first;
  }
  return it->second;
}

GridFunction on_s(const KernelWorkspace& ws, std::function<double(double)> fn, int m, double l) {
  GridFunction out = GridFunction::sample(ws.s_grid, fn);
  out.with_origin(m).with_tail(l);
  return out;
}

}  // namespace

TEST(KernelSolver, WorkspaceInvariants) {
  for (int n : {1, 2, 3}) {
    const auto& ws = gl(n).ws;
    for (int i = 0; i < ws.w.size(); ++i) {
      ASSERT_GT(ws.w[i], 0.0);
      ASSERT_GT(ws.h0[i], 0.0);
    }
    EXPECT_LT(ws.contraction_bound, 1.0) << "n=" << n;
  }
  EXPECT_NEAR(gl(1).ws.contraction_bound, 0.526, 0.01);
}

TEST(KernelSolver, TIdentityAndLimits) {
  for (int n : {1, 2, 3}) {
    const auto rep = verify_T_identity(gl(n).ws);
    EXPECT_LE(rep.sup_weighted_error, 1e-6) << "n=" << n;
    EXPECT_NEAR(rep.ratio_at_origin, 1.0, 0.05) << "n=" << n;
    EXPECT_NEAR(rep.ratio_at_end, 1.0, 0.05) << "n=" << n;
    EXPECT_LT(rep.contraction_bound, 1.0);
  }
}

TEST(KernelSolver, WeightedNorm) {
  const auto& ws = gl(1).ws;
  EXPECT_DOUBLE_EQ(weighted_norm(ws, ws.w), 1.0);
  EXPECT_DOUBLE_EQ(weighted_norm(ws, ws.w * 0.5), 0.5);
  const double t = weighted_norm(ws, ws.T_direct);
  EXPECT_GT(t, 0.0);
  EXPECT_LT(t, 1.0);
}

TEST(KernelSolver, ZeroInput) {
  const auto& S = gl(1);
  const auto out = apply_T(S.ws, on_s(S.ws, [](double) { return 0.0; }, 0, 3.0));
  EXPECT_EQ(out.value.max_abs(), 0.0);
  const GridFunction z(S.lo.f0.grid_ptr(), 0.0);
  const auto res = solve_linear_bvp(S.ws, S.model, S.lo, z, z, z);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_EQ(res.g.max_abs(), 0.0);
}

TEST(KernelSolver, MissingMetadataRejected) {
  const auto& ws = gl(1).ws;
  GridFunction psi(ws.s_grid, 1.0);
  EXPECT_THROW(apply_T(ws, psi), MissingMetadata);
  psi.with_origin(0);
  EXPECT_THROW(apply_T(ws, psi), MissingMetadata);
}

TEST(KernelSolver, Linearity) {
  const auto& ws = gl(1).ws;
  const auto p1 = on_s(ws, [](double s) { return std::exp(-0.3 * s) * s; }, 0, 3.0);
  const auto p2 = on_s(ws, [](double s) { return 1.0 / std::pow(1.0 + s, 3); }, 0, 3.0);
  const double a = 0.7, b = -2.3;
  GridFunction mix = p1 * a + p2 * b;
  mix.with_origin(0).with_tail(3.0);
  const auto lhs = apply_T(ws, mix).value;
  const auto rhs = apply_T(ws, p1).value * a + apply_T(ws, p2).value * b;
  EXPECT_LE(weighted_norm(ws, lhs - rhs), 1e-10 * (std::abs(a) + std::abs(b)));
}

TEST(KernelSolver, SmoothingOrderAtOrigin) {
  const auto& ws = gl(3).ws;
  const std::vector<std::pair<int, int>> cases = {{0, 2}, {1, 3}, {2, 3}, {3, 3}};
  for (auto [m, expected] : cases) {
    const auto psi = on_s(ws, [m](double s) { return std::pow(s, m) * std::exp(-s); }, m, 30.0);
    const auto out = apply_T(ws, psi).value;
    EXPECT_EQ(out.origin()->m, expected) << "m=" << m;
    const auto e = estimate_order(out);
    if (m == ws.n - 2) {
      // I_n(s) int_s xi K_n psi picks up log(1/s): s^n log s reads slightly below n.
      EXPECT_GT(e.m_hat, expected - 0.3);
      EXPECT_LT(e.m_hat, expected);
    } else {
      EXPECT_NEAR(e.m_hat, expected, 0.05) << "m=" << m;
    }
  }
}

TEST(KernelSolver, EmpiricalContraction) {
  const auto& ws = gl(1).ws;
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto random_ball = [&]() {
    double a[5], ph[5];
    for (int k = 0; k < 5; ++k) {
      a[k] = U(rng) / 5.0;
      ph[k] = 3.0 * U(rng);
    }
    GridFunction psi = ws.w.map([&](double s, double w) {
      double u = 0.0;
      for (int k = 0; k < 5; ++k) u += a[k] * std::cos((k + 1) * std::log1p(s) + ph[k]);
      return w * u;
    });
    return psi;
  };
  for (int t = 0; t < 20; ++t) {
    const auto p1 = random_ball(), p2 = random_ball();
    ASSERT_LE(weighted_norm(ws, p1), 1.0);
    const double num = weighted_norm(ws, apply_F(ws, p1) - apply_F(ws, p2));
    const double den = weighted_norm(ws, p1 - p2);
    EXPECT_LE(num, ws.contraction_bound * den * (1.0 + 1e-9)) << "pair " << t;
  }
}

TEST(KernelSolver, ManufacturedSolution) {
  for (int n : {1, 2}) {
    const auto& S = gl(n);
    const auto m = check::manufacture(S.model, S.lo);
    LinearSolveOptions opt;
    const auto res = solve_linear_bvp(S.ws, S.model, S.lo, m.h, m.hp, m.hpp, opt);
    double err = 0.0, errp = 0.0;
    for (int i = 0; i < res.g.size(); ++i) {
      err = std::max(err, std::abs(res.g[i] - m.g[i]));
      errp = std::max(errp, std::abs(res.gp[i] - m.gp[i]));
    }
    EXPECT_LE(err, 1e-7) << "n=" << n;
    EXPECT_LE(errp, 1e-6) << "n=" << n;
    EXPECT_TRUE(res.hypothesis_ok);
    const int cap = static_cast<int>(std::ceil(std::log(opt.tol) / std::log(S.ws.contraction_bound))) + 10;
    EXPECT_LE(res.iterations, cap);
    EXPECT_LE(res.final_update_wnorm, opt.tol * std::max(1.0, res.update_history.front()));
  }
}

TEST(KernelSolver, AgreesWithDirectCollocation) {
  const auto& S = gl(1);
  const double d = S.model.d();
  // Algebraic decay so the outer boundary matters.
  auto hf = [](double r) { return r / std::pow(1.0 + r * r, 2); };
  auto hpf = [](double r) { return (1.0 - 3.0 * r * r) / std::pow(1.0 + r * r, 3); };
  auto hppf = [](double r) { return (12.0 * r * r * r - 12.0 * r) / std::pow(1.0 + r * r, 4); };
  const auto& grid = S.lo.f0.grid_ptr();
  const auto h = GridFunction::sample(grid, hf), hp = GridFunction::sample(grid, hpf),
             hpp = GridFunction::sample(grid, hppf);
  const auto res = solve_linear_bvp(S.ws, S.model, S.lo, h, hp, hpp);
  const auto y = check::solve_direct_linear(S.model, S.lo, hf);
  double scale = res.g.max_abs(), err = 0.0;
  for (int i = 0; i < res.g.size(); ++i) err = std::max(err, std::abs(res.g[i] - y[2 * static_cast<std::size_t>(i)]));
  EXPECT_LE(err, 1e-6 * scale);
  const int last = res.g.size() - 1;
  EXPECT_NEAR(res.g[last], -h[last] / d, 1e-3 * std::abs(h[last] / d));
}

// E[f0'] = d f0' - 2 n^2 f0 / r^3 + f0' / r^2, from differentiating the amplitude equation.
TEST(KernelSolver, EOfDerivativeProfile) {
  const auto& S = gl(1);
  const int n = 1;
  const double d = S.model.d();
  const auto f0ppp = differentiate(S.lo.f0pp, 1);
  const auto E = apply_E(S.lo.f0p, S.lo.f0pp, f0ppp, S.model, S.lo);
  for (int i = 10; i < E.size() - 10; ++i) {
    const double r = E.r(i);
    const double expected = d * S.lo.f0p[i] - 2.0 * n * n * S.lo.f0[i] / (r * r * r) + S.lo.f0p[i] / (r * r);
    ASSERT_NEAR(E[i], expected, 1e-5 * (1.0 + std::abs(expected))) << "r=" << r;
  }
}

TEST(KernelSolver, DiagnosticCsv) {
  std::ostringstream os;
  write_kernel_diagnostics(os, gl(1).ws, {"model=ginzburg-landau"});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# model=ginzburg-landau");
  std::getline(is, line);
  EXPECT_EQ(line, "s,w,h0,T_direct,w_minus_Th0,ratio");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4000);
}
