// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/bessel_oracle.hpp"
#include "spiralwave/spiralwave.hpp"
#include "support/manufactured.hpp"

using namespace spiralwave;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks and a few measured values for the report line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failures_ += (failures_.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome done() const { return {pass_, pass_ ? notes_ : "failed: " + failures_ + (notes_.empty() ? "" : " | " + notes_)}; }

 private:
  bool pass_ = true;
  std::string failures_, notes_;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

bool near_rel(double x, double target, double tol) { return std::abs(x / target - 1.0) <= tol; }

Outcome hypothesis_gate() {
  Checks c;
  c.expect(validate_hypotheses(models::ginzburg_landau(1)).all_passed(), "GL rejected");
  c.expect(validate_hypotheses(models::greenberg(1)).all_passed(), "Greenberg rejected");
  const auto lin = ModelFunctions::from_polynomials("lambda=1+x", 1, Polynomial({1.0, 1.0}), Polynomial({0.0, 0.0, -1.0}));
  c.expect(!validate_hypotheses(lin).all_passed(), "lambda=1+x accepted");
  c.note("GL and Greenberg accepted, lambda=1+x rejected");
  return c.done();
}

Outcome bessel_quality() {
  Checks c;
  double worst_w = 0.0;
  for (int n : {0, 1, 2, 3, 5})
    for (int i = 0; i < 400; ++i) {
      const double s = 1e-3 * std::pow(700.0 / 1e-3, i / 399.0);
      const auto b = bessel_quad(n, s, false);
      worst_w = std::max(worst_w, std::abs(s * (b.Iprime * b.K - b.Kprime * b.I) - 1.0));
    }
  double worst_v = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  for (const auto& p : oracle::kBesselSpots) {
    const auto b = bessel_quad(p.n, p.s, true);
    worst_v = std::max({worst_v, rel(b.I, p.i_scaled), rel(b.Iprime, p.ip_scaled), rel(b.K, p.k_scaled),
                        rel(b.Kprime, p.kp_scaled)});
  }
  c.expect(worst_w <= 1e-12, "Wronskian error " + fmt("%.2e", worst_w));
  c.expect(worst_v <= 1e-12, "oracle error " + fmt("%.2e", worst_v));
  c.note("Wronskian " + fmt("%.1e", worst_w) + ", oracle " + fmt("%.1e", worst_v));
  return c.done();
}

Outcome leading_order() {
  Checks c;
  const auto lo = solve_leading_order(models::ginzburg_landau(1), build_grid(1e-3, 100.0, 4000));
  c.expect(lo.residual_norm <= 1e-8, "residual " + fmt("%.2e", lo.residual_norm));
  const auto b = check_f0_bounds(lo, 1);
  c.expect(b.min_rfp > 0.0 && b.worst_upper <= 0.0, "0 < r f0' <= n^2 f0 violated");
  const double r = 50.0;
  const double a2 = r * r * (1.0 - interpolate(lo.f0, r)), a3 = r * r * r * interpolate(lo.f0p, r);
  c.expect(near_rel(a2, 0.5, 0.02), "r^2(1-f0) = " + fmt("%.4f", a2));
  c.expect(near_rel(a3, 1.0, 0.02), "r^3 f0' = " + fmt("%.4f", a3));
  bool v_nonneg = true;
  for (int i = 0; i < lo.v0.size(); ++i) v_nonneg = v_nonneg && lo.v0[i] >= 0.0;
  c.expect(v_nonneg, "v0 < 0 somewhere");
  const double slope = lo.v0[0] / lo.v0.r(0);
  c.expect(near_rel(slope, 0.25, 0.01), "v0/r at eps = " + fmt("%.4f", slope));
  const int last = lo.v0.size() - 1;
  const double R = lo.v0.r(last), tail = R * lo.v0[last] / std::log(R);
  c.expect(near_rel(tail, 1.0, 0.10), "tail coefficient " + fmt("%.4f", tail));
  c.note("alpha " + fmt("%.6f", lo.alpha) + ", r^2(1-f0) " + fmt("%.4f", a2) + ", tail " + fmt("%.3f", tail));
  return c.done();
}

Outcome operator_identities() {
  Checks c;
  const auto model = models::ginzburg_landau(1);
  const auto lo = solve_leading_order(model, build_grid(1e-3, 100.0, 4000));
  const auto ws = build_kernel_workspace(model, lo);
  const auto rep = verify_T_identity(ws);
  c.expect(rep.sup_weighted_error <= 1e-6, "T identity " + fmt("%.2e", rep.sup_weighted_error));
  c.expect(near_rel(rep.ratio_at_origin, 1.0, 0.05) && near_rel(rep.ratio_at_end, 1.0, 0.05), "T[h0]/w at edges");
  c.expect(ws.contraction_bound < 1.0, "contraction bound " + fmt("%.3f", ws.contraction_bound));

  // Random pairs in the unit ball of the weighted norm.
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto random_ball = [&]() {
    double a[5], ph[5];
    for (int k = 0; k < 5; ++k) {
      a[k] = U(rng) / 5.0;
      ph[k] = 3.0 * U(rng);
    }
    return ws.w.map([&](double s, double w) {
      double u = 0.0;
      for (int k = 0; k < 5; ++k) u += a[k] * std::cos((k + 1) * std::log1p(s) + ph[k]);
      return w * u;
    });
  };
  double worst_ratio = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto p1 = random_ball(), p2 = random_ball();
    worst_ratio = std::max(worst_ratio, weighted_norm(ws, apply_F(ws, p1) - apply_F(ws, p2)) / weighted_norm(ws, p1 - p2));
  }
  c.expect(worst_ratio < 1.0, "empirical contraction " + fmt("%.3f", worst_ratio));

  const auto m = check::manufacture(model, lo);
  const auto res = solve_linear_bvp(ws, model, lo, m.h, m.hp, m.hpp, LinearSolveOptions{});
  double err = 0.0;
  for (int i = 0; i < res.g.size(); ++i) err = std::max(err, std::abs(res.g[i] - m.g[i]));
  c.expect(err <= 1e-7, "manufactured error " + fmt("%.2e", err));
  c.note("T identity " + fmt("%.1e", rep.sup_weighted_error) + ", bound " + fmt("%.3f", ws.contraction_bound) +
         ", empirical " + fmt("%.3f", worst_ratio) + ", manufactured " + fmt("%.1e", err));
  return c.done();
}

Outcome frequency_corrections() {
  Checks c;
  const auto model = models::ginzburg_landau(1);
  SeriesOptions so;
  so.K = 3;
  so.enforce_omega = false;
  const auto a = run_series(model, build_grid(1e-3, 800.0, 8000), so);
  const auto b = run_series(model, build_grid(1e-3, 1600.0, 10000), so);
  c.expect(a.orders[0].Omega == -1.0, "Omega_0 != -1");
  std::string om;
  for (int k = 1; k <= 3; ++k) {
    const auto &oa = a.orders[static_cast<std::size_t>(k)], &ob = b.orders[static_cast<std::size_t>(k)];
    const auto K = std::to_string(k);
    c.expect(std::abs(oa.Omega) <= 1e-6 * std::max(1.0, oa.c.max_abs()), "|Omega_" + K + "| = " + fmt("%.2e", oa.Omega));
    c.expect(std::abs(ob.Omega - oa.Omega) <= std::abs(oa.Omega) + oa.omega_tolerance, "Omega_" + K + " moves under 2R");
    c.expect(std::abs(oa.f_order.l_hat - 2.0) <= 0.3, "f_" + K + " decay " + fmt("%.2f", oa.f_order.l_hat));
    c.expect(std::abs(oa.v_order.l_hat - 1.0) <= 0.3, "v_" + K + " decay " + fmt("%.2f", oa.v_order.l_hat));
    c.expect(std::abs(oa.f_order.m_hat - 1.0) <= 0.3, "f_" + K + " origin " + fmt("%.2f", oa.f_order.m_hat));
    if (oa.f_order.tail_residual < 0.1) c.expect(oa.f_order.j_hat == 2 * k, "f_" + K + " log power");
    if (oa.v_order.tail_residual < 0.1) c.expect(oa.v_order.j_hat == 2 * k + 1, "v_" + K + " log power");
    om += (k > 1 ? " " : "") + fmt("%.1e", oa.Omega);
  }
  c.note("Omega_1..3 = " + om);
  return c.done();
}

Outcome series_finite_q_consistency() {
  Checks c;
  const auto model = models::ginzburg_landau(1);
  const auto grid = build_grid(1e-3, 100.0, 4000);
  SeriesOptions so;
  so.K = 2;
  so.enforce_omega = false;
  const auto s2 = run_series(model, grid, so);
  std::string ratios;
  for (int K = 0; K <= 2; ++K) {
    SeriesSolution t = s2;
    t.orders.resize(static_cast<std::size_t>(K + 1));
    t.K = K;
    const auto rc = residual_order_check(model, t, 0.1, 0.05);
    c.expect(near_rel(rc.amplitude_ratio, rc.expected_amplitude_ratio, K < 2 ? 0.3 : 0.4),
             "K=" + std::to_string(K) + " ratio " + fmt("%.2f", rc.amplitude_ratio));
    ratios += fmt("%.2f", rc.amplitude_ratio) + "/" + fmt("%.0f", rc.expected_amplitude_ratio) + " ";
  }

  FiniteQOptions opt;
  opt.adaptive_R = false;
  opt.R = 100.0;
  opt.stretch = grid->stretch();
  opt.closure = OuterClosure::series_matched;
  double d[2];
  const double qs[2] = {0.05, 0.025};
  for (int k = 0; k < 2; ++k) {
    const double q = qs[k];
    const auto s = solve_bvp(model, q, opt);
    d[k] = 0.0;
    for (int i = 0; i < s.f.size(); ++i)
      d[k] = std::max(d[k], std::abs(s.f[i] - s2.orders[0].f[i] - q * q * s2.orders[1].f[i]));
  }
  const double ratio = d[0] / d[1];
  c.expect(near_rel(ratio, 16.0, 0.3), "finite-q ratio " + fmt("%.2f", ratio));
  c.note("residual ratios " + ratios + "finite-q " + fmt("%.2f", ratio) + "/16");
  return c.done();
}

Outcome sweep_exponent() {
  Checks c;
  const std::vector<double> qs = {0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2};
  const auto sweep = continuation_sweep(models::ginzburg_landau(1), qs);
  std::vector<SweepPoint> pts;
  for (const auto& e : sweep) {
    c.expect(e.solution && e.solution->converged, "q=" + fmt("%.2f", e.q) + " failed");
    if (e.solution) pts.push_back({e.q, e.solution->v_inf.value});
  }
  if (pts.size() < 4) {
    c.expect(false, "fewer than 4 points");
    return c.done();
  }
  const auto fit = fit_exponential(pts);
  c.expect(near_rel(fit.B, kReferenceB, 0.05), "B = " + fmt("%.6f", fit.B));
  c.note("B = " + fmt("%.6f", fit.B) + " CI95 [" + fmt("%.4f", fit.ci95_B[0]) + ", " + fmt("%.4f", fit.ci95_B[1]) +
         "], vs 1.588191 " + fmt("%+.2f%%", 100.0 * (fit.B / kReferenceB - 1.0)) + ", B - pi/2 = " +
         fmt("%+.4f", fit.B - std::numbers::pi / 2));
  return c.done();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Outcome determinism() {
  Checks c;
  const auto root = fs::temp_directory_path() / "spiralwave_acceptance";
  fs::remove_all(root);
  RunConfig cfg;
  std::ostringstream log;
  for (const char* sub : {"a", "b"}) {
    cfg.output_dir = (root / sub).string();
    c.expect(cmd_series(cfg, log) == exit_code::ok, std::string("run ") + sub + " did not exit 0");
  }
  int files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    c.expect(slurp(e.path()) == slurp(root / "b" / e.path().filename()), e.path().filename().string() + " differs");
  }
  c.expect(files == 4, "expected 4 CSVs, found " + std::to_string(files));
  c.note(std::to_string(files) + " CSVs byte-identical");
  fs::remove_all(root);
  return c.done();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all = {
      {1, "hypothesis gate", 1.0, hypothesis_gate},
      {2, "Bessel quality", 5.0, bessel_quality},
      {3, "leading order", 30.0, leading_order},
      {4, "operator identities", 60.0, operator_identities},
      {5, "frequency corrections at desk scale", 300.0, frequency_corrections},
      {6, "series/finite-q consistency", 300.0, series_finite_q_consistency},
      {7, "exponent B from the q sweep", 600.0, sweep_exponent},
      {8, "determinism", 300.0, determinism},
  };
  int failed = 0;
  for (const auto& cr : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > cr.budget_s) {
      o.pass = false;
      o.detail += fmt(" | over budget of %.0f s", cr.budget_s);
    }
    failed += !o.pass;
    std::printf("%s %d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", cr.id, cr.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
