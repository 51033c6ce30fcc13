#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spiralwave/errors.hpp"

namespace spiralwave {

struct SweepPoint {
  double q = 0.0;
  double v_inf = 0.0;
};

// v_inf ~ A exp(-B/q) / q, fitted as log(q v_inf) = log A - B / q.
struct FitResult {
  double A = 0.0;
  double B = 0.0;
  double log_A = 0.0;
  double se_B = 0.0;
  std::array<double, 2> ci95_B{};
  double r_squared = 0.0;
  std::vector<double> residuals;  // in input order, y - fit
  std::array<double, 2> q_window{};
  int points = 0;
  bool weighted = false;

  double ci95_halfwidth() const { return 0.5 * (ci95_B[1] - ci95_B[0]); }
};

// Least squares in (1/q, log(q v_inf)); optional weights give the weighted variant.
inline FitResult fit_exponential(const std::vector<SweepPoint>& pts, const std::optional<std::vector<double>>& weights = {}) {
  const std::size_t n = pts.size();
  if (n < 4) throw RangeError("fit_exponential: need at least 4 points");
  if (weights && weights->size() != n) throw RangeError("fit_exponential: one weight per point");
  std::vector<double> x(n), y(n), w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(pts[i].q > 0.0)) throw RangeError("fit_exponential: q must be positive");
    if (!(pts[i].v_inf > 0.0)) throw RangeError("fit_exponential: v_inf must be positive (log domain)");
    x[i] = 1.0 / pts[i].q;
    y[i] = std::log(pts[i].q * pts[i].v_inf);
    if (weights) {
      w[i] = (*weights)[i];
      if (!(w[i] > 0.0)) throw RangeError("fit_exponential: weights must be positive");
    }
  }
  auto qs = pts;
  std::sort(qs.begin(), qs.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.q < b.q; });
  for (std::size_t i = 1; i < n; ++i)
    if (qs[i].q == qs[i - 1].q) throw RangeError("fit_exponential: q values must be distinct");

  // Sums in a fixed (sorted) order so the result does not depend on input order.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  double sw = 0, sx = 0, sy = 0;
  for (auto i : order) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (auto i : order) {
    sxx += w[i] * (x[i] - xm) * (x[i] - xm);
    sxy += w[i] * (x[i] - xm) * (y[i] - ym);
    syy += w[i] * (y[i] - ym) * (y[i] - ym);
  }
  if (!(sxx > 0.0)) throw RangeError("fit_exponential: rank-deficient design");

  FitResult r;
  const double slope = sxy / sxx;
  r.B = -slope;
  r.log_A = ym - slope * xm;
  r.A = std::exp(r.log_A);
  r.points = static_cast<int>(n);
  r.weighted = weights.has_value();
  r.q_window = {qs.front().q, qs.back().q};
  double ssr = 0.0;
  r.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.residuals[i] = y[i] - (r.log_A + slope * x[i]);
  for (auto i : order) ssr += w[i] * r.residuals[i] * r.residuals[i];
  r.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  const double dof = static_cast<double>(n) - 2.0;
  r.se_B = std::sqrt(ssr / dof / sxx);
  const boost::math::students_t t(dof);
  const double tq = boost::math::quantile(boost::math::complement(t, 0.025));
  r.ci95_B = {r.B - tq * r.se_B, r.B + tq * r.se_B};
  if (!std::isfinite(r.B)) throw RangeError("fit_exponential: B not finite");
  return r;
}

// Largest |B - B_without_i| over interior points (q strictly between the window ends).
inline double leave_one_out_shift(const std::vector<SweepPoint>& pts) {
  const auto full = fit_exponential(pts);
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].q == full.q_window[0] || pts[i].q == full.q_window[1]) continue;
    auto sub = pts;
    sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(i));
    if (sub.size() < 4) break;
    worst = std::max(worst, std::abs(fit_exponential(sub).B - full.B));
  }
  return worst;
}

inline void write_fit_report(std::ostream& os, const FitResult& r, double B_reference,
                             const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "key,value\n" << std::setprecision(17);
  os << "A," << r.A << '\n';
  os << "B," << r.B << '\n';
  os << "se_B," << r.se_B << '\n';
  os << "B_ci95_lo," << r.ci95_B[0] << '\n';
  os << "B_ci95_hi," << r.ci95_B[1] << '\n';
  os << "r_squared," << r.r_squared << '\n';
  os << "points," << r.points << '\n';
  os << "q_min," << r.q_window[0] << '\n';
  os << "q_max," << r.q_window[1] << '\n';
  os << "weighted," << (r.weighted ? 1 : 0) << '\n';
  os << "B_reference," << B_reference << '\n';
  os << "B_rel_diff_reference," << (r.B - B_reference) / B_reference << '\n';
  os << "B_minus_pi_over_2," << r.B - std::numbers::pi / 2.0 << '\n';
}

// Two columns, 1/q and log(q v_inf), sorted by 1/q.
inline void write_figure_data(std::ostream& os, std::vector<SweepPoint> pts, const std::vector<std::string>& comments = {}) {
  std::sort(pts.begin(), pts.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.q > b.q; });
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "# inv_q log_q_vinf\n" << std::setprecision(17);
  for (const auto& p : pts) os << 1.0 / p.q << ' ' << std::log(p.q * p.v_inf) << '\n';
}

}  // namespace spiralwave
