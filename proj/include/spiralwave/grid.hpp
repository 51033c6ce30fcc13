#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spiralwave/errors.hpp"

namespace spiralwave {

// Mapping xi(r) = log r + gamma*log(1 + r/(gamma*L)); nodes are uniform in xi.
// gamma = inf gives log r + r/L. With finite gamma the spacing turns geometric again
// beyond r ~ gamma*L.
struct Stretch {
  double L = 2.0;
  double gamma = std::numeric_limits<double>::infinity();

  double xi(double u) const {
    const double r = std::exp(u);
    if (std::isinf(gamma)) return u + r / L;
    return u + gamma * std::log1p(r / (gamma * L));
  }
  double dxi_du(double u) const {
    const double r = std::exp(u);
    if (std::isinf(gamma)) return 1.0 + r / L;
    return 1.0 + (r / L) / (1.0 + r / (gamma * L));
  }
};

inline constexpr double kMaxSpacingRatio = 1.1;

class RadialGrid {
 public:
  RadialGrid(std::vector<double> nodes, Stretch stretch) : r_(std::move(nodes)), stretch_(stretch) {}

  double eps() const { return r_.front(); }
  double R() const { return r_.back(); }
  int size() const { return static_cast<int>(r_.size()); }
  double operator[](int i) const { return r_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& nodes() const { return r_; }
  const Stretch& stretch() const { return stretch_; }

  double max_spacing_ratio() const {
    double worst = 1.0;
    for (std::size_t i = 1; i + 1 < r_.size(); ++i) {
      const double a = r_[i] - r_[i - 1], b = r_[i + 1] - r_[i];
      worst = std::max(worst, std::max(a / b, b / a));
    }
    return worst;
  }

  // Index of the interval [r_i, r_{i+1}] containing x (clamped).
  int locate(double x) const {
    auto it = std::upper_bound(r_.begin(), r_.end(), x);
    int i = static_cast<int>(it - r_.begin()) - 1;
    return std::clamp(i, 0, size() - 2);
  }

  // First node index with r >= x.
  int lower_index(double x) const {
    return static_cast<int>(std::lower_bound(r_.begin(), r_.end(), x) - r_.begin());
  }

 private:
  std::vector<double> r_;
  Stretch stretch_;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

inline GridPtr build_grid(double eps, double R, int N, Stretch stretch = {}) {
  if (!(eps > 0.0) || !(eps < 1.0) || !(R >= 1.0) || !(R > eps))
    throw RangeError("build_grid: need 0 < eps < 1 <= R");
  if (N < 200) throw RangeError("build_grid: need N >= 200");
  if (!(stretch.L > 0.0) || !(stretch.gamma > 0.0)) throw RangeError("build_grid: bad stretch");

  const double u0 = std::log(eps), u1 = std::log(R);
  const double xi0 = stretch.xi(u0), xi1 = stretch.xi(u1);
  const double dxi = (xi1 - xi0) / (N - 1);
  std::vector<double> r(static_cast<std::size_t>(N));
  r.front() = eps;
  r.back() = R;
  double u = u0;
  for (int i = 1; i < N - 1; ++i) {
    const double target = xi0 + i * dxi;
    for (int it = 0; it < 60; ++it) {
      const double du = (stretch.xi(u) - target) / stretch.dxi_du(u);
      u -= du;
      if (std::abs(du) < 1e-15 * std::max(1.0, std::abs(u))) break;
    }
    r[static_cast<std::size_t>(i)] = std::exp(u);
  }
  auto grid = std::make_shared<RadialGrid>(std::move(r), stretch);
  if (grid->max_spacing_ratio() > kMaxSpacingRatio)
    throw RangeError("build_grid: N too small for this stretching (spacing ratio > 1.1)");
  return grid;
}

// Same node distribution multiplied by a constant (used for s = sqrt(d) r).
inline GridPtr scale_grid(const RadialGrid& g, double factor) {
  std::vector<double> r = g.nodes();
  for (double& x : r) x *= factor;
  return std::make_shared<RadialGrid>(std::move(r), g.stretch());
}

// psi ~ c r^m as r -> 0.
struct OriginOrder {
  int m = 0;
  double c = std::numeric_limits<double>::quiet_NaN();
};

// psi = O(log(r)^j r^{-l}) as r -> inf.
struct TailOrder {
  double l = 0.0;
  int j = 0;
  double c = std::numeric_limits<double>::quiet_NaN();
};

class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), v_(std::move(values)) {
    if (!grid_ || static_cast<int>(v_.size()) != grid_->size())
      throw RangeError("GridFunction: size mismatch");
  }
  GridFunction(GridPtr grid, double constant)
      : GridFunction(grid, std::vector<double>(static_cast<std::size_t>(grid->size()), constant)) {}

  template <class Fn>
  static GridFunction sample(GridPtr grid, Fn&& fn) {
    std::vector<double> v(static_cast<std::size_t>(grid->size()));
    for (int i = 0; i < grid->size(); ++i) v[static_cast<std::size_t>(i)] = fn((*grid)[i]);
    return GridFunction(std::move(grid), std::move(v));
  }

  const GridPtr& grid_ptr() const { return grid_; }
  const RadialGrid& grid() const { return *grid_; }
  int size() const { return static_cast<int>(v_.size()); }
  double r(int i) const { return (*grid_)[i]; }
  double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  const std::optional<OriginOrder>& origin() const { return origin_; }
  const std::optional<TailOrder>& tail() const { return tail_; }

  // Sets origin order m; the coefficient defaults to psi(eps)/eps^m.
  GridFunction& with_origin(int m, std::optional<double> c = std::nullopt) {
    origin_ = OriginOrder{m, c ? *c : v_.front() / std::pow(grid_->eps(), m)};
    return *this;
  }
  GridFunction& with_tail(double l, int j = 0, double c = std::numeric_limits<double>::quiet_NaN()) {
    tail_ = TailOrder{l, j, c};
    return *this;
  }
  GridFunction& clear_metadata() {
    origin_.reset();
    tail_.reset();
    return *this;
  }

  bool all_finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  template <class Fn>
  GridFunction map(Fn&& fn) const {
    GridFunction out(grid_, v_);
    for (int i = 0; i < size(); ++i) out[i] = fn(r(i), v_[static_cast<std::size_t>(i)]);
    return out;
  }

  GridFunction& operator+=(const GridFunction& o) {
    check_same(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    origin_ = combine_sum(origin_, o.origin_);
    tail_.reset();
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    check_same(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    origin_ = combine_sum(origin_, o.origin_);
    tail_.reset();
    return *this;
  }
  GridFunction& operator*=(double a) {
    for (double& x : v_) x *= a;
    if (origin_) origin_->c *= a;
    if (tail_) tail_->c *= a;
    return *this;
  }

  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(GridFunction a, double s) { return a *= s; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
  friend GridFunction operator*(const GridFunction& a, const GridFunction& b) {
    a.check_same(b);
    GridFunction out(a.grid_, a.v_);
    for (std::size_t i = 0; i < out.v_.size(); ++i) out.v_[i] *= b.v_[i];
    if (a.origin_ && b.origin_) out.origin_ = OriginOrder{a.origin_->m + b.origin_->m, a.origin_->c * b.origin_->c};
    else out.origin_.reset();
    return out;
  }

 private:
  void check_same(const GridFunction& o) const {
    if (grid_ != o.grid_ && (grid_->size() != o.grid_->size() || grid_->nodes() != o.grid_->nodes()))
      throw RangeError("GridFunction: operands live on different grids");
  }
  static std::optional<OriginOrder> combine_sum(const std::optional<OriginOrder>& a,
                                                const std::optional<OriginOrder>& b) {
    if (!a || !b) return std::nullopt;
    // The sum's leading coefficient is only a guess; callers reset it when it matters.
    if (a->m == b->m) return OriginOrder{a->m, std::numeric_limits<double>::quiet_NaN()};
    return a->m < b->m ? a : b;
  }

  GridPtr grid_;
  std::vector<double> v_;
  std::optional<OriginOrder> origin_;
  std::optional<TailOrder> tail_;
};

namespace detail {

// Fornberg finite-difference weights for derivative orders 0..M at x0 from nodes x.
template <std::size_t P>
inline std::array<std::array<double, P>, 3> fornberg(double x0, const std::array<double, P>& x) {
  constexpr int M = 2;
  std::array<std::array<double, P>, 3> c{};
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < P; ++i) {
    const int mn = std::min<int>(static_cast<int>(i), M);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

inline int stencil_start(int i, int n, int width) {
  return std::clamp(i - width / 2, 0, n - width);
}

// Cubic Lagrange interpolation of samples y at nodes x[k..k+3].
inline double lagrange4(const double* x, const double* y, double t) {
  double s = 0.0;
  for (int a = 0; a < 4; ++a) {
    double w = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) w *= (t - x[b]) / (x[a] - x[b]);
    s += w * y[a];
  }
  return s;
}

}  // namespace detail

inline GridFunction differentiate(const GridFunction& psi, int order) {
  if (order != 1 && order != 2) throw RangeError("differentiate: order must be 1 or 2");
  const int n = psi.size();
  if (n < 5) throw RangeError("differentiate: need at least 5 nodes");
  GridFunction out(psi.grid_ptr(), 0.0);
  for (int i = 0; i < n; ++i) {
    const int k = detail::stencil_start(i, n, 5);
    std::array<double, 5> x{};
    for (int a = 0; a < 5; ++a) x[static_cast<std::size_t>(a)] = psi.r(k + a);
    const auto w = detail::fornberg<5>(psi.r(i), x);
    double s = 0.0;
    for (int a = 0; a < 5; ++a) s += w[static_cast<std::size_t>(order)][static_cast<std::size_t>(a)] * psi[k + a];
    out[i] = s;
  }
  if (psi.origin() && psi.origin()->m - order >= 0) out.with_origin(psi.origin()->m - order);
  return out;
}

// r -> int_0^r t^p psi(t) dt. The [0, eps] piece uses psi ~ t^m * (a + b t), with a and b
// read off the first two nodes; [eps, r] uses per-interval cubic interpolation.
inline GridFunction cumulative_integral_from_zero(const GridFunction& psi, int p) {
  if (!psi.origin()) throw MissingMetadata("cumulative_integral_from_zero: origin order not set");
  const int m = psi.origin()->m;
  const int a = p + m;
  if (a <= -1) throw RangeError("cumulative_integral_from_zero: divergent stub (p + m <= -1)");

  const auto& g = psi.grid();
  const int n = g.size();
  std::vector<double> integrand(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) integrand[static_cast<std::size_t>(i)] = std::pow(g[i], p) * psi[i];

  const double eps = g.eps();
  const double h0 = std::pow(eps, m), h1 = std::pow(g[1], m);
  const double c0 = psi[0] / h0;
  const double slope = (psi[1] / h1 - c0) / (g[1] - eps);
  // int_0^eps t^a (c0 + slope (t - eps)) dt
  const double stub = c0 * std::pow(eps, a + 1) / (a + 1) +
                      slope * (std::pow(eps, a + 2) / (a + 2) - std::pow(eps, a + 2) / (a + 1));

  static const double gl = 1.0 / std::sqrt(3.0);
  GridFunction out(psi.grid_ptr(), 0.0);
  out[0] = stub;
  for (int i = 0; i + 1 < n; ++i) {
    const int k = std::clamp(i - 1, 0, n - 4);
    const double lo = g[i], hi = g[i + 1];
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    const double* xs = &g.nodes()[static_cast<std::size_t>(k)];
    const double* ys = &integrand[static_cast<std::size_t>(k)];
    const double piece = half * (detail::lagrange4(xs, ys, mid - half * gl) + detail::lagrange4(xs, ys, mid + half * gl));
    out[i + 1] = out[i] + piece;
  }
  out.with_origin(a + 1, psi.origin()->c / (a + 1));
  return out;
}

// Cubic Hermite interpolation from values and first derivatives.
inline double hermite_interpolate(const GridFunction& f, const GridFunction& fp, double x) {
  const auto& g = f.grid();
  const int i = g.locate(x);
  const double h = g[i + 1] - g[i];
  const double t = (x - g[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * f[i] + h10 * h * fp[i] + h01 * f[i + 1] + h11 * h * fp[i + 1];
}

// Cubic Lagrange interpolation through the four nearest nodes.
inline double interpolate(const GridFunction& f, double x) {
  const auto& g = f.grid();
  const int i = g.locate(x);
  const int k = std::clamp(i - 1, 0, g.size() - 4);
  return detail::lagrange4(&g.nodes()[static_cast<std::size_t>(k)], &f.values()[static_cast<std::size_t>(k)], x);
}

struct LeastSquaresFit {
  std::vector<double> coefficients;
  double rms_residual = 0.0;
  int points = 0;
};

// Least squares of psi on [r_lo, r_hi] against the given basis functions of r.
inline LeastSquaresFit least_squares_window(const GridFunction& psi, double r_lo, double r_hi,
                                            const std::vector<std::function<double(double)>>& basis) {
  const auto& g = psi.grid();
  const int i0 = g.lower_index(r_lo);
  int i1 = g.lower_index(r_hi);
  if (i1 >= g.size() || g[i1] > r_hi) --i1;
  const int rows = i1 - i0 + 1;
  const int cols = static_cast<int>(basis.size());
  if (rows < cols + 1) throw RangeError("least_squares_window: window has too few nodes");
  Eigen::MatrixXd A(rows, cols);
  Eigen::VectorXd b(rows);
  for (int i = 0; i < rows; ++i) {
    const double r = g[i0 + i];
    for (int c = 0; c < cols; ++c) A(i, c) = basis[static_cast<std::size_t>(c)](r);
    b(i) = psi[i0 + i];
  }
  // Column scaling keeps the normal problem well conditioned for mixed log/power bases.
  Eigen::VectorXd scale = A.colwise().norm().transpose();
  for (int c = 0; c < cols; ++c)
    if (scale(c) > 0) A.col(c) /= scale(c);
  Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
  LeastSquaresFit fit;
  fit.points = rows;
  fit.rms_residual = std::sqrt((A * x - b).squaredNorm() / rows);
  for (int c = 0; c < cols; ++c) fit.coefficients.push_back(scale(c) > 0 ? x(c) / scale(c) : 0.0);
  return fit;
}

struct TailCandidate {
  int j = 0;
  double l = 0.0;
  double residual = 0.0;
};

struct OrderEstimate {
  double m_hat = std::numeric_limits<double>::quiet_NaN();
  double origin_residual = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 2> origin_window{};
  bool origin_indeterminate = false;

  double l_hat = std::numeric_limits<double>::quiet_NaN();
  int j_hat = 0;
  double tail_residual = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 2> tail_window{};
  bool tail_indeterminate = false;
  std::vector<TailCandidate> candidates;
};

struct OrderOptions {
  double origin_span = 10.0;    // origin window [eps, origin_span*eps]
  double tail_fraction = 0.1;   // tail window [tail_fraction*R, R]
  int j_max = 8;
  std::optional<int> fixed_j;   // fit l with this log power only
};

namespace detail {

struct LineFit {
  double slope, intercept, residual;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - slope * x[i] - intercept;
    ss += e * e;
  }
  return {slope, intercept, std::sqrt(ss / n)};
}

inline bool sign_definite(const GridFunction& psi, int i0, int i1) {
  const double scale = psi.max_abs();
  if (scale == 0.0) return false;
  const bool pos = psi[i0] > 0.0;
  for (int i = i0; i <= i1; ++i) {
    if (psi[i] == 0.0 || (psi[i] > 0.0) != pos || std::abs(psi[i]) < 1e-300) return false;
  }
  return true;
}

}  // namespace detail

inline OrderEstimate estimate_order(const GridFunction& psi, const OrderOptions& opt = {}) {
  const auto& g = psi.grid();
  OrderEstimate est;

  const int o1 = std::max(g.lower_index(opt.origin_span * g.eps()), 4);
  est.origin_window = {g.eps(), g[o1]};
  if (!detail::sign_definite(psi, 0, o1)) {
    est.origin_indeterminate = true;
  } else {
    std::vector<double> x, y;
    for (int i = 0; i <= o1; ++i) {
      x.push_back(std::log(g[i]));
      y.push_back(std::log(std::abs(psi[i])));
    }
    const auto lf = detail::fit_line(x, y);
    est.m_hat = lf.slope;
    est.origin_residual = lf.residual;
  }

  const int t0 = g.lower_index(opt.tail_fraction * g.R());
  const int t1 = g.size() - 1;
  est.tail_window = {g[t0], g.R()};
  if (t1 - t0 < 4 || !detail::sign_definite(psi, t0, t1) || g[t0] <= 1.0) {
    est.tail_indeterminate = true;
    return est;
  }
  std::vector<double> x, lly, logabs;
  for (int i = t0; i <= t1; ++i) {
    x.push_back(std::log(g[i]));
    lly.push_back(std::log(std::log(g[i])));
    logabs.push_back(std::log(std::abs(psi[i])));
  }
  const int jlo = opt.fixed_j ? *opt.fixed_j : 0;
  const int jhi = opt.fixed_j ? *opt.fixed_j : opt.j_max;
  double best = std::numeric_limits<double>::infinity();
  for (int j = jlo; j <= jhi; ++j) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = logabs[i] - j * lly[i];
    const auto lf = detail::fit_line(x, y);
    est.candidates.push_back({j, -lf.slope, lf.residual});
    if (lf.residual < best) {
      best = lf.residual;
      est.l_hat = -lf.slope;
      est.j_hat = j;
      est.tail_residual = lf.residual;
    }
  }
  return est;
}

// Columns r,<names...> with 17 significant digits. Comment lines are prefixed with '#'.
inline void write_csv(std::ostream& os, const std::vector<std::string>& names,
                      const std::vector<const GridFunction*>& columns,
                      const std::vector<std::string>& comments = {}) {
  if (columns.empty() || names.size() != columns.size()) throw RangeError("write_csv: column mismatch");
  for (const auto& c : comments) os << "# " << c << '\n';
  os << 'r';
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  os << std::setprecision(17);
  const auto& g = columns.front()->grid();
  for (int i = 0; i < g.size(); ++i) {
    os << g[i];
    for (const auto* c : columns) os << ',' << (*c)[i];
    os << '\n';
  }
}

inline void write_csv(std::ostream& os, const GridFunction& psi, const std::vector<std::string>& comments = {}) {
  write_csv(os, {"value"}, {&psi}, comments);
}

}  // namespace spiralwave
