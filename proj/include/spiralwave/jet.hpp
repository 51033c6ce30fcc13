#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "spiralwave/errors.hpp"
#include "spiralwave/grid.hpp"

namespace spiralwave {

// Value and first two r-derivatives of a pointwise quantity. A NaN d2 means
// "not available"; d1 never depends on d2, so first derivatives survive.
struct Jet {
  double v = 0.0, d1 = 0.0, d2 = 0.0;

  static Jet constant(double c) { return {c, 0.0, 0.0}; }
  static Jet variable(double r) { return {r, 1.0, 0.0}; }

  Jet& operator+=(const Jet& o) {
    v += o.v;
    d1 += o.d1;
    d2 += o.d2;
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    v -= o.v;
    d1 -= o.d1;
    d2 -= o.d2;
    return *this;
  }
  Jet& operator*=(double a) {
    v *= a;
    d1 *= a;
    d2 *= a;
    return *this;
  }
};

inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator-(const Jet& a) { return {-a.v, -a.d1, -a.d2}; }
inline Jet operator*(Jet a, double s) { return a *= s; }
inline Jet operator*(double s, Jet a) { return a *= s; }
inline Jet operator*(const Jet& a, const Jet& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}
inline Jet reciprocal(const Jet& a) {
  const double i = 1.0 / a.v;
  return {i, -a.d1 * i * i, (2.0 * a.d1 * a.d1 * i - a.d2) * i * i};
}
inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

// G(y(r)) given G^(j)(y) for j = 0..2.
inline Jet chain(const double* g, const Jet& y) {
  return {g[0], g[1] * y.d1, g[2] * y.d1 * y.d1 + g[1] * y.d2};
}

// Jets of G^(j)(y(r)) for j = 0..K from gd[j] = G^(j)(y), j = 0..K+2.
inline std::vector<Jet> derivative_jets(const std::vector<double>& gd, const Jet& y, int K) {
  if (static_cast<int>(gd.size()) < K + 3) throw CapabilityError("derivative_jets: need G derivatives to order K+2");
  std::vector<Jet> out;
  for (int j = 0; j <= K; ++j) out.push_back(chain(&gd[static_cast<std::size_t>(j)], y));
  return out;
}

// Truncated power series in eps with Jet coefficients.
using JetSeries = std::vector<Jet>;

inline JetSeries series_mul(const JetSeries& a, const JetSeries& b, int K) {
  JetSeries out(static_cast<std::size_t>(K + 1));
  for (int k = 0; k <= K; ++k) {
    Jet s{};
    for (int i = 0; i <= k; ++i) {
      if (i >= static_cast<int>(a.size()) || k - i >= static_cast<int>(b.size())) continue;
      s += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(k - i)];
    }
    out[static_cast<std::size_t>(k)] = s;
  }
  return out;
}

// Coefficients 0..K of G(y0 + delta) where delta = sum_{k>=1} delta_k eps^k and
// g[j] = G^(j)(y0) (as Jets in r). delta[0] is ignored.
inline JetSeries compose(const std::vector<Jet>& g, const JetSeries& delta, int K) {
  if (static_cast<int>(g.size()) < K + 1) throw CapabilityError("compose: not enough derivatives of G");
  JetSeries d(static_cast<std::size_t>(K + 1));
  for (int k = 1; k <= K && k < static_cast<int>(delta.size()); ++k) d[static_cast<std::size_t>(k)] = delta[static_cast<std::size_t>(k)];
  JetSeries out(static_cast<std::size_t>(K + 1));
  out[0] = g[0];
  JetSeries power(static_cast<std::size_t>(K + 1));
  power[0] = Jet::constant(1.0);
  double factorial = 1.0;
  for (int j = 1; j <= K; ++j) {
    power = series_mul(power, d, K);  // delta^j starts at eps^j
    factorial *= j;
    for (int k = j; k <= K; ++k)
      out[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(j)] * power[static_cast<std::size_t>(k)] * (1.0 / factorial);
  }
  return out;
}

// Grid-level composition on values only: derivs[i][j] = G^(j)(f0(r_i)).
inline std::vector<GridFunction> compose_series(const std::vector<std::vector<double>>& derivs,
                                                const std::vector<GridFunction>& f, int K) {
  if (f.empty()) throw RangeError("compose_series: need f0");
  const int n = f.front().size();
  if (static_cast<int>(derivs.size()) != n) throw RangeError("compose_series: derivative table size mismatch");
  std::vector<GridFunction> out(static_cast<std::size_t>(K + 1), GridFunction(f.front().grid_ptr(), 0.0));
  for (int i = 0; i < n; ++i) {
    const auto& row = derivs[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) < K + 1) throw CapabilityError("compose_series: not enough derivatives of G");
    std::vector<Jet> g;
    for (int j = 0; j <= K; ++j) g.push_back(Jet::constant(row[static_cast<std::size_t>(j)]));
    JetSeries delta(static_cast<std::size_t>(K + 1));
    for (int k = 1; k <= K && k < static_cast<int>(f.size()); ++k) delta[static_cast<std::size_t>(k)] = Jet::constant(f[static_cast<std::size_t>(k)][i]);
    const auto c = compose(g, delta, K);
    for (int k = 0; k <= K; ++k) out[static_cast<std::size_t>(k)][i] = c[static_cast<std::size_t>(k)].v;
  }
  return out;
}

}  // namespace spiralwave
