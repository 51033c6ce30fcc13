#pragma once

// Modified Bessel functions I_n, K_n of integer order, with first derivatives,
// in plain and exponentially scaled form.
//
// I_n:  ascending series for s <= 20, Miller's downward recurrence normalised
//       by the Hankel expansion of I_0 for 20 < s <= 500, Hankel expansion of
//       I_n itself beyond.
// K_n:  series for K_0, K_1 when s <= 2, Steed's continued fraction beyond,
//       then upward recurrence in the order.

#include <cmath>
#include <limits>
#include <numbers>

#include "spiralwave/errors.hpp"

namespace spiralwave {

struct BesselQuad {
  double s = 0.0;
  double I = 0.0;
  double Iprime = 0.0;
  double K = 0.0;
  double Kprime = 0.0;
  /// I entries carry exp(-s), K entries carry exp(s).
  bool scaled = false;
  /// K_n(0) is infinite.
  bool k_infinite = false;
};

namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286061;
inline constexpr double kIseriesSwitch = 20.0;
inline constexpr double kIhankelSwitch = 500.0;
inline constexpr double kKseriesSwitch = 2.0;
inline constexpr double kUnscaledLimit = 700.0;

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Unscaled I_n(x) by its ascending series; every term is positive.
inline double bessel_i_series(int n, double x) {
  const double half = 0.5 * x;
  const double q = half * half;
  double term = std::pow(half, n) / factorial(n);
  double sum = term;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * (k + n));
    sum += term;
    if (term <= sum * 1e-18) break;
  }
  return sum;
}

// exp(-x) I_nu(x) from the Hankel expansion; valid for x >> nu^2.
inline double bessel_i_hankel_scaled(int nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    if (std::abs(term) > prev) break;  // asymptotic series started to diverge
    sum += term;
    prev = std::abs(term);
    if (prev <= std::abs(sum) * 1e-18) break;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * x);
}

// exp(-x) I_n(x) and exp(-x) I_{n+1}(x) by Miller's algorithm.
inline void bessel_i_miller_scaled(int n, double x, double& in, double& in1) {
  const int start = n + static_cast<int>(std::ceil(std::sqrt(80.0 * x))) + 20;
  double above = 0.0;  // I_{k+1}
  double cur = 1e-300;  // I_k
  double at_n = 0.0;
  double at_n1 = 0.0;
  for (int k = start; k > 0; --k) {
    const double below = above + (2.0 * k / x) * cur;  // I_{k-1}
    above = cur;
    cur = below;
    if (k - 1 == n + 1) at_n1 = cur;
    if (k - 1 == n) at_n = cur;
    if (cur > 1e250) {
      cur *= 1e-250;
      above *= 1e-250;
      at_n *= 1e-250;
      at_n1 *= 1e-250;
    }
  }
  // cur now holds the unnormalised I_0.
  const double i0 = bessel_i_hankel_scaled(0, x);
  in = at_n / cur * i0;
  in1 = at_n1 / cur * i0;
}

// Unscaled K_0, K_1 for 0 < x <= 2.
inline void bessel_k01_series(double x, double& k0, double& k1) {
  const double q = 0.25 * x * x;
  const double lg = std::log(0.5 * x);
  const double i0 = bessel_i_series(0, x);
  const double i1 = bessel_i_series(1, x);

  // K_0 = -(ln(x/2) + gamma) I_0 + sum_{k>=1} q^k/(k!)^2 H_k
  double term = 1.0;
  double harmonic = 0.0;
  double sum0 = 0.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    harmonic += 1.0 / k;
    const double add = term * harmonic;
    sum0 += add;
    if (add <= sum0 * 1e-18) break;
  }
  k0 = -(lg + kEulerGamma) * i0 + sum0;

  // K_1 = 1/x + ln(x/2) I_1 - (x/4) sum_{k>=0} (psi(k+1) + psi(k+2)) q^k / (k!(k+1)!)
  double t = 1.0;
  double psi1 = -kEulerGamma;  // psi(k+1)
  double sum1 = 0.0;
  for (int k = 0; k < 200; ++k) {
    if (k > 0) {
      t *= q / (static_cast<double>(k) * (k + 1));
      psi1 += 1.0 / k;
    }
    const double psi2 = psi1 + 1.0 / (k + 1);
    const double add = t * (psi1 + psi2);
    sum1 += add;
    if (k > 2 && std::abs(add) <= std::abs(sum1) * 1e-18) break;
  }
  k1 = 1.0 / x + lg * i1 - 0.25 * x * sum1;
}

// exp(x) K_0(x), exp(x) K_1(x) for x > 2 by Steed's method (Temme's CF2).
inline void bessel_k01_cf2_scaled(double x, double& k0, double& k1) {
  constexpr double a1 = 0.25;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < 100000; ++i) {
    a -= 2.0 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 1e-17) break;
  }
  h *= a1;
  k0 = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
  k1 = k0 * (x + 0.5 - h) / x;
}

}  // namespace detail

/// I_n, I_n', K_n, K_n' at s >= 0 for 0 <= n <= 20.
inline BesselQuad bessel_quad(int n, double s, bool scaled) {
  if (n < 0 || n > 20) throw RangeError("bessel_quad supports 0 <= n <= 20");
  if (!(s >= 0.0) || !std::isfinite(s)) throw RangeError("bessel_quad needs finite s >= 0");
  if (!scaled && s > detail::kUnscaledLimit)
    throw OverflowError("unscaled Bessel values overflow for s > 700; request the scaled form");

  BesselQuad out;
  out.s = s;
  out.scaled = scaled;

  if (s == 0.0) {
    out.I = (n == 0) ? 1.0 : 0.0;
    out.Iprime = (n == 1) ? 0.5 : 0.0;
    out.K = std::numeric_limits<double>::infinity();
    out.Kprime = -std::numeric_limits<double>::infinity();
    out.k_infinite = true;
    return out;
  }

  // --- I_n, I_{n+1}, scaled by exp(-s)
  double in_s = 0.0;
  double in1_s = 0.0;
  if (s <= detail::kIseriesSwitch) {
    const double e = std::exp(-s);
    in_s = detail::bessel_i_series(n, s) * e;
    in1_s = detail::bessel_i_series(n + 1, s) * e;
  } else if (s <= detail::kIhankelSwitch) {
    detail::bessel_i_miller_scaled(n, s, in_s, in1_s);
  } else {
    in_s = detail::bessel_i_hankel_scaled(n, s);
    in1_s = detail::bessel_i_hankel_scaled(n + 1, s);
  }
  const double ip_s = in1_s + (n / s) * in_s;

  // --- K_0, K_1 scaled by exp(s), then upward to n+1
  double k0 = 0.0;
  double k1 = 0.0;
  if (s <= detail::kKseriesSwitch) {
    detail::bessel_k01_series(s, k0, k1);
    const double e = std::exp(s);
    k0 *= e;
    k1 *= e;
  } else {
    detail::bessel_k01_cf2_scaled(s, k0, k1);
  }
  double km = k0;
  double kc = k1;
  for (int k = 1; k <= n; ++k) {
    const double kp = km + (2.0 * k / s) * kc;
    km = kc;
    kc = kp;
  }
  // km = K_n, kc = K_{n+1}
  const double kn_s = km;
  const double kp_s = -kc + (n / s) * km;

  if (scaled) {
    out.I = in_s;
    out.Iprime = ip_s;
    out.K = kn_s;
    out.Kprime = kp_s;
  } else {
    const double ep = std::exp(s);
    const double em = std::exp(-s);
    out.I = in_s * ep;
    out.Iprime = ip_s * ep;
    out.K = kn_s * em;
    out.Kprime = kp_s * em;
  }
  return out;
}

enum class AsymptoticDirection { zero, infinity };

/// Leading-order small-s or large-s forms of I_n, I_n', K_n, K_n' (unscaled).
///
/// Near zero: K_n ~ Gamma(n)/2 (s/2)^-n, I_n ~ (s/2)^n / Gamma(n+1) (K_0 ~ -ln(s/2) - gamma).
/// Near infinity: K_n ~ e^-s sqrt(pi/2s), I_n ~ e^s / sqrt(2 pi s).
inline BesselQuad leading_asymptotics(int n, double s, AsymptoticDirection direction) {
  if (n < 0) throw RangeError("order must be non-negative");
  if (!(s > 0.0)) throw RangeError("leading_asymptotics needs s > 0");
  BesselQuad out;
  out.s = s;
  if (direction == AsymptoticDirection::zero) {
    const double h = 0.5 * s;
    out.I = std::pow(h, n) / std::tgamma(n + 1.0);
    out.Iprime = (n == 0) ? 0.5 * h : n / (2.0 * std::tgamma(n + 1.0)) * std::pow(h, n - 1);
    if (n == 0) {
      out.K = -std::log(h) - detail::kEulerGamma;
      out.Kprime = -1.0 / s;
    } else {
      out.K = 0.5 * std::tgamma(n) * std::pow(h, -n);
      out.Kprime = -0.25 * n * std::tgamma(n) * std::pow(h, -n - 1);
    }
  } else {
    out.K = std::exp(-s) * std::sqrt(std::numbers::pi / (2.0 * s));
    out.Kprime = -out.K;
    out.I = std::exp(s) / std::sqrt(2.0 * std::numbers::pi * s);
    out.Iprime = out.I;
  }
  return out;
}

}  // namespace spiralwave
