#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracle/bessel_oracle.hpp"
#include "spiralwave/specfun.hpp"

using namespace spiralwave;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i)
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  return out;
}

}  // namespace

TEST(Bessel, ValuesAtZero) {
  const auto b0 = bessel_quad(0, 0.0, false);
  EXPECT_EQ(b0.I, 1.0);
  EXPECT_TRUE(b0.k_infinite);
  EXPECT_TRUE(std::isinf(b0.K));
  EXPECT_EQ(bessel_quad(3, 0.0, false).I, 0.0);
  EXPECT_EQ(bessel_quad(1, 0.0, false).Iprime, 0.5);
}

TEST(Bessel, OracleSpotPoints) {
  for (const auto& p : oracle::kBesselSpots) {
    const auto b = bessel_quad(p.n, p.s, true);
    EXPECT_LE(rel(b.I, p.i_scaled), 1e-12) << "I n=" << p.n << " s=" << p.s;
    EXPECT_LE(rel(b.Iprime, p.ip_scaled), 1e-12) << "I' n=" << p.n << " s=" << p.s;
    EXPECT_LE(rel(b.K, p.k_scaled), 1e-12) << "K n=" << p.n << " s=" << p.s;
    EXPECT_LE(rel(b.Kprime, p.kp_scaled), 1e-12) << "K' n=" << p.n << " s=" << p.s;
  }
}

TEST(Bessel, WronskianUnscaled) {
  for (int n : {0, 1, 2, 3, 5}) {
    for (double s : log_spaced(1e-3, 700.0, 400)) {
      const auto b = bessel_quad(n, s, false);
      EXPECT_NEAR(s * (b.Iprime * b.K - b.Kprime * b.I), 1.0, 1e-12) << "n=" << n << " s=" << s;
    }
  }
  const auto b = bessel_quad(1, 10.0, false);
  EXPECT_NEAR(10.0 * (b.Iprime * b.K - b.Kprime * b.I), 1.0, 1e-12);
}

TEST(Bessel, ScaledAgreesWithUnscaled) {
  for (int n : {0, 1, 4}) {
    for (double s : log_spaced(1e-3, 650.0, 60)) {
      const auto u = bessel_quad(n, s, false);
      const auto c = bessel_quad(n, s, true);
      if (u.I > 0.0) {
        EXPECT_LE(rel(c.I * std::exp(s), u.I), 1e-13);
      }
      if (u.K > 1e-300) {
        EXPECT_LE(rel(c.K * std::exp(-s), u.K), 1e-13);
      }
    }
  }
}

TEST(Bessel, ScaledFiniteToHugeArguments) {
  for (double s : {1e3, 1e5, 1e8}) {
    const auto b = bessel_quad(2, s, true);
    EXPECT_TRUE(std::isfinite(b.I) && std::isfinite(b.K) && std::isfinite(b.Iprime) &&
                std::isfinite(b.Kprime));
    EXPECT_NEAR(s * (b.Iprime * b.K - b.Kprime * b.I), 1.0, 1e-12);
  }
}

TEST(Bessel, OverflowDirectsToScaled) {
  EXPECT_THROW(bessel_quad(1, 750.0, false), OverflowError);
  EXPECT_NO_THROW(bessel_quad(1, 750.0, true));
  EXPECT_THROW(bessel_quad(-1, 1.0, true), RangeError);
}

TEST(Bessel, BranchesAgreeOnOverlapBands) {
  // Series vs Miller around s = 20, Miller vs Hankel around s = 500.
  for (int n : {0, 1, 3, 7}) {
    for (double s : {18.0, 19.5, 21.0, 23.0}) {
      const double series = detail::bessel_i_series(n, s) * std::exp(-s);
      double miller = 0.0, miller1 = 0.0;
      detail::bessel_i_miller_scaled(n, s, miller, miller1);
      EXPECT_LE(rel(miller, series), 1e-13) << n << " " << s;
    }
    for (double s : {450.0, 520.0}) {
      double miller = 0.0, miller1 = 0.0;
      detail::bessel_i_miller_scaled(n, s, miller, miller1);
      EXPECT_LE(rel(detail::bessel_i_hankel_scaled(n, s), miller), 1e-13) << n << " " << s;
    }
  }
  // K series vs continued fraction around s = 2.
  for (double s : {1.6, 2.0, 2.4}) {
    double k0 = 0, k1 = 0, c0 = 0, c1 = 0;
    detail::bessel_k01_series(s, k0, k1);
    detail::bessel_k01_cf2_scaled(s, c0, c1);
    EXPECT_LE(rel(k0 * std::exp(s), c0), 1e-13);
    EXPECT_LE(rel(k1 * std::exp(s), c1), 1e-13);
  }
}

TEST(Bessel, Monotonicity) {
  for (int n : {0, 1, 2, 5}) {
    double prev_i = -1.0, prev_k = 1e308;
    for (double s : log_spaced(1e-2, 600.0, 300)) {
      const auto b = bessel_quad(n, s, false);
      EXPECT_GT(b.I, prev_i);
      EXPECT_LT(b.K, prev_k);
      prev_i = b.I;
      prev_k = b.K;
    }
  }
}

TEST(Bessel, LeadingAsymptotics) {
  const double tiny = 1e-6;
  const auto z1 = leading_asymptotics(1, tiny, AsymptoticDirection::zero);
  EXPECT_NEAR(bessel_quad(1, tiny, false).I / (tiny / 2.0), 1.0, 1e-9);
  EXPECT_NEAR(bessel_quad(1, tiny, false).I / z1.I, 1.0, 1e-9);

  const auto b50 = bessel_quad(1, 50.0, false);
  EXPECT_NEAR(b50.K * std::exp(50.0) * std::sqrt(2.0 * 50.0 / M_PI), 1.0, 0.02);
  const auto inf50 = leading_asymptotics(1, 50.0, AsymptoticDirection::infinity);
  EXPECT_NEAR(b50.K / inf50.K, 1.0, 0.02);
  EXPECT_NEAR(b50.I / inf50.I, 1.0, 0.02);

  const double s = 1e-4;
  const auto k2 = bessel_quad(2, s, false);
  EXPECT_NEAR(k2.K * std::pow(s / 2.0, 2) / (std::tgamma(2.0) / 2.0), 1.0, 1e-6);
  const auto z2 = leading_asymptotics(2, s, AsymptoticDirection::zero);
  EXPECT_NEAR(k2.Kprime / z2.Kprime, 1.0, 1e-6);
  EXPECT_NEAR(k2.Iprime / z2.Iprime, 1.0, 1e-6);
}
