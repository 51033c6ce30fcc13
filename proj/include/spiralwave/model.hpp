#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spiralwave/errors.hpp"

namespace spiralwave {

/// Real polynomial with coefficients in ascending powers.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
    if (coeffs_.empty()) coeffs_.push_back(0.0);
  }

  const std::vector<double>& coefficients() const noexcept { return coeffs_; }
  int degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }

  /// m-th derivative at x, evaluated by Horner on the differentiated coefficients.
  double derivative(double x, int m) const {
    if (m < 0) throw RangeError("negative derivative order");
    const int deg = degree();
    if (m > deg) return 0.0;
    double acc = 0.0;
    for (int k = deg; k >= m; --k) {
      double falling = 1.0;
      for (int i = 0; i < m; ++i) falling *= static_cast<double>(k - i);
      acc = acc * x + falling * coeffs_[static_cast<std::size_t>(k)];
    }
    return acc;
  }

  double operator()(double x) const { return derivative(x, 0); }

 private:
  std::vector<double> coeffs_{0.0};
};

/// Evaluator (x, m) -> D^m g(x).
using DerivativeEvaluator = std::function<double(double, int)>;

/// A lambda-omega model: amplitude law lambda, frequency law omega, arm count n.
///
/// Immutable after construction. The derived quantities F(x) = x lambda(x) and
/// omega~(x) = x omega(x) are evaluated through Leibniz on the supplied
/// derivatives, so the model must provide one more derivative than requested.
class ModelFunctions {
 public:
  static constexpr int kUnbounded = std::numeric_limits<int>::max();

  ModelFunctions(std::string name, int n, DerivativeEvaluator lambda, DerivativeEvaluator omega,
                 int max_derivative_order = kUnbounded)
      : name_(std::move(name)),
        n_(n),
        lambda_(std::move(lambda)),
        omega_(std::move(omega)),
        max_order_(max_derivative_order) {
    if (n_ < 0) throw RangeError("arm count n must be non-negative");
    d_ = -lambda_(1.0, 1);
  }

  static ModelFunctions from_polynomials(std::string name, int n, Polynomial lambda,
                                         Polynomial omega) {
    auto lp = std::make_shared<const Polynomial>(std::move(lambda));
    auto op = std::make_shared<const Polynomial>(std::move(omega));
    ModelFunctions m(
        std::move(name), n, [lp](double x, int k) { return lp->derivative(x, k); },
        [op](double x, int k) { return op->derivative(x, k); });
    m.lambda_poly_ = lp;
    m.omega_poly_ = op;
    return m;
  }

  const std::string& name() const noexcept { return name_; }
  int n() const noexcept { return n_; }
  /// d = -lambda'(1).
  double d() const noexcept { return d_; }
  int max_derivative_order() const noexcept { return max_order_; }

  double lambda(double x, int m = 0) const {
    check_order(m);
    return lambda_(x, m);
  }
  double omega(double x, int m = 0) const {
    check_order(m);
    return omega_(x, m);
  }

  /// Polynomial coefficients when the model was built from polynomials.
  const Polynomial* lambda_polynomial() const noexcept { return lambda_poly_.get(); }
  const Polynomial* omega_polynomial() const noexcept { return omega_poly_.get(); }

 private:
  void check_order(int m) const {
    if (m < 0) throw RangeError("negative derivative order");
    if (m > max_order_)
      throw CapabilityError("model '" + name_ + "' supplies derivatives up to order " +
                            std::to_string(max_order_) + ", requested " + std::to_string(m));
  }

  std::string name_;
  int n_;
  DerivativeEvaluator lambda_;
  DerivativeEvaluator omega_;
  int max_order_;
  double d_ = 0.0;
  std::shared_ptr<const Polynomial> lambda_poly_;
  std::shared_ptr<const Polynomial> omega_poly_;
};

namespace detail {

// D^m (x g(x)) = x D^m g + m D^{m-1} g
template <class Eval>
std::vector<double> times_x_derivs(Eval&& g, double x, int max_order) {
  if (max_order < 0) throw RangeError("max_order must be non-negative");
  std::vector<double> out(static_cast<std::size_t>(max_order) + 1);
  for (int m = 0; m <= max_order; ++m) {
    double value = x * g(x, m);
    if (m > 0) value += m * g(x, m - 1);
    out[static_cast<std::size_t>(m)] = value;
  }
  return out;
}

}  // namespace detail

/// [F(x), DF(x), ..., D^m F(x)] with F(x) = x lambda(x).
inline std::vector<double> eval_F_derivs(const ModelFunctions& model, double x, int max_order) {
  return detail::times_x_derivs([&](double t, int m) { return model.lambda(t, m); }, x, max_order);
}

/// [w(x), Dw(x), ..., D^m w(x)] with w(x) = x omega(x).
inline std::vector<double> eval_omega_tilde_derivs(const ModelFunctions& model, double x,
                                                   int max_order) {
  return detail::times_x_derivs([&](double t, int m) { return model.omega(t, m); }, x, max_order);
}

/// Single-order convenience: D^m F(x).
inline double F_deriv(const ModelFunctions& model, double x, int m) {
  double value = x * model.lambda(x, m);
  if (m > 0) value += m * model.lambda(x, m - 1);
  return value;
}

/// Single-order convenience: D^m omega~(x).
inline double omega_tilde_deriv(const ModelFunctions& model, double x, int m) {
  double value = x * model.omega(x, m);
  if (m > 0) value += m * model.omega(x, m - 1);
  return value;
}

struct HypothesisCheck {
  std::string name;
  bool passed = false;
  /// Signed margin; positive means the check holds with that much room.
  double worst_margin = 0.0;
  /// Where the worst margin was attained (NaN for point checks).
  double worst_at = std::numeric_limits<double>::quiet_NaN();
};

struct HypothesisReport {
  std::vector<HypothesisCheck> checks;
  std::vector<double> samples;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const HypothesisCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline constexpr double kHypothesisTolerance = 1e-12;
inline constexpr double kConcavityMargin = 0.2;

/// Checks lambda(1) = 0, lambda'(1) < 0, lambda(0) = 1 and strict concavity of
/// x lambda(x) on a geometric sample of (0, 1 + margin].
inline HypothesisReport validate_hypotheses(const ModelFunctions& model, int sample_count = 400) {
  if (sample_count < 100) throw RangeError("validate_hypotheses needs at least 100 samples");
  HypothesisReport report;

  const double l1 = model.lambda(1.0);
  report.checks.push_back({"lambda(1)=0", std::abs(l1) <= kHypothesisTolerance,
                           kHypothesisTolerance - std::abs(l1), 1.0});
  const double dl1 = model.lambda(1.0, 1);
  report.checks.push_back({"lambda'(1)<0", dl1 < 0.0, -dl1, 1.0});
  const double l0 = model.lambda(0.0);
  report.checks.push_back({"lambda(0)=1", std::abs(l0 - 1.0) <= kHypothesisTolerance,
                           kHypothesisTolerance - std::abs(l0 - 1.0), 0.0});

  // Geometric sample of (0, 1.2]; x = 0 itself is excluded since GL has
  // D^2 F(0) = 0 exactly.
  const double top = 1.0 + kConcavityMargin;
  const double bottom = 1e-6;
  report.samples.resize(static_cast<std::size_t>(sample_count));
  HypothesisCheck concave{"d2(x*lambda)<0", true, std::numeric_limits<double>::infinity(), top};
  for (int i = 0; i < sample_count; ++i) {
    const double t = static_cast<double>(i) / (sample_count - 1);
    const double x = bottom * std::pow(top / bottom, t);
    report.samples[static_cast<std::size_t>(i)] = x;
    const double margin = -F_deriv(model, x, 2);
    if (margin < concave.worst_margin) {
      concave.worst_margin = margin;
      concave.worst_at = x;
    }
    if (!(margin > 0.0)) concave.passed = false;
  }
  report.checks.push_back(concave);
  return report;
}

namespace models {

/// lambda = 1 - x^2, omega = -x^2.
inline ModelFunctions ginzburg_landau(int n = 1) {
  return ModelFunctions::from_polynomials("ginzburg-landau", n, Polynomial({1.0, 0.0, -1.0}),
                                          Polynomial({0.0, 0.0, -1.0}));
}

/// lambda = 1 - x, omega = x - 1 (the O(q) part of 1 + q (x - 1)).
inline ModelFunctions greenberg(int n = 1) {
  return ModelFunctions::from_polynomials("greenberg", n, Polynomial({1.0, -1.0}),
                                          Polynomial({-1.0, 1.0}));
}

}  // namespace models

}  // namespace spiralwave
