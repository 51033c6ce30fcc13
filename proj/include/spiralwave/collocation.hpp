#pragma once

#include <Eigen/Sparse>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spiralwave/errors.hpp"

namespace spiralwave {

// Three-stage Lobatto IIIa collocation (Simpson form) for y' = F(r, y, p) on a mesh,
// with boundary conditions g(y(a), y(b), p) = 0 and unknown parameters p.
//
// A Problem provides
//   static constexpr int dim, params;
//   void rhs(double r, const double* y, const double* p, double* F) const;
//   void jac(double r, const double* y, const double* p, double* Jy, double* Jp) const;  // row-major
//   void bc(const double* ya, const double* yb, const double* p, double* g) const;         // dim+params rows
//   void bc_jac(const double* ya, const double* yb, const double* p,
//               double* Ga, double* Gb, double* Gp) const;

struct CollocationOptions {
  double tol = 1e-10;          // max-norm of the scaled residual
  int max_iterations = 60;
  double min_damping = 1.0 / 1024.0;
};

struct CollocationResult {
  std::vector<double> y;  // node-major, size N*dim
  std::vector<double> p;
  int iterations = 0;
  int qr_fallbacks = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
  std::vector<double> damping_history;
};

template <class Problem>
class LobattoSolver {
 public:
  static constexpr int D = Problem::dim;
  static constexpr int P = Problem::params;

  LobattoSolver(const Problem& problem, std::vector<double> mesh) : pb_(problem), x_(std::move(mesh)) {
    if (x_.size() < 3) throw RangeError("LobattoSolver: mesh too small");
  }

  int unknowns() const { return static_cast<int>(x_.size()) * D + P; }

  // Residual of the collocation system; interval rows are divided by h.
  Eigen::VectorXd residual(const Eigen::VectorXd& z) const {
    const int N = static_cast<int>(x_.size());
    Eigen::VectorXd res(unknowns());
    const double* p = z.data() + N * D;
    std::vector<double> F(static_cast<std::size_t>(N * D));
    for (int i = 0; i < N; ++i) pb_.rhs(x_[i], z.data() + i * D, p, &F[static_cast<std::size_t>(i * D)]);
    double ym[D], Fm[D];
    for (int i = 0; i + 1 < N; ++i) {
      const double h = x_[i + 1] - x_[i];
      const double* ya = z.data() + i * D;
      const double* yb = z.data() + (i + 1) * D;
      const double* Fa = &F[static_cast<std::size_t>(i * D)];
      const double* Fb = &F[static_cast<std::size_t>((i + 1) * D)];
      for (int a = 0; a < D; ++a) ym[a] = 0.5 * (ya[a] + yb[a]) - h / 8.0 * (Fb[a] - Fa[a]);
      pb_.rhs(0.5 * (x_[i] + x_[i + 1]), ym, p, Fm);
      for (int a = 0; a < D; ++a) res(i * D + a) = (yb[a] - ya[a]) / h - (Fa[a] + 4.0 * Fm[a] + Fb[a]) / 6.0;
    }
    pb_.bc(z.data(), z.data() + (N - 1) * D, p, res.data() + (N - 1) * D);
    return res;
  }

  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& z) const {
    const int N = static_cast<int>(x_.size());
    const int M = unknowns();
    const double* p = z.data() + N * D;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>((N - 1) * D * (2 * D + P) * 2 + (D + P) * (2 * D + P)));

    std::vector<double> F(static_cast<std::size_t>(N * D)), J(static_cast<std::size_t>(N * D * D)),
        Jp(static_cast<std::size_t>(N * D * std::max(P, 1)));
    for (int i = 0; i < N; ++i) {
      pb_.rhs(x_[i], z.data() + i * D, p, &F[static_cast<std::size_t>(i * D)]);
      pb_.jac(x_[i], z.data() + i * D, p, &J[static_cast<std::size_t>(i * D * D)],
              &Jp[static_cast<std::size_t>(i * D * std::max(P, 1))]);
    }
    double ym[D], Jm[D * D], Jpm[D * (P > 0 ? P : 1)];
    double dA[D * D], dB[D * D], dP[D * (P > 0 ? P : 1)];
    for (int i = 0; i + 1 < N; ++i) {
      const double h = x_[i + 1] - x_[i];
      const double* ya = z.data() + i * D;
      const double* yb = z.data() + (i + 1) * D;
      const double* Fa = &F[static_cast<std::size_t>(i * D)];
      const double* Fb = &F[static_cast<std::size_t>((i + 1) * D)];
      const double* Ja = &J[static_cast<std::size_t>(i * D * D)];
      const double* Jb = &J[static_cast<std::size_t>((i + 1) * D * D)];
      const double* Jpa = &Jp[static_cast<std::size_t>(i * D * std::max(P, 1))];
      const double* Jpb = &Jp[static_cast<std::size_t>((i + 1) * D * std::max(P, 1))];
      for (int a = 0; a < D; ++a) ym[a] = 0.5 * (ya[a] + yb[a]) - h / 8.0 * (Fb[a] - Fa[a]);
      pb_.jac(0.5 * (x_[i] + x_[i + 1]), ym, p, Jm, Jpm);
      // dym/dya = I/2 + h/8 Ja, dym/dyb = I/2 - h/8 Jb
      for (int a = 0; a < D; ++a) {
        for (int b = 0; b < D; ++b) {
          double ma = 0.0, mb = 0.0;
          for (int c = 0; c < D; ++c) {
            const double da = (c == b ? 0.5 : 0.0) + h / 8.0 * Ja[c * D + b];
            const double db = (c == b ? 0.5 : 0.0) - h / 8.0 * Jb[c * D + b];
            ma += Jm[a * D + c] * da;
            mb += Jm[a * D + c] * db;
          }
          const double id = (a == b) ? 1.0 / h : 0.0;
          dA[a * D + b] = -id - (Ja[a * D + b] + 4.0 * ma) / 6.0;
          dB[a * D + b] = id - (4.0 * mb + Jb[a * D + b]) / 6.0;
        }
        for (int k = 0; k < P; ++k) {
          double mp = Jpm[a * P + k];
          for (int c = 0; c < D; ++c) mp += Jm[a * D + c] * (-h / 8.0) * (Jpb[c * P + k] - Jpa[c * P + k]);
          dP[a * P + k] = -(Jpa[a * P + k] + 4.0 * mp + Jpb[a * P + k]) / 6.0;
        }
      }
      for (int a = 0; a < D; ++a) {
        const int row = i * D + a;
        for (int b = 0; b < D; ++b) {
          trip.emplace_back(row, i * D + b, dA[a * D + b]);
          trip.emplace_back(row, (i + 1) * D + b, dB[a * D + b]);
        }
        for (int k = 0; k < P; ++k) trip.emplace_back(row, N * D + k, dP[a * P + k]);
      }
    }
    constexpr int NB = D + P;
    double Ga[NB * D], Gb[NB * D], Gp[NB * (P > 0 ? P : 1)];
    pb_.bc_jac(z.data(), z.data() + (N - 1) * D, p, Ga, Gb, Gp);
    for (int a = 0; a < NB; ++a) {
      const int row = (N - 1) * D + a;
      for (int b = 0; b < D; ++b) {
        trip.emplace_back(row, b, Ga[a * D + b]);
        trip.emplace_back(row, (N - 1) * D + b, Gb[a * D + b]);
      }
      for (int k = 0; k < P; ++k) trip.emplace_back(row, N * D + k, Gp[a * P + k]);
    }
    Eigen::SparseMatrix<double> A(M, M);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
  }

  // Damped Newton from the initial guess z (node-major y followed by p).
  CollocationResult solve(Eigen::VectorXd z, const CollocationOptions& opt = {}) const {
    if (z.size() != unknowns()) throw RangeError("LobattoSolver: initial guess has wrong size");
    CollocationResult out;
    Eigen::VectorXd res = residual(z);
    double norm = res.lpNorm<Eigen::Infinity>();
    out.residual_history.push_back(norm);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    for (int it = 0; it < opt.max_iterations && !(norm <= opt.tol); ++it) {
      auto A = jacobian(z);
      if (it == 0) lu.analyzePattern(A);
      lu.factorize(A);
      if (lu.info() != Eigen::Success)
        throw SolverError("collocation: singular Jacobian at iteration " + std::to_string(it), out.damping_history);
      Eigen::VectorXd step = lu.solve(res);
      // SparseLU's threshold pivoting occasionally loses the bordered structure (parameter column,
      // boundary rows at the bottom); fall back to QR when the step does not solve the system.
      if (!step.allFinite() || Eigen::VectorXd(A * step - res).template lpNorm<Eigen::Infinity>() > 1e-8 * std::max(1.0, norm)) {
        A.makeCompressed();
        Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr(A);
        if (qr.info() != Eigen::Success)
          throw SolverError("collocation: QR fallback failed at iteration " + std::to_string(it), out.damping_history);
        step = qr.solve(res);
        ++out.qr_fallbacks;
      }
      if (!step.allFinite()) throw SolverError("collocation: non-finite Newton step", out.damping_history);
      const double phi0 = res.squaredNorm();
      double lambda = 1.0;
      bool accepted = false;
      while (lambda >= opt.min_damping) {
        Eigen::VectorXd trial = z - lambda * step;
        Eigen::VectorXd tres = residual(trial);
        if (tres.allFinite() && tres.squaredNorm() <= (1.0 - 1e-4 * lambda) * phi0) {
          z = std::move(trial);
          res = std::move(tres);
          accepted = true;
          break;
        }
        lambda *= 0.5;
      }
      out.damping_history.push_back(accepted ? lambda : 0.0);
      if (!accepted) throw SolverError("collocation: line search failed (Newton diverging)", out.damping_history);
      norm = res.lpNorm<Eigen::Infinity>();
      out.residual_history.push_back(norm);
      out.iterations = it + 1;
    }
    out.residual = norm;
    if (!(norm <= opt.tol))
      throw SolverError("collocation: no convergence, residual " + std::to_string(norm), out.damping_history);
    const int N = static_cast<int>(x_.size());
    out.y.assign(z.data(), z.data() + N * D);
    out.p.assign(z.data() + N * D, z.data() + N * D + P);
    return out;
  }

  const std::vector<double>& mesh() const { return x_; }

 private:
  const Problem& pb_;
  std::vector<double> x_;
};

}  // namespace spiralwave
