#pragma once

#include "doa/array_signal.hpp"
#include "doa/circulant.hpp"
#include "doa/error.hpp"
#include "doa/types.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace doa {

struct SolverConfig {
  double lambda = 0.1;
  double rho = 1.0;
  int iterations = 100;
  /// ISTA step; defaults to 1 / sigma_max(A)^2 of the dictionary.
  std::optional<double> mu;
};

/// S_kappa(z) = exp(j arg z) max(|z| - kappa, 0), with S_kappa(0) = 0.
inline Complex soft_threshold(Complex z, double kappa) {
  const double mag = std::abs(z);
  if (mag <= kappa) return {0.0, 0.0};
  return z * ((mag - kappa) / mag);
}

inline CVector soft_threshold(const CVector& z, double kappa) {
  CVector out(z.size());
  for (Index i = 0; i < z.size(); ++i) out[i] = soft_threshold(z[i], kappa);
  return out;
}

namespace detail {

inline void validate_solver(const Dictionary& dic, const CVector& y, const SolverConfig& cfg) {
  require(y.size() == dic.rows(), ErrorKind::Contract, "measurement length does not match dictionary");
  require(cfg.lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be positive");
  require(cfg.rho > 0.0, ErrorKind::InvalidArgument, "rho must be positive");
  require(cfg.iterations >= 1, ErrorKind::InvalidArgument, "iterations must be >= 1");
}

inline void check_finite(const CVector& v, int t, const char* solver) {
  if (!all_finite(v)) fail(ErrorKind::Divergence, std::string(solver) + " produced a non-finite iterate at t=" + std::to_string(t));
}

/// Hermitian positive definite factorization of A^H A + rho I.
inline Eigen::LLT<CMatrix> factor_regularized_gram(const Dictionary& dic, double rho) {
  CMatrix system = dic.gram();
  system.diagonal().array() += rho;
  Eigen::LLT<CMatrix> llt(system);
  require(llt.info() == Eigen::Success, ErrorKind::Numerical, "A^H A + rho I is not positive definite");
  return llt;
}

}  // namespace detail

using IterateObserver = std::function<void(int t, const CVector& iterate)>;

/// x(t) = S_{mu lambda}((I - mu A^H A) x(t-1) + mu A^H y), x(0) = 0.
inline CVector ista(const Dictionary& dic, const CVector& y, const SolverConfig& cfg, const IterateObserver& observe = {}) {
  detail::validate_solver(dic, y, cfg);
  const double mu = cfg.mu.value_or(dic.default_step());
  require(mu > 0.0 && mu <= dic.default_step() * (1.0 + 1e-9), ErrorKind::InvalidArgument,
          "ISTA step must lie in (0, 1/sigma_max^2]");
  const double kappa = mu * cfg.lambda;
  const CMatrix& a = dic.matrix();
  const CVector y_f = a.adjoint() * y;
  CVector x = CVector::Zero(dic.grid_size());
  for (int t = 1; t <= cfg.iterations; ++t) {
    const CVector residual = a * x;
    x = soft_threshold(x - mu * (a.adjoint() * residual) + mu * y_f, kappa);
    detail::check_finite(x, t, "ista");
    if (observe) observe(t, x);
  }
  return x;
}

/// Observer for the full ADMM system: receives x(t), z(t), v(t).
using AdmmObserver = std::function<void(int t, const CVector& x, const CVector& z, const CVector& v)>;

/// Scaled-form ADMM for the LASSO with kappa2 = rho * lambda. The iterate
/// satisfies the LASSO optimality conditions at weight kappa2 * rho, i.e.
/// at lambda exactly when rho = 1. Returns the sparse iterate z(T).
inline CVector admm(const Dictionary& dic, const CVector& y, const SolverConfig& cfg, const AdmmObserver& observe = {}) {
  detail::validate_solver(dic, y, cfg);
  const auto llt = detail::factor_regularized_gram(dic, cfg.rho);
  const double kappa = cfg.rho * cfg.lambda;
  const CVector y_f = dic.adjoint_apply_dense(y);
  const Index n = dic.grid_size();
  CVector x = CVector::Zero(n);
  CVector z = CVector::Zero(n);
  CVector v = CVector::Zero(n);
  for (int t = 1; t <= cfg.iterations; ++t) {
    x = llt.solve(y_f + cfg.rho * (z - v));
    z = soft_threshold(x + v, kappa);
    v = v + x - z;
    detail::check_finite(x, t, "admm");
    if (observe) observe(t, x, z, v);
  }
  return z;
}

/// LASSO weight whose optimality conditions admm() converges to.
inline double admm_effective_lambda(const SolverConfig& cfg) { return cfg.rho * cfg.rho * cfg.lambda; }

/// Compact approximate ADMM on the auxiliary variable u(t) = x(t) + v(t-1):
///   u(t) = Q (y_F + rho (2 S(u) - u)) + u - S(u),  Q = (A^H A + rho I)^-1,
/// read out as S_kappa2(u(T)).
inline CVector compact_admm(const Dictionary& dic, const CVector& y, const SolverConfig& cfg,
                            const IterateObserver& observe = {}) {
  detail::validate_solver(dic, y, cfg);
  const auto llt = detail::factor_regularized_gram(dic, cfg.rho);
  const double kappa = cfg.rho * cfg.lambda;
  const CVector y_f = dic.adjoint_apply_dense(y);
  CVector u = CVector::Zero(dic.grid_size());
  for (int t = 1; t <= cfg.iterations; ++t) {
    const CVector shrunk = soft_threshold(u, kappa);
    u = llt.solve(y_f + cfg.rho * (2.0 * shrunk - u)) + u - shrunk;
    detail::check_finite(u, t, "compact_admm");
    if (observe) observe(t, u);
  }
  return soft_threshold(u, kappa);
}

inline constexpr double kNearSingular = 1e-12;

/// Same iterate sequence as compact_admm with Q applied as
/// F^-1 diag(q) F, q = (F b + rho)^-1. Requires gamma = 1/2.
inline CVector fast_compact_admm(const Dictionary& dic, const CVector& y, const SolverConfig& cfg,
                                 const IterateObserver& observe = {}) {
  detail::validate_solver(dic, y, cfg);
  require(dic.circulant(), ErrorKind::StructureViolation, "fast compact ADMM needs gamma = 1/2");
  const double kappa = cfg.rho * cfg.lambda;
  CVector q = (dic.gram_col_dft().array() + cfg.rho).matrix();
  for (Index i = 0; i < q.size(); ++i) {
    require(std::abs(q[i]) >= kNearSingular, ErrorKind::NearSingular, "F b + rho has a vanishing entry");
  }
  q = q.cwiseInverse();
  const CVector y_f = dic.adjoint_apply(y);
  CVector u = CVector::Zero(dic.grid_size());
  for (int t = 1; t <= cfg.iterations; ++t) {
    const CVector shrunk = soft_threshold(u, kappa);
    const CVector r = y_f + cfg.rho * (2.0 * shrunk - u);
    u = ifft((q.array() * fft(r).array()).matrix()) + u - shrunk;
    detail::check_finite(u, t, "fast_compact_admm");
    if (observe) observe(t, u);
  }
  return soft_threshold(u, kappa);
}

/// 1/2 ||y - A x||^2 + lambda ||x||_1.
inline double lasso_objective(const Dictionary& dic, const CVector& y, double lambda, const CVector& x) {
  return 0.5 * (y - dic.apply(x)).squaredNorm() + lambda * x.cwiseAbs().sum();
}

/// Largest violation of the LASSO subgradient conditions; zero iff x is
/// optimal. With g = A^H (A x - y): |g_n + lambda x_n/|x_n|| on the support,
/// max(|g_n| - lambda, 0) off it.
inline double lasso_optimality_residual(const Dictionary& dic, const CVector& y, double lambda, const CVector& x) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be positive");
  const CVector g = dic.matrix().adjoint() * (dic.apply(x) - y);
  double worst = 0.0;
  for (Index n = 0; n < x.size(); ++n) {
    const double mag = std::abs(x[n]);
    const double violation = mag > 0.0 ? std::abs(g[n] + lambda * x[n] / mag) : std::max(std::abs(g[n]) - lambda, 0.0);
    worst = std::max(worst, violation);
  }
  return worst;
}

}  // namespace doa
