#pragma once

#include "doa/loss.hpp"
#include "doa/networks.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace doa {

// Reverse-mode gradients of the unfolded networks. Every complex quantity
// is differentiated as an independent (re, im) pair, and a complex gradient
// is stored as dL/dRe + j dL/dIm. With that convention the adjoint of a
// linear map is its conjugate transpose, so DFT/IDFT adjoints are the
// conjugate transforms.

/// Backward of S_beta at z. Adds the input gradient to g_in and returns
/// dL/dbeta. The kink |z| = beta gets subgradient 0.
inline double soft_threshold_backward(const CVector& z, double beta, const CVector& g_out, CVector& g_in) {
  double g_beta = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    const double r = std::abs(z[i]);
    if (r <= beta) continue;
    const Complex e = z[i] / r;
    const double radial = std::real(std::conj(g_out[i]) * e);
    g_in[i] += (1.0 - beta / r) * g_out[i] + (beta / r) * radial * e;
    g_beta -= radial;
  }
  return g_beta;
}

/// Adds the gradient of a scalar loss with respect to every parameter of
/// the network to grad, given dL/dx_out for a traced forward pass.
inline void accumulate_backward(const PreparedNetwork& prepared, const ForwardTrace& trace, const CVector& grad_output,
                                Network& grad) {
  const Network& net = prepared.network();
  require(trace.layers.size() == net.layers.size() && grad.layers.size() == net.layers.size() && grad.kind == net.kind,
          ErrorKind::Contract, "trace/network mismatch");
  const Index n = net.n;

  if (is_admm_family(net.kind)) {
    CVector g_u = CVector::Zero(n);
    grad.final_beta += soft_threshold_backward(trace.last, net.final_beta, grad_output, g_u);

    for (std::size_t t = net.layers.size(); t-- > 0;) {
      const LayerTrace& lt = trace.layers[t];
      const LayerOperator& op = prepared.op(t);
      // u_new = solved + u - a,  solved = K r,  r = y_F + rho (2a - u),  a = S(u)
      CVector g_prev = g_u;
      CVector g_a = -g_u;
      CVector g_r;
      double rho = 0.0;
      double* g_rho = nullptr;
      double* g_beta = nullptr;
      double beta = 0.0;

      if (net.kind == NetKind::AdmmNet) {
        const auto& p = std::get<DenseAdmmLayer>(net.layers[t]);
        auto& gp = std::get<DenseAdmmLayer>(grad.layers[t]);
        rho = p.rho;
        beta = p.beta;
        g_rho = &gp.rho;
        g_beta = &gp.beta;
        g_r = op.lu->adjoint().solve(g_u);
        // d(M^-1 r)/dM: g_M = -g_r s^H with M = W + rho I.
        gp.w.noalias() -= g_r * lt.mid.adjoint();
        gp.rho -= std::real(lt.mid.dot(g_r));
      } else {
        const auto& p = std::get<CirculantAdmmLayer>(net.layers[t]);
        auto& gp = std::get<CirculantAdmmLayer>(grad.layers[t]);
        rho = p.rho;
        beta = p.beta;
        g_rho = &gp.rho;
        g_beta = &gp.beta;
        const CVector& d = op.spectral_denominator;
        const CVector g_spec = ifft_adjoint(g_u);
        const CVector g_r_hat = (g_spec.array() / d.array().conjugate()).matrix();
        const CVector g_d = -(g_spec.array() * (lt.mid.array() / d.array()).conjugate()).matrix();
        if (net.kind == NetKind::CadmmNet) {
          gp.w += g_d;
        } else {
          gp.w += fft_adjoint(g_d);
        }
        gp.rho += g_d.real().sum();
        g_r = fft_adjoint(g_r_hat);
      }

      const CVector reflected = 2.0 * lt.shrunk - lt.input;
      *g_rho += std::real(g_r.dot(reflected));
      g_a += (2.0 * rho) * g_r;
      g_prev -= rho * g_r;
      *g_beta += soft_threshold_backward(lt.input, beta, g_a, g_prev);
      g_u = std::move(g_prev);
    }
    return;
  }

  // ISTA family: x_t = S_beta(W1 x_{t-1} + W2 y).
  const CVector& y = trace.drive;
  CVector g_x = grad_output;
  for (std::size_t t = net.layers.size(); t-- > 0;) {
    const LayerTrace& lt = trace.layers[t];
    CVector g_z = CVector::Zero(n);
    const double beta = std::visit([](const auto& p) { return p.beta; }, net.layers[t]);
    const double g_beta = soft_threshold_backward(lt.mid, beta, g_x, g_z);
    if (net.kind == NetKind::Lista) {
      const auto& p = std::get<DenseIstaLayer>(net.layers[t]);
      auto& gp = std::get<DenseIstaLayer>(grad.layers[t]);
      gp.beta += g_beta;
      gp.w1.noalias() += g_z * lt.input.adjoint();
      gp.w2.noalias() += g_z * y.adjoint();
      if (t > 0) g_x = p.w1.adjoint() * g_z;
    } else {
      auto& gp = std::get<ToeplitzIstaLayer>(grad.layers[t]);
      const ToeplitzOperator& toe = prepared.op(t).toeplitz;
      gp.beta += g_beta;
      gp.w1 += toe.generator_gradient(lt.input, g_z);
      gp.w2.noalias() += g_z * y.adjoint();
      if (t > 0) g_x = toe.adjoint_apply(g_z);
    }
  }
}

struct LossAndGradient {
  double loss = 0.0;
  Network grad;
};

/// Loss of one sample and its gradient with respect to all parameters.
inline LossAndGradient backward(const PreparedNetwork& prepared, const ForwardTrace& trace, const CVector& x_truth,
                                const LaplacianSmoother& smoother) {
  const LossValue lv = smoothed_nmse_with_grad(smoother, trace.output, x_truth);
  LossAndGradient out{lv.loss, zeros_like(prepared.network())};
  accumulate_backward(prepared, trace, lv.grad, out.grad);
  return out;
}

/// Loss of one sample under the network, recomputed from scratch.
inline double sample_loss(const Network& net, const Dictionary& dic, const CVector& y, const CVector& x_truth,
                          const LaplacianSmoother& smoother) {
  const PreparedNetwork prepared(net, dic);
  return smoothed_nmse_with_grad(smoother, prepared.forward(y), x_truth).loss;
}

/// Gradient entries smaller than this are compared in absolute terms: a
/// difference quotient cannot resolve them relative to an O(1) loss.
inline constexpr double kGradCheckFloor = 1e-6;

/// Difference step per family. ISTA layers put pre-threshold values close to
/// the kink, so they need the smaller step; the ADMM family's solves leave
/// roundoff that swamps the quotient at that step.
inline double grad_check_step(NetKind kind) { return is_admm_family(kind) ? 1e-3 : 1e-4; }

/// Points closer than this to a threshold kink are not checked: the
/// difference stencil would straddle the non-differentiable point.
inline constexpr double kGradCheckMinMargin = 1e-3;

/// Smallest distance | |z| - beta | over every soft-threshold input of the
/// forward pass at y.
inline double threshold_margin(const Network& net, const Dictionary& dic, const CVector& y) {
  const PreparedNetwork prepared(net, dic);
  ForwardTrace trace;
  prepared.forward(y, &trace);
  double margin = std::numeric_limits<double>::infinity();
  auto scan = [&](const CVector& z, double beta) {
    for (Index i = 0; i < z.size(); ++i) margin = std::min(margin, std::abs(std::abs(z[i]) - beta));
  };
  for (std::size_t t = 0; t < net.layers.size(); ++t) {
    const double beta = std::visit([](const auto& p) { return p.beta; }, net.layers[t]);
    scan(is_admm_family(net.kind) ? trace.layers[t].input : trace.layers[t].mid, beta);
  }
  if (is_admm_family(net.kind)) scan(trace.last, net.final_beta);
  return margin;
}

/// Fourth-order central differences over every real parameter against the
/// analytic gradient. Returns the largest error |a - n| / max(|a|, |n|, floor).
/// The default step is the family step, capped at a quarter of the threshold
/// margin.
inline double grad_check(const Network& net, const Dictionary& dic, const CVector& y, const CVector& x_truth,
                         std::optional<double> step = std::nullopt, const LossConfig& loss_cfg = {},
                         double floor = kGradCheckFloor) {
  const double eps = step.value_or(std::min(grad_check_step(net.kind), threshold_margin(net, dic, y) / 4.0));
  const LaplacianSmoother smoother(net.n, loss_cfg);
  Network analytic;
  {
    const PreparedNetwork prepared(net, dic);
    ForwardTrace trace;
    prepared.forward(y, &trace);
    analytic = backward(prepared, trace, x_truth, smoother).grad;
  }
  Network probe = net;
  auto probe_blocks = parameter_blocks(probe);
  const auto grad_blocks = parameter_blocks(analytic);
  double worst = 0.0;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    auto values = probe_blocks[b].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double h) {
        values[i] = saved + h;
        return sample_loss(probe, dic, y, x_truth, smoother);
      };
      const double numeric = (at(-2 * eps) - 8 * at(-eps) + 8 * at(eps) - at(2 * eps)) / (12 * eps);
      values[i] = saved;
      const double exact = grad_blocks[b].values[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace doa
