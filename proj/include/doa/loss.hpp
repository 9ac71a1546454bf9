#pragma once

#include "doa/error.hpp"
#include "doa/fft.hpp"
#include "doa/types.hpp"

#include <cmath>

namespace doa {

enum class ConvolutionMode { Circular, LinearTruncated };

struct LossConfig {
  /// Scale b of the Laplacian kernel g(n) = exp(-|n| / b).
  double kernel_scale = 0.5;
  ConvolutionMode mode = ConvolutionMode::Circular;
};

/// g(n) = exp(-|n|/b) for n = -floor(N/2) .. floor(N/2), centre at index floor(N/2).
inline RVector laplacian_kernel(Index n, double b) {
  require(b > 0.0, ErrorKind::InvalidArgument, "kernel scale must be positive");
  const Index half = n / 2;
  RVector g(2 * half + 1);
  for (Index i = -half; i <= half; ++i) g[i + half] = std::exp(-std::abs(static_cast<double>(i)) / b);
  return g;
}

/// Convolution of a length-N spectrum with the Laplacian kernel. Both modes
/// give a real symmetric operator, so it is its own adjoint.
class LaplacianSmoother {
 public:
  LaplacianSmoother(Index n, const LossConfig& cfg) : n_(n), mode_(cfg.mode), kernel_(laplacian_kernel(n, cfg.kernel_scale)) {
    if (mode_ == ConvolutionMode::Circular) {
      // Fold the kernel onto N bins; for even N both ends land on N/2.
      CVector folded = CVector::Zero(n);
      const Index half = n / 2;
      for (Index i = -half; i <= half; ++i) folded[((i % n) + n) % n] += kernel_[i + half];
      kernel_dft_ = fft(folded).real();
    }
  }

  Index size() const { return n_; }
  const RVector& kernel() const { return kernel_; }
  /// DFT of the folded circular kernel (real because the kernel is even).
  const RVector& kernel_dft() const { return kernel_dft_; }

  CVector apply(const CVector& x) const {
    require(x.size() == n_, ErrorKind::Contract, "smoother size mismatch");
    if (mode_ == ConvolutionMode::Circular) {
      return ifft((fft(x).array() * kernel_dft_.array().cast<Complex>()).matrix());
    }
    const Index half = n_ / 2;
    CVector out = CVector::Zero(n_);
    for (Index i = 0; i < n_; ++i) {
      for (Index s = -half; s <= half; ++s) {
        const Index j = i - s;
        if (j >= 0 && j < n_) out[i] += kernel_[s + half] * x[j];
      }
    }
    return out;
  }

  CVector adjoint_apply(const CVector& g) const { return apply(g); }

 private:
  Index n_;
  ConvolutionMode mode_;
  RVector kernel_;
  RVector kernel_dft_;
};

struct LossValue {
  double loss = 0.0;
  /// dL/dRe(x_hat) + j dL/dIm(x_hat).
  CVector grad;
};

/// NMSE(x_hat * g, x * g) and its gradient with respect to x_hat.
inline LossValue smoothed_nmse_with_grad(const LaplacianSmoother& smoother, const CVector& x_hat, const CVector& x) {
  const CVector sx = smoother.apply(x);
  const double denom = sx.squaredNorm();
  if (!(denom > 0.0)) fail(ErrorKind::UndefinedLoss, "ground truth is zero after smoothing");
  const CVector diff = smoother.apply(x_hat - x);
  LossValue out;
  out.loss = diff.squaredNorm() / denom;
  out.grad = smoother.adjoint_apply(diff) * (2.0 / denom);
  return out;
}

inline double smoothed_nmse_loss(const CVector& x_hat, const CVector& x, const LossConfig& cfg = {}) {
  require(x_hat.size() == x.size(), ErrorKind::Contract, "loss size mismatch");
  const LaplacianSmoother smoother(x.size(), cfg);
  return smoothed_nmse_with_grad(smoother, x_hat, x).loss;
}

}  // namespace doa
