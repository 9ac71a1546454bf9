#pragma once

#include "doa/types.hpp"

#include <unsupported/Eigen/FFT>

namespace doa {

// Conventions used throughout the library:
//   fft(x)(k)  = sum_n x(n) exp(-j 2 pi k n / N)          (unscaled)
//   ifft(X)(n) = (1/N) sum_k X(k) exp(+j 2 pi k n / N)
// With these, a circulant matrix C with first column c satisfies
// C = F^-1 diag(F c) F, so fft(c) are exactly its eigenvalues.

namespace detail {
// Eigen::FFT caches twiddle tables per size and is not thread-safe.
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}
}  // namespace detail

inline CVector fft(const CVector& x) {
  if (x.size() <= 1) return x;
  CVector out(x.size());
  detail::fft_engine().fwd(out.data(), x.data(), x.size());
  return out;
}

inline CVector ifft(const CVector& x) {
  if (x.size() <= 1) return x;
  CVector out(x.size());
  detail::fft_engine().inv(out.data(), x.data(), x.size());
  return out;
}

/// Adjoint of fft(): F^H g = N ifft(g).
inline CVector fft_adjoint(const CVector& g) { return ifft(g) * static_cast<double>(g.size()); }

/// Adjoint of ifft(): (F^-1)^H g = fft(g) / N.
inline CVector ifft_adjoint(const CVector& g) { return fft(g) / static_cast<double>(g.size()); }

}  // namespace doa
