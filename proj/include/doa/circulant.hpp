#pragma once

#include "doa/error.hpp"
#include "doa/fft.hpp"
#include "doa/types.hpp"

#include <cmath>

namespace doa {

/// N x N circulant matrix held by its first column and its eigenvalues
/// (the unscaled DFT of that column).
class CirculantOperator {
 public:
  CirculantOperator() = default;

  static CirculantOperator from_first_column(const CVector& column) {
    CirculantOperator op;
    op.source_col_ = column;
    op.eigenvalues_ = fft(column);
    return op;
  }

  static CirculantOperator from_eigenvalues(const CVector& eigenvalues) {
    CirculantOperator op;
    op.eigenvalues_ = eigenvalues;
    op.source_col_ = ifft(eigenvalues);
    return op;
  }

  Index size() const { return eigenvalues_.size(); }
  const CVector& eigenvalues() const { return eigenvalues_; }
  const CVector& source_col() const { return source_col_; }

  /// C + rho I.
  CirculantOperator shifted(double rho) const {
    return from_eigenvalues((eigenvalues_.array() + rho).matrix());
  }

  CVector apply(const CVector& x) const {
    require(x.size() == size(), ErrorKind::Contract, "circulant size mismatch");
    return ifft((eigenvalues_.array() * fft(x).array()).matrix());
  }

  CVector inverse_apply(const CVector& x) const {
    require(x.size() == size(), ErrorKind::Contract, "circulant size mismatch");
    for (Index i = 0; i < size(); ++i) {
      require(std::abs(eigenvalues_[i]) > 0.0, ErrorKind::NearSingular, "circulant operator is singular");
    }
    return ifft((fft(x).array() / eigenvalues_.array()).matrix());
  }

  CMatrix dense() const {
    const Index n = size();
    CMatrix out(n, n);
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) out(r, c) = source_col_[((r - c) % n + n) % n];
    }
    return out;
  }

 private:
  CVector eigenvalues_;
  CVector source_col_;
};

inline CVector circulant_apply(const CirculantOperator& op, const CVector& x) { return op.apply(x); }

/// True when every entry satisfies C(n, p) = C((n - p) mod N, 0) within tol,
/// i.e. the matrix is Toeplitz and its diagonals wrap.
inline bool is_circulant(const CMatrix& m, double tol) {
  require(m.rows() == m.cols(), ErrorKind::Contract, "is_circulant needs a square matrix");
  const Index n = m.rows();
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      if (std::abs(m(r, c) - m(((r - c) % n + n) % n, 0)) > tol) return false;
    }
  }
  return true;
}

/// True when m(n, p) depends on n - p only.
inline bool is_toeplitz(const CMatrix& m, double tol) {
  for (Index r = 1; r < m.rows(); ++r) {
    for (Index c = 1; c < m.cols(); ++c) {
      if (std::abs(m(r, c) - m(r - 1, c - 1)) > tol) return false;
    }
  }
  return true;
}

/// N x N Toeplitz matrix T(n, p) = g(n - p) with generator g of length
/// 2N - 1 stored at offset s + N - 1. Products run through the length-2N
/// circulant embedding.
class ToeplitzOperator {
 public:
  ToeplitzOperator() = default;

  explicit ToeplitzOperator(const CVector& generator) : n_((generator.size() + 1) / 2) {
    require(generator.size() == 2 * n_ - 1 && n_ >= 1, ErrorKind::Contract, "Toeplitz generator must have odd length");
    embed_dft_ = fft(embed(generator, n_));
  }

  static CVector embed(const CVector& generator, Index n) {
    CVector c = CVector::Zero(2 * n);
    for (Index k = 0; k < n; ++k) c[k] = generator[k + n - 1];
    for (Index k = 1; k < n; ++k) c[2 * n - k] = generator[n - 1 - k];
    return c;
  }

  Index size() const { return n_; }

  CVector apply(const CVector& x) const {
    require(x.size() == n_, ErrorKind::Contract, "Toeplitz size mismatch");
    return ifft((embed_dft_.array() * fft(pad(x)).array()).matrix()).head(n_);
  }

  /// T^H g.
  CVector adjoint_apply(const CVector& g) const {
    require(g.size() == n_, ErrorKind::Contract, "Toeplitz size mismatch");
    return ifft((embed_dft_.array().conjugate() * fft(pad(g)).array()).matrix()).head(n_);
  }

  /// Gradient of Re<g_out, T x> with respect to the generator entries.
  CVector generator_gradient(const CVector& x, const CVector& g_out) const {
    const CVector gc = ifft((fft(pad(x)).array().conjugate() * fft(pad(g_out)).array()).matrix());
    CVector grad(2 * n_ - 1);
    for (Index k = 0; k < n_; ++k) grad[k + n_ - 1] = gc[k];
    for (Index k = 1; k < n_; ++k) grad[n_ - 1 - k] = gc[2 * n_ - k];
    return grad;
  }

 private:
  CVector pad(const CVector& x) const {
    CVector p = CVector::Zero(2 * n_);
    p.head(n_) = x;
    return p;
  }

  Index n_ = 0;
  CVector embed_dft_;
};

/// Generator of a Toeplitz matrix read from its first column and first row.
inline CVector toeplitz_generator(const CMatrix& t) {
  const Index n = t.rows();
  CVector g(2 * n - 1);
  for (Index s = 0; s < n; ++s) g[s + n - 1] = t(s, 0);
  for (Index s = 1; s < n; ++s) g[n - 1 - s] = t(0, s);
  return g;
}

inline CMatrix toeplitz_dense(const CVector& generator) {
  const Index n = (generator.size() + 1) / 2;
  CMatrix t(n, n);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) t(r, c) = generator[r - c + n - 1];
  }
  return t;
}

}  // namespace doa
