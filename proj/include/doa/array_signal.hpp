#pragma once

#include "doa/error.hpp"
#include "doa/fft.hpp"
#include "doa/rng.hpp"
#include "doa/types.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace doa {

enum class ArrayKind { Ula, Sla };

/// Linear array with elements at integer multiples l_m of gamma wavelengths.
struct ArrayGeometry {
  std::vector<int> positions;
  double gamma = 0.5;
  ArrayKind kind = ArrayKind::Ula;

  Index size() const { return static_cast<Index>(positions.size()); }
  int max_position() const { return positions.empty() ? 0 : positions.back(); }
};

inline void validate_geometry(const ArrayGeometry& geom) {
  require(geom.positions.size() >= 2, ErrorKind::InvalidGeometry, "array needs at least two elements");
  require(geom.gamma > 0.0 && geom.gamma <= 0.5, ErrorKind::InvalidGeometry, "gamma must lie in (0, 1/2]");
  require(geom.positions.front() >= 0, ErrorKind::InvalidGeometry, "positions must be non-negative");
  for (std::size_t i = 1; i < geom.positions.size(); ++i) {
    require(geom.positions[i] > geom.positions[i - 1], ErrorKind::InvalidGeometry,
            "positions must be strictly increasing");
  }
}

inline ArrayGeometry make_ula(int m, double gamma = 0.5) {
  require(m >= 2, ErrorKind::InvalidGeometry, "ULA needs m >= 2, got " + std::to_string(m));
  ArrayGeometry geom;
  geom.positions.resize(static_cast<std::size_t>(m));
  std::iota(geom.positions.begin(), geom.positions.end(), 0);
  geom.gamma = gamma;
  geom.kind = ArrayKind::Ula;
  validate_geometry(geom);
  return geom;
}

/// Sparse array: m elements drawn without replacement from {0..aperture}.
/// Both endpoints are always kept so the aperture is exact for every seed.
inline ArrayGeometry make_sla(int m, int aperture, std::uint64_t seed, double gamma = 0.5) {
  require(aperture >= 1, ErrorKind::InvalidGeometry, "aperture must be >= 1");
  require(m >= 2, ErrorKind::InvalidGeometry, "SLA needs m >= 2");
  require(m <= aperture + 1, ErrorKind::InvalidGeometry,
          "cannot place " + std::to_string(m) + " elements on aperture " + std::to_string(aperture));

  std::vector<int> interior(static_cast<std::size_t>(aperture - 1));
  std::iota(interior.begin(), interior.end(), 1);
  Rng rng = make_rng(seed, 0x51A);
  // Partial Fisher-Yates: the first m-2 slots become a uniform subset.
  const auto take = static_cast<std::size_t>(m - 2);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, interior.size() - 1);
    std::swap(interior[i], interior[pick(rng)]);
  }

  ArrayGeometry geom;
  geom.positions.assign(interior.begin(), interior.begin() + static_cast<std::ptrdiff_t>(take));
  geom.positions.push_back(0);
  geom.positions.push_back(aperture);
  std::sort(geom.positions.begin(), geom.positions.end());
  geom.gamma = gamma;
  geom.kind = m == aperture + 1 ? ArrayKind::Ula : ArrayKind::Sla;
  validate_geometry(geom);
  return geom;
}

/// a(f)(m) = exp(j 2 pi f l_m).
inline CVector steering_vector(const ArrayGeometry& geom, double f) {
  require(f >= -geom.gamma && f <= geom.gamma, ErrorKind::Aliasing,
          "frequency " + std::to_string(f) + " outside [-gamma, gamma]");
  CVector a(geom.size());
  for (Index m = 0; m < geom.size(); ++m) {
    a[m] = std::polar(1.0, 2.0 * kPi * f * geom.positions[static_cast<std::size_t>(m)]);
  }
  return a;
}

/// Overcomplete steering dictionary over the uniform grid
/// f_n = -gamma + 2 gamma n / N, n = 0..N-1.
class Dictionary {
 public:
  Dictionary() = default;

  const ArrayGeometry& geometry() const { return geometry_; }
  Index rows() const { return geometry_.size(); }
  Index grid_size() const { return grid_.size(); }
  const RVector& grid() const { return grid_; }
  const CMatrix& matrix() const { return matrix_; }
  /// b = (A^H A)(:, 0).
  const CVector& gram_col() const { return gram_col_; }
  /// fft(b), the eigenvalues of A^H A when it is circulant.
  const CVector& gram_col_dft() const { return gram_col_dft_; }
  double sigma_max_sq() const { return sigma_max_sq_; }
  /// Default ISTA step 1 / sigma_max(A)^2.
  double default_step() const { return 1.0 / sigma_max_sq_; }

  /// A^H A is circulant on a uniform grid exactly when gamma = 1/2.
  bool circulant() const { return geometry_.gamma == 0.5; }

  CMatrix gram() const { return matrix_.adjoint() * matrix_; }
  CVector apply(const CVector& x) const { return matrix_ * x; }
  CVector adjoint_apply_dense(const CVector& y) const { return matrix_.adjoint() * y; }

  /// y_F = A^H y. For gamma = 1/2 this is one N-point DFT of y scattered to
  /// its element positions: exp(-j 2 pi f_n l) = (-1)^l exp(-j 2 pi n l / N).
  CVector adjoint_apply(const CVector& y) const {
    require(y.size() == rows(), ErrorKind::Contract, "measurement length mismatch");
    if (!circulant()) return adjoint_apply_dense(y);
    CVector scattered = CVector::Zero(grid_size());
    for (Index m = 0; m < rows(); ++m) {
      const int l = geometry_.positions[static_cast<std::size_t>(m)];
      scattered[l] += (l % 2 == 0) ? y[m] : -y[m];
    }
    return fft(scattered);
  }

  /// Fingerprint of (gamma, positions, N) used to tie checkpoints and
  /// datasets to the dictionary they were built with.
  std::uint64_t id() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    };
    mix(std::bit_cast<std::uint64_t>(geometry_.gamma));
    mix(static_cast<std::uint64_t>(grid_size()));
    for (int p : geometry_.positions) mix(static_cast<std::uint64_t>(p));
    return h;
  }

  /// Index of the grid point nearest to f. Wraps around for gamma = 1/2.
  int nearest_bin(double f) const {
    const double n = static_cast<double>(grid_size());
    auto idx = static_cast<long long>(std::llround((f + geometry_.gamma) * n / (2.0 * geometry_.gamma)));
    if (circulant()) {
      idx %= grid_size();
      if (idx < 0) idx += grid_size();
    } else {
      idx = std::clamp<long long>(idx, 0, grid_size() - 1);
    }
    return static_cast<int>(idx);
  }

  friend Dictionary build_dictionary(const ArrayGeometry& geom, Index n);

 private:
  ArrayGeometry geometry_;
  RVector grid_;
  CMatrix matrix_;
  CVector gram_col_;
  CVector gram_col_dft_;
  double sigma_max_sq_ = 0.0;
};

/// Largest eigenvalue of the Hermitian PSD matrix g by power iteration,
/// relative tolerance 1e-10, at most 1000 iterations.
inline double power_iteration_max_eig(const CMatrix& g, double tol = 1e-10, int max_iter = 1000) {
  CVector v(g.rows());
  for (Index i = 0; i < v.size(); ++i) v[i] = Complex(1.0, 0.37 * static_cast<double>(i + 1) / static_cast<double>(v.size()));
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    CVector w = g * v;
    const double next = std::real(v.dot(w));
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

inline Dictionary build_dictionary(const ArrayGeometry& geom, Index n) {
  validate_geometry(geom);
  require(n > geom.size(), ErrorKind::GridTooSmall, "grid size must exceed the element count");
  require(n > geom.max_position() + 1, ErrorKind::GridTooSmall,
          "grid size must exceed max position + 1 (k_M < N - 1)");

  Dictionary dic;
  dic.geometry_ = geom;
  dic.grid_.resize(n);
  for (Index i = 0; i < n; ++i) {
    dic.grid_[i] = -geom.gamma + 2.0 * geom.gamma * static_cast<double>(i) / static_cast<double>(n);
  }
  dic.matrix_.resize(geom.size(), n);
  for (Index col = 0; col < n; ++col) {
    for (Index m = 0; m < geom.size(); ++m) {
      dic.matrix_(m, col) = std::polar(1.0, 2.0 * kPi * dic.grid_[col] * geom.positions[static_cast<std::size_t>(m)]);
    }
  }
  dic.gram_col_ = dic.matrix_.adjoint() * dic.matrix_.col(0);
  dic.gram_col_dft_ = fft(dic.gram_col_);
  // A A^H shares the nonzero spectrum of A^H A and is only M x M.
  const CMatrix outer = dic.matrix_ * dic.matrix_.adjoint();
  dic.sigma_max_sq_ = power_iteration_max_eig(outer);
  return dic;
}

// ---------------------------------------------------------------------------
// Scenes and measurements

struct GroundTruthScene {
  std::vector<double> true_freqs;
  std::vector<int> grid_indices;
  std::vector<Complex> amplitudes;
  CVector sparse_x;

  Index k() const { return static_cast<Index>(true_freqs.size()); }
};

struct KRange {
  int min = 1;
  int max = 8;
};

/// Circular distance on the unit-period frequency axis.
inline double wrapped_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 1.0);
  return std::min(d, 1.0 - d);
}

inline constexpr int kSceneRetryCap = 10000;

inline GroundTruthScene scene_from_components(const Dictionary& dic, std::vector<double> freqs,
                                              std::vector<Complex> amplitudes) {
  require(!freqs.empty(), ErrorKind::InvalidArgument, "scene needs at least one target");
  require(freqs.size() == amplitudes.size(), ErrorKind::InvalidArgument, "frequency/amplitude count mismatch");
  GroundTruthScene scene;
  scene.true_freqs = std::move(freqs);
  scene.amplitudes = std::move(amplitudes);
  scene.sparse_x = CVector::Zero(dic.grid_size());
  for (std::size_t k = 0; k < scene.true_freqs.size(); ++k) {
    const int bin = dic.nearest_bin(scene.true_freqs[k]);
    require(scene.sparse_x[bin] == Complex(0.0, 0.0), ErrorKind::InvalidArgument, "two targets share a grid bin");
    scene.grid_indices.push_back(bin);
    scene.sparse_x[bin] = scene.amplitudes[k];
  }
  return scene;
}

inline GroundTruthScene draw_scene(const Dictionary& dic, KRange k_range, double min_sep, std::uint64_t seed) {
  require(k_range.min >= 1 && k_range.max >= k_range.min, ErrorKind::InvalidArgument, "invalid target-count range");
  require(min_sep >= 0.0, ErrorKind::InvalidArgument, "min_sep must be non-negative");
  Rng rng = make_rng(seed, 0x5CE);
  std::uniform_int_distribution<int> k_dist(k_range.min, k_range.max);
  const int k = k_dist(rng);
  const double gamma = dic.geometry().gamma;
  std::uniform_real_distribution<double> f_dist(-gamma, gamma);

  std::vector<double> freqs(static_cast<std::size_t>(k));
  std::vector<int> bins(static_cast<std::size_t>(k));
  bool accepted = false;
  for (int attempt = 0; attempt < kSceneRetryCap && !accepted; ++attempt) {
    for (int i = 0; i < k; ++i) {
      freqs[static_cast<std::size_t>(i)] = f_dist(rng);
      bins[static_cast<std::size_t>(i)] = dic.nearest_bin(freqs[static_cast<std::size_t>(i)]);
    }
    accepted = true;
    for (int i = 0; i < k && accepted; ++i) {
      for (int j = i + 1; j < k; ++j) {
        const auto ui = static_cast<std::size_t>(i);
        const auto uj = static_cast<std::size_t>(j);
        if (wrapped_distance(freqs[ui], freqs[uj]) < min_sep || bins[ui] == bins[uj]) {
          accepted = false;
          break;
        }
      }
    }
  }
  if (!accepted) {
    fail(ErrorKind::SamplingFailure, "could not place " + std::to_string(k) + " targets with separation " +
                                         std::to_string(min_sep) + " after " + std::to_string(kSceneRetryCap) +
                                         " attempts");
  }

  std::uniform_real_distribution<double> mag_dist(0.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * kPi);
  std::vector<Complex> amps(static_cast<std::size_t>(k));
  for (auto& a : amps) {
    double mag = 0.0;
    while (mag == 0.0) mag = mag_dist(rng);
    a = std::polar(mag, phase_dist(rng));
  }
  return scene_from_components(dic, std::move(freqs), std::move(amps));
}

enum class NoiseConvention {
  /// Per-element variance sigma^2 / M: total noise power matches the SNR.
  PerElement,
  /// Per-element variance sigma^2, the displayed formula taken literally.
  PaperLiteral,
};

struct Sample {
  CVector measurement;
  GroundTruthScene scene;
  double snr_db = 0.0;
  /// sigma^2 = 10^(-SNR/10) ||sum_k x_k a(f_k)||^2; zero when noiseless.
  double noise_sigma_sq = 0.0;
};

inline CVector noiseless_signal(const Dictionary& dic, const GroundTruthScene& scene) {
  CVector signal = CVector::Zero(dic.rows());
  for (std::size_t k = 0; k < scene.true_freqs.size(); ++k) {
    signal += scene.amplitudes[k] * steering_vector(dic.geometry(), scene.true_freqs[k]);
  }
  return signal;
}

/// y = sum_k x_k a(f*_k) + n at the off-grid frequencies. snr_db = +inf
/// produces a noiseless measurement.
inline Sample synthesize_measurement(const Dictionary& dic, const GroundTruthScene& scene, double snr_db,
                                     std::uint64_t seed, NoiseConvention convention = NoiseConvention::PerElement) {
  require(scene.k() >= 1, ErrorKind::InvalidArgument, "empty scene");
  Sample sample;
  sample.scene = scene;
  sample.snr_db = snr_db;
  sample.measurement = noiseless_signal(dic, scene);
  if (std::isinf(snr_db) && snr_db > 0) return sample;
  require(std::isfinite(snr_db), ErrorKind::InvalidArgument, "SNR must be finite or +inf");

  sample.noise_sigma_sq = std::pow(10.0, -snr_db / 10.0) * sample.measurement.squaredNorm();
  const double per_element = convention == NoiseConvention::PerElement
                                 ? sample.noise_sigma_sq / static_cast<double>(dic.rows())
                                 : sample.noise_sigma_sq;
  Rng rng = make_rng(seed, 0x401);
  std::normal_distribution<double> normal(0.0, std::sqrt(per_element / 2.0));
  for (Index m = 0; m < sample.measurement.size(); ++m) {
    const double re = normal(rng);
    const double im = normal(rng);
    sample.measurement[m] += Complex(re, im);
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetSpec {
  Index count = 1;
  KRange k_range{};
  double min_sep = 0.0;
  double snr_db = 15.0;
  std::uint64_t seed = 0;
  NoiseConvention noise = NoiseConvention::PerElement;
};

/// Sample `index` of the dataset described by spec. Each sample owns its
/// sub-seeds, so samples can be produced one at a time or in any order.
inline Sample generate_sample(const Dictionary& dic, const DatasetSpec& spec, Index index) {
  const auto i = static_cast<std::uint64_t>(index);
  const GroundTruthScene scene = draw_scene(dic, spec.k_range, spec.min_sep, derive_seed(spec.seed, 1, i));
  return synthesize_measurement(dic, scene, spec.snr_db, derive_seed(spec.seed, 2, i), spec.noise);
}

inline std::vector<Sample> generate_dataset(const Dictionary& dic, const DatasetSpec& spec) {
  require(spec.count >= 1, ErrorKind::InvalidArgument, "dataset count must be >= 1");
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (Index i = 0; i < spec.count; ++i) out.push_back(generate_sample(dic, spec, i));
  return out;
}

struct SnrLevelSet {
  double snr_db = 0.0;
  std::vector<Sample> samples;
};

/// One independent test set per SNR level; level seeds are derived from the
/// base seed and the level's position in the list.
inline std::vector<SnrLevelSet> generate_sweep(const Dictionary& dic, DatasetSpec base,
                                               const std::vector<double>& snr_levels) {
  std::vector<SnrLevelSet> out;
  const std::uint64_t root = base.seed;
  for (std::size_t i = 0; i < snr_levels.size(); ++i) {
    base.snr_db = snr_levels[i];
    base.seed = derive_seed(root, 100 + i, 0);
    out.push_back({snr_levels[i], generate_dataset(dic, base)});
  }
  return out;
}

}  // namespace doa
