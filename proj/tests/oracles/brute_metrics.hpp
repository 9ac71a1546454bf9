#pragma once

// Brute-force peak scan, target matcher and angular RMSE, written without
// the library's helpers.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <vector>

namespace oracle {

/// For every index, walk the run of equal magnitudes it belongs to and keep
/// it when it is the run's first index and both outer neighbours are lower.
inline Eigen::VectorXd brute_peaks(const Eigen::VectorXcd& x) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd mag = x.cwiseAbs();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  auto idx = [n](int i) { return ((i % n) + n) % n; };
  bool constant = true;
  for (int i = 1; i < n; ++i) constant = constant && mag[i] == mag[0];
  if (constant) {
    if (n > 0) out[0] = mag[0];
    return out;
  }
  for (int i = 0; i < n; ++i) {
    if (mag[i] == 0.0) continue;
    int left = i;
    while (mag[idx(left - 1)] == mag[i]) --left;
    int right = i;
    while (mag[idx(right + 1)] == mag[i]) ++right;
    if (idx(left) != i) continue;
    if (mag[idx(left - 1)] < mag[i] && mag[idx(right + 1)] < mag[i]) out[i] = mag[i];
  }
  return out;
}

inline int brute_wrap_distance(int a, int b, int n) {
  int best = std::abs(a - b);
  for (int k : {-1, 1}) best = std::min(best, std::abs(a - b + k * n));
  return best;
}

inline std::vector<std::vector<int>> brute_match(const std::vector<int>& true_bins,
                                                 const std::vector<double>& true_mags, const Eigen::VectorXd& peaks,
                                                 int delta1, double delta2) {
  const int n = static_cast<int>(peaks.size());
  std::vector<std::vector<int>> sets;
  for (std::size_t k = 0; k < true_bins.size(); ++k) {
    std::vector<int> found;
    for (int j = 0; j < n; ++j) {
      if (peaks[j] != 0.0 && brute_wrap_distance(true_bins[k], j, n) <= delta1 && peaks[j] / true_mags[k] >= delta2) {
        found.push_back(j);
      }
    }
    sets.push_back(found);
  }
  return sets;
}

/// Mean squared angular error in degrees^2 over the detected targets of one
/// vector; empty when none were detected. Grid f_n = -gamma + 2 gamma n / N.
inline std::optional<double> brute_vector_error(const std::vector<int>& true_bins,
                                                const std::vector<std::vector<int>>& sets, int n, double gamma) {
  auto angle = [&](int bin) {
    const double f = -gamma + 2.0 * gamma * bin / n;
    return -std::asin(f / gamma) * 180.0 / std::numbers::pi;
  };
  double sum = 0.0;
  int detected = 0;
  for (std::size_t k = 0; k < true_bins.size(); ++k) {
    if (sets[k].empty()) continue;
    int nearest = sets[k][0];
    for (int j : sets[k]) {
      if (brute_wrap_distance(true_bins[k], j, n) < brute_wrap_distance(true_bins[k], nearest, n)) nearest = j;
    }
    const double d = angle(true_bins[k]) - angle(nearest);
    sum += d * d;
    ++detected;
  }
  if (detected == 0) return std::nullopt;
  return sum / detected;
}

inline std::optional<double> brute_rmse(const std::vector<std::optional<double>>& errors) {
  double sum = 0.0;
  int count = 0;
  for (const auto& e : errors) {
    if (e) {
      sum += *e;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(sum / count);
}

}  // namespace oracle
