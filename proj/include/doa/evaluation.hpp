#pragma once

#include "doa/array_signal.hpp"
#include "doa/error.hpp"
#include "doa/networks.hpp"
#include "doa/solvers.hpp"
#include "doa/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace doa {

struct MatchConfig {
  int delta1 = 2;
  double delta2 = 0.4;
};

inline void validate_match(const MatchConfig& cfg) {
  require(cfg.delta1 >= 0, ErrorKind::InvalidArgument, "delta1 must be >= 0");
  require(cfg.delta2 > 0.0 && cfg.delta2 <= 1.0, ErrorKind::InvalidArgument, "delta2 must lie in (0, 1]");
}

/// Circular distance between two bins of an N-point grid.
inline int bin_distance(int a, int b, Index n) {
  const int d = std::abs(a - b) % static_cast<int>(n);
  return std::min(d, static_cast<int>(n) - d);
}

/// |x_hat| at its local maxima, zero elsewhere. Neighbours wrap. A run of
/// equal magnitudes counts once, at its leftmost index, when both sides of
/// the run are strictly lower.
inline RVector peak_spectrum(const CVector& x_hat) {
  const Index n = x_hat.size();
  const RVector mag = x_hat.cwiseAbs();
  RVector out = RVector::Zero(n);
  if (n == 0) return out;
  if ((mag.array() == mag[0]).all()) {
    out[0] = mag[0];
    return out;
  }
  auto at = [&](Index i) { return mag[((i % n) + n) % n]; };
  for (Index i = 0; i < n; ++i) {
    const double v = mag[i];
    if (v <= 0.0 || at(i - 1) == v) continue;
    Index j = i;
    while (at(j + 1) == v) ++j;
    if (at(i - 1) < v && at(j + 1) < v) out[i] = v;
  }
  return out;
}

/// For each target, the peak indices within delta1 bins whose magnitude is
/// at least delta2 times the target's true amplitude.
inline std::vector<std::vector<int>> match_targets(const GroundTruthScene& scene, const RVector& peaks,
                                                   const MatchConfig& cfg = {}) {
  validate_match(cfg);
  const Index n = peaks.size();
  std::vector<std::vector<int>> sets(scene.grid_indices.size());
  for (std::size_t k = 0; k < scene.grid_indices.size(); ++k) {
    const int r = scene.grid_indices[k];
    const double amp = std::abs(scene.sparse_x.size() == n ? scene.sparse_x[r] : scene.amplitudes[k]);
    for (Index j = 0; j < n; ++j) {
      if (peaks[j] <= 0.0) continue;
      if (bin_distance(r, static_cast<int>(j), n) > cfg.delta1) continue;
      if (peaks[j] >= cfg.delta2 * amp) sets[k].push_back(static_cast<int>(j));
    }
  }
  return sets;
}

inline double detection_rate(const std::vector<std::vector<int>>& sets) {
  require(!sets.empty(), ErrorKind::InvalidArgument, "detection rate needs at least one target");
  const auto hit = std::count_if(sets.begin(), sets.end(), [](const auto& s) { return !s.empty(); });
  return static_cast<double>(hit) / static_cast<double>(sets.size());
}

/// Angle in degrees of a grid frequency, theta = -asin(f / gamma).
inline double bin_angle_deg(double f, double gamma) {
  return -std::asin(std::clamp(f / gamma, -1.0, 1.0)) * 180.0 / kPi;
}

/// Mean squared angular error over the detected targets of one vector; the
/// matched index nearest the true bin stands in for each target. Empty when
/// nothing was detected.
inline std::optional<double> vector_angular_error(const GroundTruthScene& scene,
                                                  const std::vector<std::vector<int>>& sets, const RVector& grid,
                                                  double gamma) {
  const Index n = grid.size();
  double sum = 0.0;
  int detected = 0;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    if (sets[k].empty()) continue;
    const int r = scene.grid_indices[k];
    int best = sets[k].front();
    for (int j : sets[k]) {
      if (bin_distance(r, j, n) < bin_distance(r, best, n)) best = j;
    }
    const double d = bin_angle_deg(grid[r], gamma) - bin_angle_deg(grid[best], gamma);
    sum += d * d;
    ++detected;
  }
  if (detected == 0) return std::nullopt;
  return sum / detected;
}

/// sqrt of the mean per-vector error over vectors with a detection.
inline std::optional<double> angular_rmse(const std::vector<std::optional<double>>& per_vector) {
  double sum = 0.0;
  int count = 0;
  for (const auto& e : per_vector) {
    if (!e) continue;
    sum += *e;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(sum / count);
}

inline double nmse_metric(const CVector& x_hat, const CVector& x) {
  const double denom = x.squaredNorm();
  require(denom > 0.0, ErrorKind::UndefinedLoss, "nmse of a zero vector");
  return (x_hat - x).squaredNorm() / denom;
}

// ---------------------------------------------------------------------------
// Estimators and the SNR sweep

struct Estimator {
  std::string label;
  /// Must be callable from several threads at once.
  std::function<CVector(const CVector&)> estimate;
};

inline Estimator ista_estimator(const Dictionary& dic, SolverConfig cfg, std::string label = {}) {
  if (label.empty()) label = "ista-" + std::to_string(cfg.iterations);
  return {label, [&dic, cfg](const CVector& y) { return ista(dic, y, cfg); }};
}

inline Estimator admm_estimator(const Dictionary& dic, SolverConfig cfg, std::string label = {}) {
  if (label.empty()) label = "admm-" + std::to_string(cfg.iterations);
  if (dic.circulant()) return {label, [&dic, cfg](const CVector& y) { return fast_compact_admm(dic, y, cfg); }};
  return {label, [&dic, cfg](const CVector& y) { return admm(dic, y, cfg); }};
}

inline Estimator network_estimator(const Dictionary& dic, Network net, std::string label = {}) {
  if (label.empty()) label = to_string(net.kind);
  auto owned = std::make_shared<const Network>(std::move(net));
  auto prepared = std::make_shared<const PreparedNetwork>(*owned, dic);
  return {label, [owned, prepared](const CVector& y) { return prepared->forward(y); }};
}

struct MetricsRow {
  double snr_db = 0.0;
  double mean_detection_rate = 0.0;
  std::optional<double> angular_rmse_deg;
  double mean_nmse = 0.0;
  Index n_vectors = 0;
  Index n_detected = 0;
  Index n_failed = 0;
};

struct MetricsReport {
  std::string estimator;
  std::vector<MetricsRow> rows;
};

struct VectorOutcome {
  bool failed = false;
  double detection = 0.0;
  std::optional<double> angular_error;
  std::optional<double> nmse;
};

inline VectorOutcome evaluate_vector(const Estimator& est, const Sample& sample, const RVector& grid, double gamma,
                                     const MatchConfig& cfg) {
  VectorOutcome out;
  CVector x_hat;
  try {
    x_hat = est.estimate(sample.measurement);
  } catch (const Error&) {
    out.failed = true;
    return out;
  }
  if (sample.scene.k() > 0) {
    const auto sets = match_targets(sample.scene, peak_spectrum(x_hat), cfg);
    out.detection = detection_rate(sets);
    out.angular_error = vector_angular_error(sample.scene, sets, grid, gamma);
  }
  if (sample.scene.sparse_x.squaredNorm() > 0.0) out.nmse = nmse_metric(x_hat, sample.scene.sparse_x);
  return out;
}

/// Runs every estimator on every test vector of every level. Vectors are
/// split over `workers` threads by index and aggregated in index order, so
/// the report does not depend on the worker count. A vector whose estimator
/// throws is counted in n_failed and scores zero detection.
inline std::vector<MetricsReport> snr_sweep(const std::vector<Estimator>& estimators,
                                            const std::vector<SnrLevelSet>& levels, const Dictionary& dic,
                                            const MatchConfig& cfg = {}, int workers = 1) {
  require(!estimators.empty(), ErrorKind::Config, "no estimators to evaluate");
  validate_match(cfg);
  std::vector<MetricsReport> reports;
  for (const Estimator& est : estimators) {
    MetricsReport report{est.label, {}};
    for (const SnrLevelSet& level : levels) {
      for (const Sample& s : level.samples) {
        require(s.measurement.size() == dic.rows() && s.scene.sparse_x.size() == dic.grid_size(), ErrorKind::Contract,
                "test vector does not match the dictionary");
      }
      const auto count = level.samples.size();
      std::vector<VectorOutcome> outcomes(count);
      const auto threads = static_cast<std::size_t>(std::clamp(workers, 1, 256));
      auto run = [&](std::size_t w) {
        for (std::size_t i = w; i < count; i += threads) {
          outcomes[i] = evaluate_vector(est, level.samples[i], dic.grid(), dic.geometry().gamma, cfg);
        }
      };
      if (threads == 1) {
        run(0);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(run, w);
      }

      MetricsRow row;
      row.snr_db = level.snr_db;
      row.n_vectors = static_cast<Index>(count);
      double det_sum = 0.0;
      Index det_count = 0;
      double nmse_sum = 0.0;
      Index nmse_count = 0;
      std::vector<std::optional<double>> errors;
      for (std::size_t i = 0; i < count; ++i) {
        const VectorOutcome& o = outcomes[i];
        if (o.failed) ++row.n_failed;
        if (level.samples[i].scene.k() > 0) {
          det_sum += o.detection;
          ++det_count;
        }
        if (o.angular_error) ++row.n_detected;
        errors.push_back(o.angular_error);
        if (o.nmse) {
          nmse_sum += *o.nmse;
          ++nmse_count;
        }
      }
      row.mean_detection_rate = det_count > 0 ? det_sum / static_cast<double>(det_count) : 0.0;
      row.angular_rmse_deg = angular_rmse(errors);
      row.mean_nmse = nmse_count > 0 ? nmse_sum / static_cast<double>(nmse_count) : std::nan("");
      report.rows.push_back(row);
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  out.precision(12);
  out << "estimator,snr_db,p_d,rmse_deg,nmse,n_vectors,n_detected\n";
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      out << rep.estimator << ',' << r.snr_db << ',' << r.mean_detection_rate << ',';
      if (r.angular_rmse_deg) {
        out << *r.angular_rmse_deg;
      } else {
        out << "nan";
      }
      out << ',' << r.mean_nmse << ',' << r.n_vectors << ',' << r.n_detected << '\n';
    }
  }
  require(out.good(), ErrorKind::Io, "write failed for " + path.string());
}

inline nlohmann::json sweep_json(const std::vector<MetricsReport>& reports, const std::string& config_hash) {
  nlohmann::json doc;
  doc["config_hash"] = config_hash;
  doc["reports"] = nlohmann::json::array();
  for (const auto& rep : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
      nlohmann::json row{{"snr_db", r.snr_db},           {"p_d", r.mean_detection_rate}, {"nmse", r.mean_nmse},
                         {"n_vectors", r.n_vectors},     {"n_detected", r.n_detected},   {"n_failed", r.n_failed}};
      row["rmse_deg"] = r.angular_rmse_deg ? nlohmann::json(*r.angular_rmse_deg) : nlohmann::json(nullptr);
      if (!std::isfinite(r.mean_nmse)) row["nmse"] = nullptr;
      rows.push_back(std::move(row));
    }
    doc["reports"].push_back({{"estimator", rep.estimator}, {"rows", std::move(rows)}});
  }
  return doc;
}

}  // namespace doa
