#pragma once

#include "doa/array_signal.hpp"
#include "doa/backward.hpp"
#include "doa/circulant.hpp"
#include "doa/networks.hpp"
#include "doa/rng.hpp"
#include "doa/solvers.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace doa {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 7;
  /// The circulant product under test; swapped out by mutation tests.
  std::function<CVector(const CirculantOperator&, const CVector&)> circulant_product = circulant_apply;
};

namespace detail {

inline CVector random_cvector(Index n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CVector v(n);
  for (auto& c : v) c = {g(rng), g(rng)};
  return v;
}

inline Sample random_sample(const Dictionary& dic, std::uint64_t seed, double snr_db = 20.0) {
  DatasetSpec spec;
  spec.k_range = {1, 4};
  spec.snr_db = snr_db;
  spec.seed = seed;
  return generate_sample(dic, spec, 0);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

template <class Fn>
CheckResult guarded(std::string name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {std::move(name), false, std::string("threw: ") + e.what()};
  }
}

}  // namespace detail

/// Circulant product against the dense matrix it represents.
inline CheckResult check_circulant_apply(const VerifyOptions& opt) {
  return detail::guarded("circulant_apply", [&] {
    Rng rng = make_rng(opt.seed, 1);
    double worst = 0.0;
    for (Index n : {7, 16, 64}) {
      const auto op = CirculantOperator::from_first_column(detail::random_cvector(n, rng));
      const CVector x = detail::random_cvector(n, rng);
      worst = std::max(worst, relative_error(opt.circulant_product(op, x), op.dense() * x));
    }
    return CheckResult{"circulant_apply", worst < 1e-12, "max rel err " + detail::fmt(worst)};
  });
}

/// The Gram matrix is circulant at gamma = 1/2 and not at smaller gamma.
inline CheckResult check_gram_circulance(const VerifyOptions& opt) {
  return detail::guarded("gram_circulance", [&] {
    bool ok = true;
    std::string detail;
    for (double gamma : {0.5, 0.25}) {
      const auto geom = make_sla(12, 40, opt.seed, gamma);
      const Dictionary dic = build_dictionary(geom, 64);
      const bool circ = is_circulant(dic.gram(), 1e-9);
      ok = ok && (circ == (gamma == 0.5));
      detail += "gamma=" + std::to_string(gamma).substr(0, 4) + (circ ? " circulant; " : " not circulant; ");
    }
    return CheckResult{"gram_circulance", ok, detail};
  });
}

/// FFT-domain compact ADMM against the full three-variable ADMM.
inline CheckResult check_fast_equals_admm(const VerifyOptions& opt) {
  return detail::guarded("fast_compact_equals_admm", [&] {
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) {
      const auto geom = i % 2 == 0 ? make_ula(16) : make_sla(16, 40, opt.seed + i);
      const Dictionary dic = build_dictionary(geom, 64);
      const Sample s = detail::random_sample(dic, derive_seed(opt.seed, 2, i));
      const SolverConfig cfg{0.05, 1.0, 100, std::nullopt};
      worst = std::max(worst, relative_error(fast_compact_admm(dic, s.measurement, cfg), admm(dic, s.measurement, cfg)));
    }
    return CheckResult{"fast_compact_equals_admm", worst < 1e-10, "max rel err " + detail::fmt(worst)};
  });
}

/// Every architecture at initialization against its parent solver.
inline CheckResult check_init_equivalence(const VerifyOptions& opt) {
  return detail::guarded("init_equivalence", [&] {
    const Dictionary dic = build_dictionary(make_sla(12, 30, opt.seed), 48);
    const Sample s = detail::random_sample(dic, derive_seed(opt.seed, 3, 0));
    const double beta0 = 0.05;
    const double rho0 = 1.0;
    const int depth = 30;
    SolverConfig ista_cfg{beta0 / dic.default_step(), 1.0, depth, std::nullopt};
    SolverConfig admm_cfg{beta0 / rho0, rho0, depth, std::nullopt};
    const CVector ista_ref = ista(dic, s.measurement, ista_cfg);
    const CVector admm_ref = compact_admm(dic, s.measurement, admm_cfg);
    double worst = 0.0;
    for (NetKind kind : kAllNetKinds) {
      const Network net = init_network(kind, dic, depth, beta0, rho0);
      const CVector out = forward(net, s.measurement, dic).output;
      worst = std::max(worst, relative_error(out, is_admm_family(kind) ? admm_ref : ista_ref));
    }
    return CheckResult{"init_equivalence", worst < 1e-9, "max rel err " + detail::fmt(worst)};
  });
}

/// Analytic gradients against central differences on a small instance, at a
/// sample whose threshold inputs stay clear of the kinks.
inline CheckResult check_gradients(const VerifyOptions& opt) {
  return detail::guarded("gradient_check", [&] {
    const Dictionary dic = build_dictionary(make_ula(8), 16);
    double worst = 0.0;
    std::string detail;
    for (NetKind kind : kAllNetKinds) {
      const Network net = init_network(kind, dic, 3, 0.05, 1.0);
      std::optional<Sample> sample;
      for (std::uint64_t i = 0; i < 64 && !sample; ++i) {
        Sample s = detail::random_sample(dic, derive_seed(opt.seed, 4, i));
        if (threshold_margin(net, dic, s.measurement) >= kGradCheckMinMargin) sample = std::move(s);
      }
      if (!sample) return CheckResult{"gradient_check", false, std::string("no kink-free sample for ") + to_string(kind)};
      const double err = grad_check(net, dic, sample->measurement, sample->scene.sparse_x);
      worst = std::max(worst, err);
      detail += std::string(to_string(kind)) + "=" + detail::fmt(err) + " ";
    }
    return CheckResult{"gradient_check", worst < 1e-5, detail};
  });
}

inline std::vector<CheckResult> run_verify(const VerifyOptions& opt = {}) {
  return {check_circulant_apply(opt), check_gram_circulance(opt), check_fast_equals_admm(opt),
          check_init_equivalence(opt), check_gradients(opt)};
}

}  // namespace doa
