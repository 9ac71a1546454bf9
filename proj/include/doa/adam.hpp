#pragma once

#include "doa/networks.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace doa {

/// Adam over the real degrees of freedom of a network; a complex weight is
/// two independent reals.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Steps rejected because the gradient held a non-finite value.
  std::uint64_t skipped_steps = 0;
  /// Training epochs completed with this state.
  std::uint32_t epochs_done = 0;
};

inline AdamState make_adam(double learning_rate) {
  AdamState st;
  st.learning_rate = learning_rate;
  return st;
}

/// One bias-corrected Adam step followed by the network's constraints
/// (beta/rho clamps, Hermitian ties). Returns false, leaving the network
/// untouched, when the gradient is not finite.
inline bool adam_step(Network& net, Network& grad, AdamState& st) {
  auto params = parameter_blocks(net);
  const auto grads = parameter_blocks(grad);
  require(params.size() == grads.size(), ErrorKind::Contract, "gradient shape mismatch");
  std::size_t total = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].values.size() == grads[b].values.size(), ErrorKind::Contract, "gradient shape mismatch");
    for (double g : grads[b].values) {
      if (!std::isfinite(g)) {
        ++st.skipped_steps;
        return false;
      }
    }
    total += params[b].values.size();
  }
  if (st.first_moment.empty()) {
    st.first_moment.assign(total, 0.0);
    st.second_moment.assign(total, 0.0);
  }
  require(st.first_moment.size() == total, ErrorKind::Contract, "optimizer state does not match the network");

  ++st.step_count;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  std::size_t k = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b].values;
    auto g = grads[b].values;
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      double& m = st.first_moment[k];
      double& v = st.second_moment[k];
      m = st.beta1 * m + (1.0 - st.beta1) * g[i];
      v = st.beta2 * v + (1.0 - st.beta2) * g[i] * g[i];
      p[i] -= st.learning_rate * (m / c1) / (std::sqrt(v / c2) + st.epsilon);
    }
  }
  apply_constraints(net);
  return true;
}

/// Folds the gradient of CHADMM-Net's tied entries into their free
/// counterparts (w(N-n) receives conj(g(n))) and zeroes the tied slots.
/// This is the alternative to updating freely and projecting afterwards.
inline void fold_tied_gradients(Network& grad) {
  if (grad.kind != NetKind::ChadmmNet) return;
  for (auto& layer : grad.layers) {
    auto& g = std::get<CirculantAdmmLayer>(layer).w;
    const Index n = g.size();
    for (Index i = n / 2 + 1; i < n; ++i) {
      g[n - i] += std::conj(g[i]);
      g[i] = 0.0;
    }
  }
}

}  // namespace doa
