#pragma once

#include "doa/array_signal.hpp"
#include "doa/circulant.hpp"
#include "doa/error.hpp"
#include "doa/solvers.hpp"
#include "doa/types.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace doa {

enum class NetKind { Lista, Tlista, Thlista, AdmmNet, CadmmNet, ChadmmNet };

inline constexpr NetKind kAllNetKinds[] = {NetKind::Lista,   NetKind::Tlista,   NetKind::Thlista,
                                           NetKind::AdmmNet, NetKind::CadmmNet, NetKind::ChadmmNet};

inline const char* to_string(NetKind kind) {
  switch (kind) {
    case NetKind::Lista: return "lista";
    case NetKind::Tlista: return "tlista";
    case NetKind::Thlista: return "thlista";
    case NetKind::AdmmNet: return "admmnet";
    case NetKind::CadmmNet: return "cadmmnet";
    case NetKind::ChadmmNet: return "chadmmnet";
  }
  return "unknown";
}

inline std::optional<NetKind> parse_net_kind(std::string_view name) {
  for (NetKind k : kAllNetKinds) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

inline bool is_admm_family(NetKind kind) {
  return kind == NetKind::AdmmNet || kind == NetKind::CadmmNet || kind == NetKind::ChadmmNet;
}

// Layer parameter blocks. TLISTA and THLISTA share ToeplitzIstaLayer;
// CADMM-Net stores w in the eigenvalue domain, CHADMM-Net stores it as the
// first column of the circulant, so they share CirculantAdmmLayer but read
// w differently.

struct DenseIstaLayer {
  CMatrix w1;  // N x N
  CMatrix w2;  // N x M
  double beta = 0.0;
};

struct ToeplitzIstaLayer {
  CVector w1;  // Toeplitz generator, length 2N - 1, entry s at s + N - 1
  CMatrix w2;  // N x M
  double beta = 0.0;
};

struct DenseAdmmLayer {
  CMatrix w;  // N x N
  double rho = 1.0;
  double beta = 0.0;
};

struct CirculantAdmmLayer {
  CVector w;  // length N
  double rho = 1.0;
  double beta = 0.0;
};

using LayerParams = std::variant<DenseIstaLayer, ToeplitzIstaLayer, DenseAdmmLayer, CirculantAdmmLayer>;

struct Network {
  NetKind kind = NetKind::CadmmNet;
  Index m = 0;
  Index n = 0;
  double gamma = 0.5;
  std::vector<LayerParams> layers;
  /// Threshold of the output soft-threshold (ADMM family only).
  double final_beta = 0.0;
  std::uint64_t dictionary_id = 0;
  /// CHADMM-Net: also force the self-paired entries of w to be real.
  bool strict_hermitian = false;

  Index depth() const { return static_cast<Index>(layers.size()); }
};

inline constexpr double kRhoFloor = 1e-6;

// ---------------------------------------------------------------------------
// Structural constraints

/// Ties w(n) = conj(w(N - n)) for n = floor(N/2)+1 .. N-1 (zero-based), copying
/// from the free half. In strict mode w(0), and w(N/2) for even N, are made
/// real so the circulant is exactly Hermitian.
inline CVector project_hermitian_circulant(CVector w, bool strict = false) {
  const Index n = w.size();
  for (Index i = n / 2 + 1; i < n; ++i) w[i] = std::conj(w[n - i]);
  if (strict && n > 0) {
    w[0] = w[0].real();
    if (n % 2 == 0) w[n / 2] = w[n / 2].real();
  }
  return w;
}

/// Hermitian tie on a Toeplitz generator: g(-s) = conj(g(s)), g(0) real.
inline CVector toeplitz_tie(CVector g) {
  const Index n = (g.size() + 1) / 2;
  for (Index s = 1; s < n; ++s) g[n - 1 - s] = std::conj(g[n - 1 + s]);
  g[n - 1] = g[n - 1].real();
  return g;
}

/// Clamps beta and rho and re-applies the kind's weight constraint.
inline void apply_constraints(Network& net) {
  for (auto& layer : net.layers) {
    std::visit(
        [&](auto& p) {
          using T = std::decay_t<decltype(p)>;
          p.beta = std::max(p.beta, 0.0);
          if constexpr (std::is_same_v<T, DenseAdmmLayer> || std::is_same_v<T, CirculantAdmmLayer>) {
            p.rho = std::max(p.rho, kRhoFloor);
          }
          if constexpr (std::is_same_v<T, CirculantAdmmLayer>) {
            if (net.kind == NetKind::ChadmmNet) p.w = project_hermitian_circulant(p.w, net.strict_hermitian);
          }
          if constexpr (std::is_same_v<T, ToeplitzIstaLayer>) {
            if (net.kind == NetKind::Thlista) p.w1 = toeplitz_tie(p.w1);
          }
        },
        layer);
  }
  net.final_beta = std::max(net.final_beta, 0.0);
}

// ---------------------------------------------------------------------------
// Initialization: every layer starts at its parent iterative method.

inline Network init_network(NetKind kind, const Dictionary& dic, int t_layers, double beta0 = 0.1, double rho0 = 1.0,
                            bool strict_hermitian = false) {
  require(t_layers >= 1, ErrorKind::InvalidArgument, "network needs at least one layer");
  require(beta0 >= 0.0 && rho0 > 0.0, ErrorKind::InvalidArgument, "beta0 must be >= 0 and rho0 > 0");
  if (kind == NetKind::CadmmNet || kind == NetKind::ChadmmNet) {
    require(dic.circulant(), ErrorKind::StructureViolation,
            std::string(to_string(kind)) + " needs a gamma = 1/2 dictionary");
  }
  Network net;
  net.kind = kind;
  net.m = dic.rows();
  net.n = dic.grid_size();
  net.gamma = dic.geometry().gamma;
  net.dictionary_id = dic.id();
  net.final_beta = beta0;
  net.strict_hermitian = strict_hermitian;

  const double mu = dic.default_step();
  LayerParams proto;
  switch (kind) {
    case NetKind::Lista: {
      CMatrix w1 = -mu * dic.gram();
      w1.diagonal().array() += 1.0;
      proto = DenseIstaLayer{w1, mu * dic.matrix().adjoint(), beta0};
      break;
    }
    case NetKind::Tlista:
    case NetKind::Thlista: {
      CMatrix w1 = -mu * dic.gram();
      w1.diagonal().array() += 1.0;
      CVector g = toeplitz_generator(w1);
      if (kind == NetKind::Thlista) g = toeplitz_tie(g);
      proto = ToeplitzIstaLayer{g, mu * dic.matrix().adjoint(), beta0};
      break;
    }
    case NetKind::AdmmNet: proto = DenseAdmmLayer{dic.gram(), rho0, beta0}; break;
    case NetKind::CadmmNet: proto = CirculantAdmmLayer{dic.gram_col_dft(), rho0, beta0}; break;
    case NetKind::ChadmmNet:
      proto = CirculantAdmmLayer{project_hermitian_circulant(dic.gram_col(), strict_hermitian), rho0, beta0};
      break;
  }
  net.layers.assign(static_cast<std::size_t>(t_layers), proto);
  return net;
}

/// Learnable parameters per layer, complex vectors counted by their complex
/// length and the tied half of CHADMM-Net's w not counted.
inline Index layer_param_count(NetKind kind, Index m, Index n) {
  switch (kind) {
    case NetKind::AdmmNet: return n * n + 2;
    case NetKind::CadmmNet: return n + 2;
    case NetKind::ChadmmNet: return n / 2 + 3;
    case NetKind::Lista: return n * n + m * n + 1;
    case NetKind::Tlista: return (2 * n - 1) + m * n + 1;
    case NetKind::Thlista: return n + m * n + 1;
  }
  return 0;
}

/// Whole-network count: per-layer count times depth plus the output
/// threshold of the ADMM family.
inline Index param_count(const Network& net) {
  return layer_param_count(net.kind, net.m, net.n) * net.depth() + (is_admm_family(net.kind) ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Flat real views over the parameters, used by the optimizer and gradient
// checks. Complex storage is viewed as interleaved (re, im) pairs.

enum class ParamRole { Weight, Rho, Beta };

struct ParamBlock {
  std::span<double> values;
  ParamRole role;
};

namespace detail {
template <class Derived>
std::span<double> real_view(Eigen::PlainObjectBase<Derived>& m) {
  return {reinterpret_cast<double*>(m.data()), static_cast<std::size_t>(2 * m.size())};
}
}  // namespace detail

inline std::vector<ParamBlock> parameter_blocks(Network& net) {
  std::vector<ParamBlock> blocks;
  for (auto& layer : net.layers) {
    std::visit(
        [&](auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, DenseIstaLayer> || std::is_same_v<T, ToeplitzIstaLayer>) {
            blocks.push_back({detail::real_view(p.w1), ParamRole::Weight});
            blocks.push_back({detail::real_view(p.w2), ParamRole::Weight});
          } else {
            blocks.push_back({detail::real_view(p.w), ParamRole::Weight});
            blocks.push_back({std::span<double>(&p.rho, 1), ParamRole::Rho});
          }
          blocks.push_back({std::span<double>(&p.beta, 1), ParamRole::Beta});
        },
        layer);
  }
  if (is_admm_family(net.kind)) blocks.push_back({std::span<double>(&net.final_beta, 1), ParamRole::Beta});
  return blocks;
}

/// Number of real degrees of freedom exposed by parameter_blocks().
inline std::size_t real_dof(Network& net) {
  std::size_t total = 0;
  for (const auto& b : parameter_blocks(net)) total += b.values.size();
  return total;
}

/// Same shape as net, every parameter zero. Used as a gradient container.
inline Network zeros_like(const Network& net) {
  Network g = net;
  for (auto& block : parameter_blocks(g)) std::fill(block.values.begin(), block.values.end(), 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Per-layer operators derived from the parameters once per forward batch.
struct LayerOperator {
  std::optional<Eigen::PartialPivLU<CMatrix>> lu;  // ADMM-Net: W + rho I
  CVector spectral_denominator;                     // CADMM / CHADMM: w + rho, F w + rho
  ToeplitzOperator toeplitz;                        // TLISTA / THLISTA
};

namespace detail {

inline Eigen::PartialPivLU<CMatrix> factor_layer_system(const CMatrix& w, double rho) {
  CMatrix system = w;
  system.diagonal().array() += rho;
  Eigen::PartialPivLU<CMatrix> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-15) || !std::isfinite(rcond)) {
    // Tikhonov fallback for a (numerically) singular layer system.
    system.diagonal().array() += 1e-10;
    lu.compute(system);
  }
  return lu;
}

inline CVector checked_denominator(CVector d) {
  for (Index i = 0; i < d.size(); ++i) {
    require(std::abs(d[i]) >= kNearSingular, ErrorKind::NearSingular, "layer denominator entry below 1e-12");
  }
  return d;
}

}  // namespace detail

inline LayerOperator prepare_layer(NetKind kind, const LayerParams& params) {
  LayerOperator op;
  switch (kind) {
    case NetKind::AdmmNet: {
      const auto& p = std::get<DenseAdmmLayer>(params);
      op.lu = detail::factor_layer_system(p.w, p.rho);
      break;
    }
    case NetKind::CadmmNet: {
      const auto& p = std::get<CirculantAdmmLayer>(params);
      op.spectral_denominator = detail::checked_denominator((p.w.array() + p.rho).matrix());
      break;
    }
    case NetKind::ChadmmNet: {
      const auto& p = std::get<CirculantAdmmLayer>(params);
      op.spectral_denominator = detail::checked_denominator((fft(p.w).array() + p.rho).matrix());
      break;
    }
    case NetKind::Tlista:
    case NetKind::Thlista: op.toeplitz = ToeplitzOperator(std::get<ToeplitzIstaLayer>(params).w1); break;
    case NetKind::Lista: break;
  }
  return op;
}

/// Values kept from one layer for the backward pass.
struct LayerTrace {
  CVector input;   // u(t-1) or x(t-1)
  CVector shrunk;  // S_beta(u(t-1)); unused by the ISTA family
  CVector mid;     // ADMM-Net: solve result; CADMM/CHADMM: spectrum P; ISTA family: pre-threshold z
};

struct ForwardTrace {
  CVector drive;  // y_F for the ADMM family, y for the ISTA family
  std::vector<LayerTrace> layers;
  CVector last;  // u(T) or x(T)
  CVector output;
};

/// One layer. `drive` is y_F = A^H y for the ADMM family and y for the ISTA
/// family. When trace is non-null the intermediates are recorded.
inline CVector forward_layer(NetKind kind, const LayerParams& params, const LayerOperator& op, const CVector& prev,
                             const CVector& drive, LayerTrace* trace = nullptr) {
  if (is_admm_family(kind)) {
    const double rho = std::visit(
        [](const auto& p) -> double {
          if constexpr (requires { p.rho; }) return p.rho;
          else return 0.0;
        },
        params);
    const double beta = std::visit([](const auto& p) { return p.beta; }, params);
    const CVector shrunk = soft_threshold(prev, beta);
    const CVector r = drive + rho * (2.0 * shrunk - prev);
    CVector mid;
    CVector solved;
    if (kind == NetKind::AdmmNet) {
      solved = op.lu->solve(r);
      mid = solved;
    } else {
      mid = (fft(r).array() / op.spectral_denominator.array()).matrix();
      solved = ifft(mid);
    }
    CVector out = solved + prev - shrunk;
    if (trace) *trace = {prev, shrunk, std::move(mid)};
    return out;
  }

  CVector z;
  double beta = 0.0;
  if (kind == NetKind::Lista) {
    const auto& p = std::get<DenseIstaLayer>(params);
    z = p.w1 * prev + p.w2 * drive;
    beta = p.beta;
  } else {
    const auto& p = std::get<ToeplitzIstaLayer>(params);
    z = op.toeplitz.apply(prev) + p.w2 * drive;
    beta = p.beta;
  }
  CVector out = soft_threshold(z, beta);
  if (trace) *trace = {prev, CVector(), std::move(z)};
  return out;
}

/// Convenience overload that builds the layer operator on the fly.
inline CVector forward_layer(NetKind kind, const LayerParams& params, const CVector& prev, const CVector& drive) {
  return forward_layer(kind, params, prepare_layer(kind, params), prev, drive);
}

/// Network plus its per-layer operators, bound to the dictionary it was
/// initialized on. The network must outlive this object and stay unchanged.
class PreparedNetwork {
 public:
  PreparedNetwork(const Network& net, const Dictionary& dic) : net_(&net), dic_(&dic) {
    require(net.m == dic.rows() && net.n == dic.grid_size(), ErrorKind::Contract, "network/dictionary dimension mismatch");
    require(net.dictionary_id == dic.id(), ErrorKind::Contract, "network was initialized on a different dictionary");
    ops_.reserve(net.layers.size());
    for (const auto& layer : net.layers) ops_.push_back(prepare_layer(net.kind, layer));
  }

  const Network& network() const { return *net_; }
  const Dictionary& dictionary() const { return *dic_; }
  const LayerOperator& op(std::size_t t) const { return ops_[t]; }

  CVector drive(const CVector& y) const {
    require(y.size() == net_->m, ErrorKind::Contract, "measurement length mismatch");
    return is_admm_family(net_->kind) ? dic_->adjoint_apply(y) : y;
  }

  /// x(T) for measurement y; fills trace when non-null.
  CVector forward(const CVector& y, ForwardTrace* trace = nullptr) const {
    const CVector d = drive(y);
    if (trace) {
      trace->drive = d;
      trace->layers.assign(net_->layers.size(), {});
    }
    CVector state = CVector::Zero(net_->n);
    for (std::size_t t = 0; t < net_->layers.size(); ++t) {
      state = forward_layer(net_->kind, net_->layers[t], ops_[t], state, d, trace ? &trace->layers[t] : nullptr);
    }
    CVector out = is_admm_family(net_->kind) ? soft_threshold(state, net_->final_beta) : state;
    if (!all_finite(out)) fail(ErrorKind::Divergence, "network output is not finite");
    if (trace) {
      trace->last = std::move(state);
      trace->output = out;
    }
    return out;
  }

 private:
  const Network* net_;
  const Dictionary* dic_;
  std::vector<LayerOperator> ops_;
};

struct ForwardResult {
  CVector output;
  ForwardTrace trace;
};

inline ForwardResult forward(const Network& net, const CVector& y, const Dictionary& dic) {
  ForwardResult result;
  result.output = PreparedNetwork(net, dic).forward(y, &result.trace);
  return result;
}

}  // namespace doa
