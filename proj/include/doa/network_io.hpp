#pragma once

#include "doa/adam.hpp"
#include "doa/binary_io.hpp"
#include "doa/networks.hpp"

#include <filesystem>

namespace doa {

// Checkpoint container, all fields little-endian:
//   magic "DOANETC1" | u32 version | u32 kind tag | u32 flags | u32 reserved
//   u64 M | u64 N | u64 T | f64 gamma | u64 dictionary id
//   per layer, by kind (complex arrays as interleaved re/im f64, matrices
//   column-major):
//     lista:            W1[N*N] W2[N*M] beta
//     tlista, thlista:  w1[2N-1] W2[N*M] beta
//     admmnet:          W[N*N] rho beta
//     cadmmnet:         w[N] rho beta
//     chadmmnet:        w[N] rho beta
//   f64 final_beta
// flags bit 0: strict Hermitian projection (CHADMM-Net).

inline constexpr io::Magic kCheckpointMagic = {'D', 'O', 'A', 'N', 'E', 'T', 'C', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint32_t kind_tag(NetKind kind) { return static_cast<std::uint32_t>(kind); }

inline void write_checkpoint(const std::filesystem::path& path, const Network& net) {
  io::atomic_write(path, [&](io::BinaryWriter& out) {
    out.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
    out.u32(kCheckpointVersion);
    out.u32(kind_tag(net.kind));
    out.u32(net.strict_hermitian ? 1U : 0U);
    out.u32(0);
    out.u64(static_cast<std::uint64_t>(net.m));
    out.u64(static_cast<std::uint64_t>(net.n));
    out.u64(static_cast<std::uint64_t>(net.depth()));
    out.f64(net.gamma);
    out.u64(net.dictionary_id);
    for (const auto& layer : net.layers) {
      std::visit(
          [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, DenseIstaLayer> || std::is_same_v<T, ToeplitzIstaLayer>) {
              out.complex_array(p.w1.data(), p.w1.size());
              out.complex_array(p.w2.data(), p.w2.size());
            } else {
              out.complex_array(p.w.data(), p.w.size());
              out.f64(p.rho);
            }
            out.f64(p.beta);
          },
          layer);
    }
    out.f64(net.final_beta);
  });
}

inline Network read_checkpoint(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  io::expect_magic(in, kCheckpointMagic, "checkpoint");
  const auto version = in.u32();
  require(version == kCheckpointVersion, ErrorKind::Io, "unsupported checkpoint version " + std::to_string(version));
  const auto tag = in.u32();
  require(tag <= kind_tag(NetKind::ChadmmNet), ErrorKind::Io, "unknown network kind tag");
  Network net;
  net.kind = static_cast<NetKind>(tag);
  net.strict_hermitian = (in.u32() & 1U) != 0;
  in.u32();
  net.m = static_cast<Index>(in.u64());
  net.n = static_cast<Index>(in.u64());
  const auto depth = in.u64();
  require(net.m >= 1 && net.n > net.m && net.n < (1 << 20) && depth >= 1 && depth < 100000, ErrorKind::Io,
          "implausible checkpoint dimensions");
  net.gamma = in.f64();
  net.dictionary_id = in.u64();
  const Index n = net.n;
  const Index m = net.m;
  for (std::uint64_t t = 0; t < depth; ++t) {
    switch (net.kind) {
      case NetKind::Lista: {
        DenseIstaLayer p{CMatrix(n, n), CMatrix(n, m), 0.0};
        in.complex_array(p.w1.data(), p.w1.size());
        in.complex_array(p.w2.data(), p.w2.size());
        p.beta = in.f64();
        net.layers.emplace_back(std::move(p));
        break;
      }
      case NetKind::Tlista:
      case NetKind::Thlista: {
        ToeplitzIstaLayer p{CVector(2 * n - 1), CMatrix(n, m), 0.0};
        in.complex_array(p.w1.data(), p.w1.size());
        in.complex_array(p.w2.data(), p.w2.size());
        p.beta = in.f64();
        net.layers.emplace_back(std::move(p));
        break;
      }
      case NetKind::AdmmNet: {
        DenseAdmmLayer p{CMatrix(n, n), 0.0, 0.0};
        in.complex_array(p.w.data(), p.w.size());
        p.rho = in.f64();
        p.beta = in.f64();
        net.layers.emplace_back(std::move(p));
        break;
      }
      case NetKind::CadmmNet:
      case NetKind::ChadmmNet: {
        CirculantAdmmLayer p{CVector(n), 0.0, 0.0};
        in.complex_array(p.w.data(), p.w.size());
        p.rho = in.f64();
        p.beta = in.f64();
        net.layers.emplace_back(std::move(p));
        break;
      }
    }
  }
  net.final_beta = in.f64();
  require(in.at_end(), ErrorKind::Io, "trailing bytes in checkpoint");
  return net;
}

// Optimizer state next to a checkpoint, for resuming:
//   magic "DOAADAM1" | u32 version | u32 epochs done | u64 steps | u64 skipped
//   f64 lr, beta1, beta2, epsilon | u64 count | f64 m[count] | f64 v[count]

inline constexpr io::Magic kAdamMagic = {'D', 'O', 'A', 'A', 'D', 'A', 'M', '1'};

inline void write_adam_state(const std::filesystem::path& path, const AdamState& st) {
  io::atomic_write(path, [&](io::BinaryWriter& out) {
    out.bytes(kAdamMagic.data(), kAdamMagic.size());
    out.u32(1);
    out.u32(st.epochs_done);
    out.u64(st.step_count);
    out.u64(st.skipped_steps);
    for (double v : {st.learning_rate, st.beta1, st.beta2, st.epsilon}) out.f64(v);
    out.u64(st.first_moment.size());
    for (double v : st.first_moment) out.f64(v);
    for (double v : st.second_moment) out.f64(v);
  });
}

inline AdamState read_adam_state(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  io::expect_magic(in, kAdamMagic, "optimizer state");
  require(in.u32() == 1, ErrorKind::Io, "unsupported optimizer state version");
  AdamState st;
  st.epochs_done = in.u32();
  st.step_count = in.u64();
  st.skipped_steps = in.u64();
  st.learning_rate = in.f64();
  st.beta1 = in.f64();
  st.beta2 = in.f64();
  st.epsilon = in.f64();
  const auto count = in.u64();
  require(count < (1ULL << 32), ErrorKind::Io, "implausible optimizer state size");
  st.first_moment.resize(count);
  st.second_moment.resize(count);
  for (double& v : st.first_moment) v = in.f64();
  for (double& v : st.second_moment) v = in.f64();
  require(in.at_end(), ErrorKind::Io, "trailing bytes in optimizer state");
  return st;
}

}  // namespace doa
