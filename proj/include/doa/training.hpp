#pragma once

#include "doa/adam.hpp"
#include "doa/array_signal.hpp"
#include "doa/backward.hpp"
#include "doa/loss.hpp"
#include "doa/networks.hpp"
#include "doa/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

namespace doa {

struct TrainConfig {
  int epochs = 50;
  Index batch_size = 2048;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  int validation_every = 1;
  int workers = 1;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Network final_net;
  Network best_net;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> history;
  AdamState optimizer;
};

/// Samples per reduction chunk. Gradients are summed within a chunk in
/// sample order and chunks are summed in chunk order, so the result is the
/// same for any worker count.
inline constexpr Index kReductionChunk = 16;

namespace detail {

inline void add_into(Network& acc, Network& g) {
  auto a = parameter_blocks(acc);
  const auto b = parameter_blocks(g);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].values.size(); ++k) a[i].values[k] += b[i].values[k];
  }
}

inline void scale(Network& g, double s) {
  for (auto& block : parameter_blocks(g)) {
    for (double& v : block.values) v *= s;
  }
}

/// Runs fn(chunk) for chunk in [0, chunks) on up to `workers` threads, in
/// waves of `workers` chunks; after each wave reduce(chunk) runs in order.
template <class Work, class Reduce>
void chunked_waves(Index chunks, int workers, Work&& work, Reduce&& reduce) {
  const Index wave = std::max(1, workers);
  for (Index start = 0; start < chunks; start += wave) {
    const Index stop = std::min(chunks, start + wave);
    if (stop - start == 1 || workers <= 1) {
      for (Index c = start; c < stop; ++c) work(c, c - start);
    } else {
      std::vector<std::jthread> pool;
      for (Index c = start; c < stop; ++c) pool.emplace_back([&, c] { work(c, c - start); });
    }
    for (Index c = start; c < stop; ++c) reduce(c, c - start);
  }
}

}  // namespace detail

struct BatchResult {
  double mean_loss = 0.0;
  Index used = 0;
  Network grad;
};

/// Mean loss and mean gradient over samples[indices]. Samples whose ground
/// truth vanishes are skipped.
inline BatchResult batch_gradient(const PreparedNetwork& prepared, const LaplacianSmoother& smoother,
                                  const std::vector<Sample>& samples, std::span<const std::size_t> indices,
                                  int workers = 1) {
  const Network& net = prepared.network();
  const Index count = static_cast<Index>(indices.size());
  const Index chunks = (count + kReductionChunk - 1) / kReductionChunk;
  const auto slots = static_cast<std::size_t>(std::max(1, workers));
  std::vector<Network> slot_grad(slots, zeros_like(net));
  std::vector<double> slot_loss(slots, 0.0);
  std::vector<Index> slot_used(slots, 0);
  std::vector<std::exception_ptr> slot_error(slots);

  BatchResult out{0.0, 0, zeros_like(net)};
  double loss_sum = 0.0;
  detail::chunked_waves(
      chunks, workers,
      [&](Index chunk, Index slot) {
        const auto s = static_cast<std::size_t>(slot);
        try {
          for (auto& block : parameter_blocks(slot_grad[s])) std::fill(block.values.begin(), block.values.end(), 0.0);
          slot_loss[s] = 0.0;
          slot_used[s] = 0;
          const Index lo = chunk * kReductionChunk;
          const Index hi = std::min(count, lo + kReductionChunk);
          ForwardTrace trace;
          for (Index i = lo; i < hi; ++i) {
            const Sample& sample = samples[indices[static_cast<std::size_t>(i)]];
            prepared.forward(sample.measurement, &trace);
            LossValue lv;
            try {
              lv = smoothed_nmse_with_grad(smoother, trace.output, sample.scene.sparse_x);
            } catch (const Error& e) {
              if (e.kind() == ErrorKind::UndefinedLoss) continue;
              throw;
            }
            slot_loss[s] += lv.loss;
            ++slot_used[s];
            accumulate_backward(prepared, trace, lv.grad, slot_grad[s]);
          }
        } catch (...) {
          slot_error[s] = std::current_exception();
        }
      },
      [&](Index, Index slot) {
        const auto s = static_cast<std::size_t>(slot);
        if (slot_error[s]) std::rethrow_exception(slot_error[s]);
        detail::add_into(out.grad, slot_grad[s]);
        loss_sum += slot_loss[s];
        out.used += slot_used[s];
      });
  if (out.used > 0) {
    out.mean_loss = loss_sum / static_cast<double>(out.used);
    detail::scale(out.grad, 1.0 / static_cast<double>(out.used));
  }
  return out;
}

/// Mean smoothed-NMSE loss of the network over a dataset.
inline double dataset_loss(const Network& net, const Dictionary& dic, const std::vector<Sample>& samples,
                           const LossConfig& loss_cfg) {
  const PreparedNetwork prepared(net, dic);
  const LaplacianSmoother smoother(net.n, loss_cfg);
  double sum = 0.0;
  Index used = 0;
  for (const Sample& s : samples) {
    const CVector out = prepared.forward(s.measurement);
    try {
      sum += smoothed_nmse_with_grad(smoother, out, s.scene.sparse_x).loss;
      ++used;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedLoss) throw;
    }
  }
  return used > 0 ? sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the smoothed NMSE. Epoch 0 records the losses of the
/// initial network. The best-validation network is kept next to the final
/// one; there is no early stopping. A resumed state continues after its
/// completed epochs, up to cfg.epochs in total.
inline TrainResult train(Network net, const Dictionary& dic, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& val_set, const TrainConfig& cfg, const LossConfig& loss_cfg,
                         const EpochCallback& on_epoch = {}, std::optional<AdamState> resume_state = std::nullopt) {
  require(cfg.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  require(cfg.learning_rate >= 0.0, ErrorKind::InvalidArgument, "learning rate must be >= 0");
  require(cfg.epochs >= 0, ErrorKind::InvalidArgument, "epochs must be >= 0");
  require(net.m == dic.rows() && net.n == dic.grid_size() && net.dictionary_id == dic.id(), ErrorKind::Contract,
          "network does not match the dictionary");
  for (const auto* set : {&train_set, &val_set}) {
    for (const Sample& s : *set) {
      require(s.measurement.size() == dic.rows() && s.scene.sparse_x.size() == dic.grid_size(), ErrorKind::Contract,
              "dataset dimensions do not match the network");
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  const LaplacianSmoother smoother(net.n, loss_cfg);

  TrainResult result;
  result.optimizer = resume_state.value_or(make_adam(cfg.learning_rate));
  result.optimizer.learning_rate = cfg.learning_rate;

  EpochRecord initial{static_cast<int>(result.optimizer.epochs_done),
                      train_set.empty() ? 0.0 : dataset_loss(net, dic, train_set, loss_cfg),
                      val_set.empty() ? 0.0 : dataset_loss(net, dic, val_set, loss_cfg), elapsed()};
  result.history.push_back(initial);
  result.best_net = net;
  result.best_epoch = initial.epoch;
  result.best_val_loss = initial.val_loss;
  if (on_epoch) on_epoch(initial);

  std::vector<std::size_t> order(train_set.size());
  const int first = static_cast<int>(result.optimizer.epochs_done) + 1;
  for (int epoch = first; epoch <= cfg.epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, 0x7A1, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Index loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      BatchResult br;
      {
        const PreparedNetwork prepared(net, dic);
        br = batch_gradient(prepared, smoother, train_set, batch, cfg.workers);
      }
      if (br.used == 0) continue;
      loss_sum += br.mean_loss * static_cast<double>(br.used);
      loss_count += br.used;
      adam_step(net, br.grad, result.optimizer);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    const bool validate = !val_set.empty() && (epoch % std::max(1, cfg.validation_every) == 0 || epoch == cfg.epochs);
    rec.val_loss = validate ? dataset_loss(net, dic, val_set, loss_cfg) : std::numeric_limits<double>::quiet_NaN();
    rec.wall_seconds = elapsed();
    if (validate && rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.best_net = net;
    }
    result.optimizer.epochs_done = static_cast<std::uint32_t>(epoch);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_net = std::move(net);
  return result;
}

inline void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss,wall_seconds\n";
  out.precision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.wall_seconds << '\n';
  require(out.good(), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace doa
