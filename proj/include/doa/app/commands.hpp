#pragma once

#include "doa/app/config.hpp"
#include "doa/dataset_io.hpp"
#include "doa/evaluation.hpp"
#include "doa/network_io.hpp"
#include "doa/training.hpp"
#include "doa/verify.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace doa::app {

namespace fs = std::filesystem;

struct CommandContext {
  RunConfig cfg;
  fs::path out;
  std::optional<fs::path> data_dir;
  std::optional<fs::path> checkpoint_dir;
  std::optional<fs::path> resume;
  std::ostream* log = &std::cout;

  std::ostream& os() const { return *log; }
  fs::path data() const { return data_dir.value_or(out); }
  fs::path checkpoints() const { return checkpoint_dir.value_or(out); }
};

/// Exit codes: 0 success, 2 configuration, 3 IO, 4 numerical failure.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return 3;
    case ErrorKind::Divergence:
    case ErrorKind::Numerical:
    case ErrorKind::NearSingular:
    case ErrorKind::SamplingFailure:
    case ErrorKind::UndefinedLoss: return 4;
    default: return 2;
  }
}

inline void write_manifest(const CommandContext& ctx, const std::string& command, const json& outputs) {
  json doc{{"command", command},
           {"config", to_json(ctx.cfg)},
           {"config_hash", config_hash(ctx.cfg)},
           {"outputs", outputs}};
  io::write_json(ctx.out / (command + ".manifest.json"), doc);
}

inline std::string snr_tag(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", snr);
  return buf;
}

inline fs::path test_file(const fs::path& dir, double snr) { return dir / ("test_snr" + snr_tag(snr) + ".bin"); }

inline Dictionary config_dictionary(const RunConfig& cfg) { return build_dictionary(make_geometry(cfg), cfg.grid_size); }

/// Rejects data whose dictionary differs from the configured one.
inline void check_data_matches(const Dictionary& configured, const DatasetFile& file, const fs::path& path) {
  const bool same = file.geometry.positions == configured.geometry().positions &&
                    file.geometry.gamma == configured.geometry().gamma && file.grid_size == configured.grid_size();
  require(same, ErrorKind::Config, path.string() + " was generated for a different array or grid than the config");
}

// ---------------------------------------------------------------------------

inline int cmd_gen_data(const CommandContext& ctx) {
  const RunConfig& c = ctx.cfg;
  const Dictionary dic = config_dictionary(c);
  const NoiseConvention noise = noise_convention(c);
  DatasetSpec spec;
  spec.k_range = {c.data.k_min, c.data.k_max};
  spec.noise = noise;
  spec.min_sep = train_min_sep(c);
  spec.snr_db = c.data.train_snr_db;

  json outputs = json::array();
  auto emit = [&](const fs::path& path, const DatasetSpec& s, const std::vector<Sample>& samples,
                  const std::vector<double>& levels) {
    write_dataset(path, dic, samples, noise);
    io::write_json(manifest_path(path), dataset_manifest(dic, s, levels));
    outputs.push_back(path.filename().string());
    ctx.os() << "wrote " << path.string() << " (" << samples.size() << " samples)\n";
  };

  spec.count = c.data.train_count;
  spec.seed = derive_seed(c.seed, 11, 0);
  emit(ctx.out / "train.bin", spec, generate_dataset(dic, spec), {spec.snr_db});

  spec.count = c.data.val_count;
  spec.seed = derive_seed(c.seed, 12, 0);
  emit(ctx.out / "val.bin", spec, generate_dataset(dic, spec), {spec.snr_db});

  DatasetSpec test = spec;
  test.count = c.data.test_count;
  test.min_sep = test_min_sep(c);
  test.seed = derive_seed(c.seed, 13, 0);
  const auto levels = generate_sweep(dic, test, c.data.test_snr_db);
  for (const auto& level : levels) {
    DatasetSpec s = test;
    s.snr_db = level.snr_db;
    emit(test_file(ctx.out, level.snr_db), s, level.samples, {level.snr_db});
  }
  write_manifest(ctx, "gen-data", outputs);
  return 0;
}

// ---------------------------------------------------------------------------

inline fs::path checkpoint_path(const fs::path& dir, NetKind kind, bool best = false) {
  return dir / (std::string(to_string(kind)) + (best ? ".best.ckpt" : ".ckpt"));
}

inline fs::path adam_path(const fs::path& checkpoint) {
  auto p = checkpoint;
  p += ".adam";
  return p;
}

inline int cmd_train(const CommandContext& ctx) {
  const RunConfig& c = ctx.cfg;
  const NetKind kind = *parse_net_kind(c.network.kind);
  const Dictionary dic = config_dictionary(c);
  const fs::path train_path = ctx.data() / "train.bin";
  const fs::path val_path = ctx.data() / "val.bin";
  DatasetFile train_file = read_dataset(train_path);
  DatasetFile val_file = read_dataset(val_path);
  check_data_matches(dic, train_file, train_path);
  check_data_matches(dic, val_file, val_path);

  Network net;
  std::optional<AdamState> adam;
  if (ctx.resume) {
    net = read_checkpoint(*ctx.resume);
    require(net.kind == kind, ErrorKind::Config, "checkpoint kind does not match network.kind");
    require(net.m == dic.rows() && net.n == dic.grid_size() && net.dictionary_id == dic.id(), ErrorKind::Config,
            "checkpoint does not match the configured dictionary");
    if (fs::exists(adam_path(*ctx.resume))) adam = read_adam_state(adam_path(*ctx.resume));
  } else {
    net = init_network(kind, dic, c.network.layers, c.network.beta0, c.network.rho0, c.network.strict_hermitian);
  }

  ctx.os() << "training " << to_string(kind) << ": " << param_count(net) << " parameters, "
           << train_file.samples.size() << " train / " << val_file.samples.size() << " val samples\n";
  const TrainResult result =
      train(std::move(net), dic, train_file.samples, val_file.samples, train_config(c), c.loss,
            [&](const EpochRecord& r) {
              ctx.os() << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << " ("
                       << r.wall_seconds << " s)\n";
            },
            adam);

  const fs::path final_path = checkpoint_path(ctx.out, kind);
  const fs::path best_path = checkpoint_path(ctx.out, kind, true);
  const fs::path history_path = ctx.out / (std::string(to_string(kind)) + ".history.csv");
  write_checkpoint(final_path, result.final_net);
  write_adam_state(adam_path(final_path), result.optimizer);
  write_checkpoint(best_path, result.best_net);
  write_history_csv(history_path, result.history);
  ctx.os() << "best epoch " << result.best_epoch << " val " << result.best_val_loss << "\n";
  write_manifest(ctx, std::string("train-") + to_string(kind),
                 {final_path.filename().string(), best_path.filename().string(),
                  adam_path(final_path).filename().string(), history_path.filename().string()});
  return 0;
}

// ---------------------------------------------------------------------------

inline std::vector<SnrLevelSet> load_test_levels(const CommandContext& ctx, const Dictionary& dic) {
  std::vector<SnrLevelSet> levels;
  for (double snr : ctx.cfg.data.test_snr_db) {
    const fs::path path = test_file(ctx.data(), snr);
    DatasetFile file = read_dataset(path);
    check_data_matches(dic, file, path);
    levels.push_back({snr, std::move(file.samples)});
  }
  return levels;
}

inline int cmd_eval(const CommandContext& ctx) {
  const RunConfig& c = ctx.cfg;
  require(!c.eval.estimators.empty(), ErrorKind::Config, "eval.estimators is empty");
  const Dictionary dic = config_dictionary(c);
  const auto levels = load_test_levels(ctx, dic);

  std::vector<Estimator> estimators;
  for (const auto& name : c.eval.estimators) {
    if (name == "ista") {
      estimators.push_back(ista_estimator(dic, ista_config(c, dic)));
    } else if (name == "admm") {
      estimators.push_back(admm_estimator(dic, admm_config(c)));
    } else {
      const NetKind kind = *parse_net_kind(name);
      fs::path path = checkpoint_path(ctx.checkpoints(), kind, true);
      if (!fs::exists(path)) path = checkpoint_path(ctx.checkpoints(), kind);
      require(fs::exists(path), ErrorKind::Io, "no checkpoint for " + name + " in " + ctx.checkpoints().string());
      Network net = read_checkpoint(path);
      require(net.dictionary_id == dic.id(), ErrorKind::Config, path.string() + " was trained on another dictionary");
      estimators.push_back(network_estimator(dic, std::move(net)));
    }
  }

  const auto reports = snr_sweep(estimators, levels, dic, c.match, c.workers);
  write_sweep_csv(ctx.out / "sweep.csv", reports);
  io::write_json(ctx.out / "sweep.json", sweep_json(reports, config_hash(c)));
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      ctx.os() << rep.estimator << " snr " << r.snr_db << " p_d " << r.mean_detection_rate << " rmse "
               << (r.angular_rmse_deg ? std::to_string(*r.angular_rmse_deg) : std::string("nan")) << " nmse "
               << r.mean_nmse << "\n";
    }
  }
  write_manifest(ctx, "eval", {"sweep.csv", "sweep.json"});
  return 0;
}

// ---------------------------------------------------------------------------

inline int cmd_verify(const CommandContext& ctx, const VerifyOptions& opt = {}) {
  VerifyOptions o = opt;
  o.seed = ctx.cfg.seed;
  const auto results = run_verify(o);
  json checks = json::array();
  bool all = true;
  for (const auto& r : results) {
    ctx.os() << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    checks.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    all = all && r.passed;
  }
  io::write_json(ctx.out / "verify.json", {{"checks", checks}, {"all_passed", all}});
  write_manifest(ctx, "verify", {"verify.json"});
  return all ? 0 : 4;
}

// ---------------------------------------------------------------------------

struct BenchRow {
  std::string kind;
  Index n = 0;
  Index m = 0;
  int repeats = 0;
  /// Per-layer forward time with the layer operators prepared in advance.
  double layer_seconds = 0.0;
  /// Per-layer forward time including operator preparation (the solve setup).
  double layer_seconds_with_setup = 0.0;
};

inline BenchRow bench_layer(NetKind kind, const Dictionary& dic, int repeats, std::uint64_t seed) {
  constexpr int kLayers = 4;
  const Network net = init_network(kind, dic, kLayers);
  const Sample s = doa::detail::random_sample(dic, seed);
  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;

  const PreparedNetwork prepared(net, dic);
  sink = sink + prepared.forward(s.measurement).norm();
  auto t0 = clock::now();
  for (int r = 0; r < repeats; ++r) sink = sink + prepared.forward(s.measurement).norm();
  const double apply = std::chrono::duration<double>(clock::now() - t0).count();

  t0 = clock::now();
  for (int r = 0; r < repeats; ++r) sink = sink + PreparedNetwork(net, dic).forward(s.measurement).norm();
  const double with_setup = std::chrono::duration<double>(clock::now() - t0).count();

  const double per = 1.0 / (static_cast<double>(repeats) * kLayers);
  return {to_string(kind), dic.grid_size(), dic.rows(), repeats, apply * per, with_setup * per};
}

inline std::vector<BenchRow> run_bench(const BenchSection& b, std::uint64_t seed) {
  require(b.repeats >= 1 && !b.sizes.empty(), ErrorKind::Config, "bench needs sizes and repeats >= 1");
  std::vector<BenchRow> rows;
  for (Index n : b.sizes) {
    const int m = static_cast<int>(std::min<Index>(b.elements, n - 1));
    const Dictionary dic = build_dictionary(make_ula(m), n);
    for (NetKind kind : {NetKind::AdmmNet, NetKind::CadmmNet}) rows.push_back(bench_layer(kind, dic, b.repeats, seed));
  }
  return rows;
}

inline int cmd_bench(const CommandContext& ctx) {
  const auto rows = run_bench(ctx.cfg.bench, ctx.cfg.seed);
  const fs::path path = ctx.out / "bench.csv";
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  out.precision(9);
  out << "kind,n,m,repeats,layer_seconds,layer_seconds_with_setup\n";
  for (const auto& r : rows) {
    out << r.kind << ',' << r.n << ',' << r.m << ',' << r.repeats << ',' << r.layer_seconds << ','
        << r.layer_seconds_with_setup << '\n';
    ctx.os() << r.kind << " N=" << r.n << " layer " << r.layer_seconds * 1e6 << " us, with setup "
             << r.layer_seconds_with_setup * 1e6 << " us\n";
  }
  require(out.good(), ErrorKind::Io, "write failed for " + path.string());
  write_manifest(ctx, "bench", {"bench.csv"});
  return 0;
}

}  // namespace doa::app
