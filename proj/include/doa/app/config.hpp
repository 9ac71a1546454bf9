#pragma once

#include "doa/array_signal.hpp"
#include "doa/binary_io.hpp"
#include "doa/error.hpp"
#include "doa/evaluation.hpp"
#include "doa/loss.hpp"
#include "doa/networks.hpp"
#include "doa/training.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace doa::app {

using nlohmann::json;

struct ArrayConfig {
  std::string kind = "ula";  // ula | sla
  int elements = 30;
  int aperture = 60;
  double gamma = 0.5;
  std::uint64_t layout_seed = 1;
};

struct DataConfig {
  Index train_count = 100000;
  Index val_count = 20000;
  Index test_count = 1000;
  int k_min = 1;
  int k_max = 8;
  /// Separation in frequency; negative means 1/M for training data and
  /// 1/(3M) for test data.
  double min_sep = -1.0;
  double test_min_sep = -1.0;
  double train_snr_db = 15.0;
  std::vector<double> test_snr_db = {0, 5, 10, 15, 20, 25, 30, 35};
  std::string noise = "per_element";  // per_element | paper_literal
};

struct NetworkConfig {
  std::string kind = "chadmmnet";
  int layers = 30;
  double beta0 = 0.1;
  double rho0 = 1.0;
  bool strict_hermitian = false;
};

struct TrainSection {
  int epochs = 50;
  Index batch_size = 2048;
  double learning_rate = 1e-4;
  int validation_every = 1;
};

struct SolverSection {
  int iterations = 100;
  /// Unset: beta0 / mu, so ISTA matches the LISTA initialization.
  std::optional<double> ista_lambda;
  /// Unset: beta0 / rho0, so ADMM matches the ADMM-Net initialization.
  std::optional<double> admm_lambda;
};

struct EvalSection {
  std::vector<std::string> estimators = {"ista",    "admm",    "lista",    "tlista",
                                         "thlista", "admmnet", "cadmmnet", "chadmmnet"};
};

struct BenchSection {
  std::vector<Index> sizes = {256, 512, 1024};
  int elements = 30;
  int repeats = 20;
};

struct RunConfig {
  std::string preset = "paper";
  ArrayConfig array;
  Index grid_size = 256;
  DataConfig data;
  NetworkConfig network;
  TrainSection train;
  LossConfig loss;
  SolverSection solver;
  MatchConfig match;
  EvalSection eval;
  BenchSection bench;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out;
};

inline RunConfig paper_preset() { return RunConfig{}; }

/// Desk scale: N=64, M=16, 10^4 / 2*10^3 / 10^3 samples, T=10, 20 epochs.
inline RunConfig desk_preset() {
  RunConfig c;
  c.preset = "desk";
  c.array.elements = 16;
  c.array.aperture = 32;
  c.grid_size = 64;
  c.data.train_count = 10000;
  c.data.val_count = 2000;
  c.data.test_count = 1000;
  c.network.layers = 10;
  c.train.epochs = 20;
  c.train.batch_size = 64;
  c.train.learning_rate = 1e-3;
  c.bench.repeats = 20;
  return c;
}

inline RunConfig preset_config(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  fail(ErrorKind::Config, "unknown preset '" + name + "' (expected paper or desk)");
}

namespace detail {

/// Reads known keys of one JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    require(obj.is_object(), ErrorKind::Config, path_ + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, path_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    if (obj_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    read(key, v);
    out = v;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) fail(ErrorKind::Config, "unknown key " + path_ + "." + item.key());
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void validate(const RunConfig& c) {
  require(c.array.kind == "ula" || c.array.kind == "sla", ErrorKind::Config, "array.kind must be ula or sla");
  require(c.array.elements >= 2, ErrorKind::Config, "array.elements must be >= 2");
  require(c.array.gamma > 0.0 && c.array.gamma <= 0.5, ErrorKind::Config, "array.gamma must lie in (0, 1/2]");
  require(c.grid_size > c.array.elements, ErrorKind::Config, "grid_size must exceed array.elements");
  require(c.data.train_count >= 1 && c.data.val_count >= 1 && c.data.test_count >= 1, ErrorKind::Config,
          "dataset counts must be >= 1");
  require(c.data.k_min >= 1 && c.data.k_max >= c.data.k_min, ErrorKind::Config, "invalid data.k_min/k_max");
  require(c.data.noise == "per_element" || c.data.noise == "paper_literal", ErrorKind::Config,
          "data.noise must be per_element or paper_literal");
  require(parse_net_kind(c.network.kind).has_value(), ErrorKind::Config, "unknown network.kind " + c.network.kind);
  require(c.network.layers >= 1, ErrorKind::Config, "network.layers must be >= 1");
  require(c.network.beta0 >= 0.0 && c.network.rho0 > 0.0, ErrorKind::Config, "invalid network.beta0/rho0");
  require(c.train.epochs >= 0 && c.train.batch_size >= 1 && c.train.learning_rate >= 0.0, ErrorKind::Config,
          "invalid train section");
  require(c.loss.kernel_scale > 0.0, ErrorKind::Config, "loss.kernel_scale must be positive");
  require(c.solver.iterations >= 1, ErrorKind::Config, "solver.iterations must be >= 1");
  require(c.match.delta1 >= 0 && c.match.delta2 > 0.0 && c.match.delta2 <= 1.0, ErrorKind::Config,
          "invalid match section");
  require(c.workers >= 1, ErrorKind::Config, "workers must be >= 1");
  for (const auto& e : c.eval.estimators) {
    require(e == "ista" || e == "admm" || parse_net_kind(e).has_value(), ErrorKind::Config, "unknown estimator " + e);
  }
}

/// Overlays a JSON document onto a config. Unknown keys are errors.
inline void apply_json(RunConfig& c, const json& doc) {
  detail::ObjectReader root(doc, "config");
  root.read("preset", c.preset);
  if (const json* j = root.child("array")) {
    detail::ObjectReader r(*j, "array");
    r.read("kind", c.array.kind);
    r.read("elements", c.array.elements);
    r.read("aperture", c.array.aperture);
    r.read("gamma", c.array.gamma);
    r.read("layout_seed", c.array.layout_seed);
    r.finish();
  }
  root.read("grid_size", c.grid_size);
  if (const json* j = root.child("data")) {
    detail::ObjectReader r(*j, "data");
    r.read("train_count", c.data.train_count);
    r.read("val_count", c.data.val_count);
    r.read("test_count", c.data.test_count);
    r.read("k_min", c.data.k_min);
    r.read("k_max", c.data.k_max);
    r.read("min_sep", c.data.min_sep);
    r.read("test_min_sep", c.data.test_min_sep);
    r.read("train_snr_db", c.data.train_snr_db);
    r.read("test_snr_db", c.data.test_snr_db);
    r.read("noise", c.data.noise);
    r.finish();
  }
  if (const json* j = root.child("network")) {
    detail::ObjectReader r(*j, "network");
    r.read("kind", c.network.kind);
    r.read("layers", c.network.layers);
    r.read("beta0", c.network.beta0);
    r.read("rho0", c.network.rho0);
    r.read("strict_hermitian", c.network.strict_hermitian);
    r.finish();
  }
  if (const json* j = root.child("train")) {
    detail::ObjectReader r(*j, "train");
    r.read("epochs", c.train.epochs);
    r.read("batch_size", c.train.batch_size);
    r.read("learning_rate", c.train.learning_rate);
    r.read("validation_every", c.train.validation_every);
    r.finish();
  }
  if (const json* j = root.child("loss")) {
    detail::ObjectReader r(*j, "loss");
    r.read("kernel_scale", c.loss.kernel_scale);
    std::string mode = c.loss.mode == ConvolutionMode::Circular ? "circular" : "linear";
    r.read("mode", mode);
    require(mode == "circular" || mode == "linear", ErrorKind::Config, "loss.mode must be circular or linear");
    c.loss.mode = mode == "circular" ? ConvolutionMode::Circular : ConvolutionMode::LinearTruncated;
    r.finish();
  }
  if (const json* j = root.child("solver")) {
    detail::ObjectReader r(*j, "solver");
    r.read("iterations", c.solver.iterations);
    r.read_optional("ista_lambda", c.solver.ista_lambda);
    r.read_optional("admm_lambda", c.solver.admm_lambda);
    r.finish();
  }
  if (const json* j = root.child("match")) {
    detail::ObjectReader r(*j, "match");
    r.read("delta1", c.match.delta1);
    r.read("delta2", c.match.delta2);
    r.finish();
  }
  if (const json* j = root.child("eval")) {
    detail::ObjectReader r(*j, "eval");
    r.read("estimators", c.eval.estimators);
    r.finish();
  }
  if (const json* j = root.child("bench")) {
    detail::ObjectReader r(*j, "bench");
    r.read("sizes", c.bench.sizes);
    r.read("elements", c.bench.elements);
    r.read("repeats", c.bench.repeats);
    r.finish();
  }
  root.read("seed", c.seed);
  root.read("workers", c.workers);
  root.read("out", c.out);
  root.finish();
}

inline json to_json(const RunConfig& c) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{
      {"preset", c.preset},
      {"array",
       {{"kind", c.array.kind},
        {"elements", c.array.elements},
        {"aperture", c.array.aperture},
        {"gamma", c.array.gamma},
        {"layout_seed", c.array.layout_seed}}},
      {"grid_size", c.grid_size},
      {"data",
       {{"train_count", c.data.train_count},
        {"val_count", c.data.val_count},
        {"test_count", c.data.test_count},
        {"k_min", c.data.k_min},
        {"k_max", c.data.k_max},
        {"min_sep", c.data.min_sep},
        {"test_min_sep", c.data.test_min_sep},
        {"train_snr_db", c.data.train_snr_db},
        {"test_snr_db", c.data.test_snr_db},
        {"noise", c.data.noise}}},
      {"network",
       {{"kind", c.network.kind},
        {"layers", c.network.layers},
        {"beta0", c.network.beta0},
        {"rho0", c.network.rho0},
        {"strict_hermitian", c.network.strict_hermitian}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"validation_every", c.train.validation_every}}},
      {"loss",
       {{"kernel_scale", c.loss.kernel_scale},
        {"mode", c.loss.mode == ConvolutionMode::Circular ? "circular" : "linear"}}},
      {"solver",
       {{"iterations", c.solver.iterations},
        {"ista_lambda", opt(c.solver.ista_lambda)},
        {"admm_lambda", opt(c.solver.admm_lambda)}}},
      {"match", {{"delta1", c.match.delta1}, {"delta2", c.match.delta2}}},
      {"eval", {{"estimators", c.eval.estimators}}},
      {"bench", {{"sizes", c.bench.sizes}, {"elements", c.bench.elements}, {"repeats", c.bench.repeats}}},
      {"seed", c.seed},
      {"workers", c.workers},
      {"out", c.out},
  };
}

inline std::string config_hash(const RunConfig& c) { return io::content_hash(to_json(c)); }

/// Output root when neither --out nor the config names one.
inline constexpr const char* kOutRootEnv = "DOA_OUT_ROOT";

inline std::filesystem::path default_out_root() {
  const char* env = std::getenv(kOutRootEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

// Derived objects

inline ArrayGeometry make_geometry(const RunConfig& c) {
  if (c.array.kind == "ula") return make_ula(c.array.elements, c.array.gamma);
  return make_sla(c.array.elements, c.array.aperture, c.array.layout_seed, c.array.gamma);
}

inline NoiseConvention noise_convention(const RunConfig& c) {
  return c.data.noise == "per_element" ? NoiseConvention::PerElement : NoiseConvention::PaperLiteral;
}

inline double train_min_sep(const RunConfig& c) {
  return c.data.min_sep >= 0.0 ? c.data.min_sep : 1.0 / c.array.elements;
}

inline double test_min_sep(const RunConfig& c) {
  return c.data.test_min_sep >= 0.0 ? c.data.test_min_sep : 1.0 / (3.0 * c.array.elements);
}

inline SolverConfig ista_config(const RunConfig& c, const Dictionary& dic) {
  return {c.solver.ista_lambda.value_or(c.network.beta0 / dic.default_step()), 1.0, c.solver.iterations, std::nullopt};
}

inline SolverConfig admm_config(const RunConfig& c) {
  return {c.solver.admm_lambda.value_or(c.network.beta0 / c.network.rho0), c.network.rho0, c.solver.iterations,
          std::nullopt};
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.train.epochs;
  t.batch_size = c.train.batch_size;
  t.learning_rate = c.train.learning_rate;
  t.seed = c.seed;
  t.validation_every = c.train.validation_every;
  t.workers = c.workers;
  return t;
}

}  // namespace doa::app
