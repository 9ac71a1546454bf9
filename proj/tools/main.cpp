#include "doa/app/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Flags {
  std::string config;
  std::string preset;
  std::string kind;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string resume;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--preset", f.preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--workers", f.workers, "worker threads");
  cmd->add_option("--out", f.out, "output directory (default $DOA_OUT_ROOT or ./runs)");
}

doa::app::CommandContext resolve(const Flags& f, bool eval_cmd) {
  namespace fs = std::filesystem;
  using doa::app::RunConfig;
  std::string preset = f.preset;
  nlohmann::json doc;
  if (!f.config.empty()) {
    doc = doa::io::read_json(f.config);
    if (preset.empty() && doc.is_object() && doc.contains("preset") && doc["preset"].is_string()) {
      preset = doc["preset"].get<std::string>();
    }
  }
  RunConfig cfg = doa::app::preset_config(preset.empty() ? "paper" : preset);
  if (!f.config.empty()) doa::app::apply_json(cfg, doc);
  if (!f.preset.empty()) cfg.preset = f.preset;
  if (!f.kind.empty()) {
    if (eval_cmd) cfg.eval.estimators = {f.kind};
    else cfg.network.kind = f.kind;
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (!f.out.empty()) cfg.out = f.out;
  doa::app::validate(cfg);

  doa::app::CommandContext ctx;
  if (cfg.out.empty()) {
    ctx.out = doa::app::default_out_root();
    fs::create_directories(ctx.out);
  } else {
    ctx.out = cfg.out;
    doa::require(fs::is_directory(ctx.out), doa::ErrorKind::Io, "output directory " + cfg.out + " does not exist");
  }
  ctx.cfg = std::move(cfg);
  if (!f.data.empty()) ctx.data_dir = f.data;
  if (!f.checkpoint.empty()) ctx.checkpoint_dir = f.checkpoint;
  if (!f.resume.empty()) ctx.resume = f.resume;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse DoA estimation with unfolded ADMM networks"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "generate train/val/test datasets");
  auto* train = app.add_subcommand("train", "train one network");
  auto* eval = app.add_subcommand("eval", "SNR sweep over solvers and trained networks");
  auto* verify = app.add_subcommand("verify", "run the equivalence and gradient checks");
  auto* bench = app.add_subcommand("bench", "per-layer timings, ADMM-Net vs CADMM-Net");
  for (auto* cmd : {gen, train, eval, verify, bench}) add_common(cmd, f);
  const std::vector<std::string> kinds = {"ista", "admm", "lista", "tlista", "thlista", "admmnet", "cadmmnet", "chadmmnet"};
  for (auto* cmd : {train, eval}) {
    cmd->add_option("--data", f.data, "dataset directory (default --out)");
    cmd->add_option("--kind", f.kind, "architecture or solver")->check(CLI::IsMember(kinds));
  }
  train->add_option("--resume", f.resume, "checkpoint to continue from");
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint directory (default --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train && (f.kind == "ista" || f.kind == "admm")) {
      doa::fail(doa::ErrorKind::Config, "ista and admm are not trainable");
    }
    const auto ctx = resolve(f, static_cast<bool>(*eval));
    if (*gen) return doa::app::cmd_gen_data(ctx);
    if (*train) return doa::app::cmd_train(ctx);
    if (*eval) return doa::app::cmd_eval(ctx);
    if (*verify) return doa::app::cmd_verify(ctx);
    if (*bench) return doa::app::cmd_bench(ctx);
  } catch (const doa::Error& e) {
    std::cerr << "error (" << doa::to_string(e.kind()) << "): " << e.what() << "\n";
    return doa::app::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
