#include "doa/app/commands.hpp"
#include "doa/app/config.hpp"
#include "doa/network_io.hpp"
#include "doa/verify.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace doa;
using testsupport::error_kind_of;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + std::string(DOA_CLI_PATH) + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json tiny_config() {
  return nlohmann::json::parse(R"({
    "preset": "desk",
    "array": {"kind": "ula", "elements": 8},
    "grid_size": 32,
    "data": {"train_count": 64, "val_count": 16, "test_count": 8, "k_max": 3, "test_snr_db": [0, 20]},
    "network": {"kind": "cadmmnet", "layers": 2},
    "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.01},
    "solver": {"iterations": 20},
    "bench": {"sizes": [64], "elements": 8, "repeats": 2}
  })");
}

fs::path write_config(const fs::path& dir, const nlohmann::json& doc, const std::string& name = "cfg.json") {
  std::ofstream(dir / name) << doc.dump(2);
  return dir / name;
}

}  // namespace

TEST(Config, PaperPresetValues) {
  const app::RunConfig c = app::preset_config("paper");
  EXPECT_EQ(c.grid_size, 256);
  EXPECT_EQ(c.array.elements, 30);
  EXPECT_EQ(c.array.aperture, 60);
  EXPECT_EQ(c.array.gamma, 0.5);
  EXPECT_EQ(c.data.train_count, 100000);
  EXPECT_EQ(c.data.val_count, 20000);
  EXPECT_EQ(c.data.test_count, 1000);
  EXPECT_EQ(c.data.k_min, 1);
  EXPECT_EQ(c.data.k_max, 8);
  EXPECT_EQ(c.data.train_snr_db, 15.0);
  EXPECT_EQ(c.data.test_snr_db, (std::vector<double>{0, 5, 10, 15, 20, 25, 30, 35}));
  EXPECT_EQ(app::train_min_sep(c), 1.0 / 30.0);
  EXPECT_EQ(app::test_min_sep(c), 1.0 / 90.0);
  EXPECT_EQ(c.network.layers, 30);
  EXPECT_EQ(c.network.beta0, 0.1);
  EXPECT_EQ(c.network.rho0, 1.0);
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.train.batch_size, 2048);
  EXPECT_EQ(c.loss.kernel_scale, 0.5);
  EXPECT_EQ(c.match.delta1, 2);
  EXPECT_EQ(c.match.delta2, 0.4);
  EXPECT_EQ(c.solver.iterations, 100);
  EXPECT_EQ(c.eval.estimators.size(), 8U);
}

TEST(Config, DeskPresetValues) {
  const app::RunConfig c = app::preset_config("desk");
  EXPECT_EQ(c.grid_size, 64);
  EXPECT_EQ(c.array.elements, 16);
  EXPECT_EQ(c.data.train_count, 10000);
  EXPECT_EQ(c.network.layers, 10);
  EXPECT_EQ(c.train.epochs, 20);
  EXPECT_EQ(error_kind_of([] { app::preset_config("huge"); }), ErrorKind::Config);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  app::RunConfig c = app::preset_config("desk");
  app::apply_json(c, tiny_config());
  EXPECT_EQ(c.grid_size, 32);
  EXPECT_EQ(c.data.test_snr_db, (std::vector<double>{0, 20}));
  app::RunConfig back = app::preset_config("paper");
  app::apply_json(back, app::to_json(c));
  EXPECT_EQ(app::to_json(back), app::to_json(c));
  EXPECT_EQ(app::config_hash(back), app::config_hash(c));

  EXPECT_EQ(error_kind_of([&] { app::apply_json(c, nlohmann::json::parse(R"({"netwrok": {}})")); }), ErrorKind::Config);
  EXPECT_EQ(error_kind_of([&] { app::apply_json(c, nlohmann::json::parse(R"({"train": {"lr": 1}})")); }),
            ErrorKind::Config);
  EXPECT_EQ(error_kind_of([&] { app::apply_json(c, nlohmann::json::parse(R"({"grid_size": "big"})")); }),
            ErrorKind::Config);
  app::RunConfig bad = c;
  bad.network.kind = "resnet";
  EXPECT_EQ(error_kind_of([&] { app::validate(bad); }), ErrorKind::Config);
}

TEST(Config, ExitCodes) {
  EXPECT_EQ(app::exit_code(ErrorKind::Config), 2);
  EXPECT_EQ(app::exit_code(ErrorKind::InvalidArgument), 2);
  EXPECT_EQ(app::exit_code(ErrorKind::Io), 3);
  EXPECT_EQ(app::exit_code(ErrorKind::Divergence), 4);
  EXPECT_EQ(app::exit_code(ErrorKind::NearSingular), 4);
  EXPECT_EQ(app::exit_code(ErrorKind::UndefinedLoss), 4);
}

TEST(Verify, FreshBuildPasses) {
  for (const CheckResult& r : run_verify()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Verify, TamperedNormalizationIsCaught) {
  VerifyOptions opt;
  // Circulant product with the inverse transform's 1/N dropped.
  opt.circulant_product = [](const CirculantOperator& op, const CVector& x) {
    return CVector(op.apply(x) * static_cast<double>(x.size()));
  };
  const CheckResult r = check_circulant_apply(opt);
  EXPECT_FALSE(r.passed) << r.detail;
}

TEST(Verify, GramCheckExercisesBothBranches) {
  const CheckResult r = check_gram_circulance({});
  EXPECT_TRUE(r.passed);
  EXPECT_NE(r.detail.find("not circulant"), std::string::npos);
}

TEST(Cli, ErrorExitCodes) {
  const auto dir = testsupport::temp_dir("cli_err");
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("verify --out \"" + (dir / "missing").string() + "\"", log), 3);
  EXPECT_EQ(run_cli("gen-data --config \"" + write_config(dir, {{"nope", 1}}).string() + "\" --out \"" + dir.string() + "\"",
                    log),
            2);
  EXPECT_EQ(run_cli("gen-data --config \"" + (dir / "absent.json").string() + "\" --out \"" + dir.string() + "\"", log), 3);
  EXPECT_EQ(run_cli("train --kind ista --out \"" + dir.string() + "\"", log), 2);
  EXPECT_EQ(run_cli("train --kind resnet --out \"" + dir.string() + "\"", log), 2);
  EXPECT_EQ(run_cli("frobnicate", log), 2);

  nlohmann::json cfg = tiny_config();
  cfg["eval"] = {{"estimators", nlohmann::json::array()}};
  const auto cfg_path = write_config(dir, cfg, "empty.json");
  ASSERT_EQ(run_cli("gen-data --config \"" + cfg_path.string() + "\" --out \"" + dir.string() + "\"", log), 0) << slurp(log);
  EXPECT_EQ(run_cli("eval --config \"" + cfg_path.string() + "\" --out \"" + dir.string() + "\"", log), 2) << slurp(log);
  // Evaluating a network that was never trained is a missing-file error.
  EXPECT_EQ(run_cli("eval --kind lista --config \"" + cfg_path.string() + "\" --out \"" + dir.string() + "\"", log), 3);
}

TEST(Cli, GenTrainEvalResume) {
  const auto dir = testsupport::temp_dir("cli_flow");
  const auto log = dir / "log.txt";
  const auto cfg = write_config(dir, tiny_config()).string();
  const std::string common = "--config \"" + cfg + "\" --out \"" + dir.string() + "\"";

  ASSERT_EQ(run_cli("gen-data " + common, log), 0) << slurp(log);
  for (const char* f : {"train.bin", "val.bin", "test_snr0.bin", "test_snr20.bin", "gen-data.manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto again = dir / "again";
  fs::create_directories(again);
  ASSERT_EQ(run_cli("gen-data --config \"" + cfg + "\" --out \"" + again.string() + "\"", log), 0);
  EXPECT_EQ(slurp(dir / "train.bin"), slurp(again / "train.bin"));
  ASSERT_EQ(run_cli("gen-data --seed 9 --config \"" + cfg + "\" --out \"" + again.string() + "\"", log), 0);
  EXPECT_NE(slurp(dir / "train.bin"), slurp(again / "train.bin"));

  ASSERT_EQ(run_cli("train --kind cadmmnet --workers 2 " + common, log), 0) << slurp(log);
  EXPECT_TRUE(fs::exists(dir / "cadmmnet.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "cadmmnet.best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "cadmmnet.ckpt.adam"));
  const std::string history = slurp(dir / "cadmmnet.history.csv");
  EXPECT_EQ(history.rfind("epoch,train_loss,val_loss,wall_seconds\n0,", 0), 0U);
  const Network trained = read_checkpoint(dir / "cadmmnet.ckpt");
  EXPECT_EQ(trained.depth(), 2);
  EXPECT_EQ(trained.n, 32);

  // The default estimator list names networks that were never trained.
  ASSERT_EQ(run_cli("eval --config \"" + cfg + "\" --out \"" + dir.string() + "\"", log), 3);
  nlohmann::json eval_cfg = tiny_config();
  eval_cfg["eval"] = {{"estimators", {"ista", "admm", "cadmmnet"}}};
  const auto eval_path = write_config(dir, eval_cfg, "eval.json").string();
  const int eval_code = run_cli("eval --config \"" + eval_path + "\" --out \"" + dir.string() + "\"", log);
  ASSERT_EQ(eval_code, 0) << slurp(log);
  const std::string csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 2);
  const auto sweep = nlohmann::json::parse(slurp(dir / "sweep.json"));
  EXPECT_EQ(sweep["reports"].size(), 3U);
  EXPECT_EQ(sweep["config_hash"].get<std::string>().size() > 0, true);

  nlohmann::json longer = tiny_config();
  longer["train"]["epochs"] = 3;
  const auto longer_path = write_config(dir, longer, "longer.json").string();
  const auto resumed = dir / "resumed";
  fs::create_directories(resumed);
  ASSERT_EQ(run_cli("train --kind cadmmnet --data \"" + dir.string() + "\" --resume \"" + (dir / "cadmmnet.ckpt").string() +
                        "\" --config \"" + longer_path + "\" --out \"" + resumed.string() + "\"",
                    log),
            0)
      << slurp(log);
  const std::string resumed_history = slurp(resumed / "cadmmnet.history.csv");
  EXPECT_NE(resumed_history.find("\n2,"), std::string::npos);
  EXPECT_NE(resumed_history.find("\n3,"), std::string::npos);

  const auto straight = dir / "straight";
  fs::create_directories(straight);
  ASSERT_EQ(run_cli("train --kind cadmmnet --data \"" + dir.string() + "\" --config \"" + longer_path + "\" --out \"" +
                        straight.string() + "\"",
                    log),
            0);
  EXPECT_EQ(slurp(straight / "cadmmnet.ckpt"), slurp(resumed / "cadmmnet.ckpt"));
}

TEST(Cli, MismatchedDataIsConfigError) {
  const auto dir = testsupport::temp_dir("cli_mismatch");
  const auto log = dir / "log.txt";
  ASSERT_EQ(run_cli("gen-data --config \"" + write_config(dir, tiny_config()).string() + "\" --out \"" + dir.string() + "\"",
                    log),
            0);
  nlohmann::json other = tiny_config();
  other["grid_size"] = 48;
  EXPECT_EQ(run_cli("train --config \"" + write_config(dir, other, "other.json").string() + "\" --out \"" + dir.string() +
                        "\"",
                    log),
            2);
}

TEST(Cli, VerifyAndBench) {
  const auto dir = testsupport::temp_dir("cli_verify");
  const auto log = dir / "log.txt";
  ASSERT_EQ(run_cli("verify", log, "DOA_OUT_ROOT=\"" + dir.string() + "\""), 0) << slurp(log);
  EXPECT_TRUE(fs::exists(dir / "verify.json"));
  const auto report = nlohmann::json::parse(slurp(dir / "verify.json"));
  EXPECT_EQ(report["checks"].size(), 5U);
  EXPECT_NE(slurp(log).find("PASS"), std::string::npos);

  const auto cfg = write_config(dir, tiny_config()).string();
  ASSERT_EQ(run_cli("bench --config \"" + cfg + "\" --out \"" + dir.string() + "\"", log), 0) << slurp(log);
  const std::string csv = slurp(dir / "bench.csv");
  EXPECT_EQ(csv.rfind("kind,n,m,repeats,layer_seconds,layer_seconds_with_setup\n", 0), 0U);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
