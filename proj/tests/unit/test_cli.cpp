#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "ecglab/signal/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = ecglab::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecglab_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

const char* kTinyConfig = R"({
  "seed": 5,
  "data": {"n_samples": 20, "n_test": 6},
  "render": {"px_per_mm": 2},
  "model": {"d_img": 16, "d_sig": 8, "decoder": {"layers": 1, "d": 16, "heads": 2},
            "image_hidden": 16, "signal_hidden": 16, "text_dim": 8},
  "train": {"batch_size": 4, "total_steps": 4, "eval_interval": 2, "teacher_steps": 2, "teacher_batch_size": 4},
  "probe": {"epochs": 5}
})";

fs::path tiny_config(const fs::path& dir, const std::string& extra_train = "") {
  json j = json::parse(kTinyConfig);
  if (!extra_train.empty()) j["train"].update(json::parse(extra_train));
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("help documents every flag") {
  ecglab::cli::Flags flags;
  auto app = ecglab::cli::make_app(flags);
  const std::string top = run({"--help"}).out;
  for (const CLI::Option* opt : app->get_options()) {
    CHECK(!opt->get_description().empty());
    CHECK(top.find(opt->get_name()) != std::string::npos);
  }
  const auto subs = app->get_subcommands([](CLI::App*) { return true; });
  CHECK(subs.size() == 8);
  for (const CLI::App* sub : subs) {
    INFO(sub->get_name());
    CHECK(!sub->get_description().empty());
    CHECK(top.find(sub->get_name()) != std::string::npos);
    const Result r = run({sub->get_name(), "--help"});
    CHECK(r.code == 0);
    for (const CLI::Option* opt : sub->get_options()) {
      CHECK(!opt->get_description().empty());
      CHECK(r.out.find(opt->get_name()) != std::string::npos);
    }
  }
}

TEST_CASE("validation errors exit with 2") {
  Result r = run({"eval", "--mode", "zero-shot"});
  CHECK(r.code == 2);
  CHECK(r.err.find("checkpoint required") != std::string::npos);
  CHECK(run({"synth-data", "--bogus"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"eval", "--mode", "both", "--checkpoint", "x.ecsk"}).code == 2);

  const fs::path dir = scratch("invalid");
  std::ofstream(dir / "bad.json") << R"({"train": {"bacth_size": 4}})";
  r = run({"--config", (dir / "bad.json").string(), "synth-data"});
  CHECK(r.code == 2);
  CHECK(r.err.find("train.bacth_size") != std::string::npos);

  setenv("ECGLAB_LOG", "loud", 1);
  CHECK(run({"--out", dir.string(), "inspect-checkpoint", "--checkpoint", "x"}).code == 2);
  unsetenv("ECGLAB_LOG");
  CHECK(run({"--config", (dir / "missing.json").string(), "synth-data"}).code == 4);
}

TEST_CASE("render and augment are byte deterministic") {
  const fs::path dir = scratch("render");
  ecglab::SynthParams p;
  p.fs = 500;
  const auto s = ecglab::synth_ecg(p);
  ecglab::save_record(s.record, dir / "rec.ecgr");

  Result a = run({"--out", (dir / "a").string(), "render", "--record", (dir / "rec.ecgr").string()});
  Result b = run({"--out", (dir / "b").string(), "render", "--record", (dir / "rec.ecgr").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(json::parse(a.out)["width"] == 1080);
  CHECK(slurp(dir / "a" / "rec.png") == slurp(dir / "b" / "rec.png"));
  CHECK(slurp(dir / "a" / "rec.json") == slurp(dir / "b" / "rec.json"));

  const std::string png = (dir / "a" / "rec.png").string();
  a = run({"--seed", "3", "--out", (dir / "c").string(), "augment", "--image", png});
  b = run({"--seed", "3", "--out", (dir / "d").string(), "augment", "--image", png});
  REQUIRE(a.code == 0);
  CHECK(slurp(dir / "c" / "rec_aug.png") == slurp(dir / "d" / "rec_aug.png"));
  CHECK(json::parse(a.out)["trace"].size() == 5);
  CHECK(run({"--out", dir.string(), "render", "--record", (dir / "none.ecgr").string()}).code == 4);
}

TEST_CASE("synth-data, snr-report, train, eval and inspect-checkpoint") {
  const fs::path dir = scratch("pipeline");
  const std::string cfg = tiny_config(dir).string();

  Result r = run({"--config", cfg, "--out", (dir / "data").string(), "synth-data"});
  REQUIRE(r.code == 0);
  const json synth = json::parse(r.out);
  CHECK(synth["n_train"] == 18);
  CHECK(synth["n_val"] == 2);
  CHECK(synth["n_test"] == 6);
  const std::string manifest = (dir / "data" / "manifest.json").string();
  CHECK(fs::exists(manifest));

  r = run({"--config", cfg, "--out", (dir / "snr").string(), "snr-report", "--data", manifest});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "snr" / "snr_report.csv");
  CHECK(csv.find("lead,mean_snr_db,n_records\nIII,") != std::string::npos);
  CHECK(json::parse(r.out)["n_records"] == 26);

  r = run({"--config", cfg, "--out", (dir / "run").string(), "train", "--data", manifest});
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  CHECK(summary["steps"] == 4);
  const std::string ckpt = (dir / "run" / "best.ecsk").string();
  CHECK(fs::exists(ckpt));
  std::ifstream log(dir / "run" / "loss_log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 6);

  // Same config and seed, same bytes.
  REQUIRE(run({"--config", cfg, "--out", (dir / "run2").string(), "train", "--data", manifest}).code == 0);
  CHECK(slurp(ckpt) == slurp(dir / "run2" / "best.ecsk"));
  CHECK(slurp(dir / "run" / "loss_log.jsonl") == slurp(dir / "run2" / "loss_log.jsonl"));

  r = run({"--config", cfg, "inspect-checkpoint", "--checkpoint", ckpt});
  REQUIRE(r.code == 0);
  const json info = json::parse(r.out);
  CHECK(info["version"] == 1);
  CHECK(info["step"] == summary["best_step"]);
  CHECK(info["config_hash"] == summary["config_hash"]);

  for (const char* mode : {"zero-shot", "linear-probe"}) {
    r = run({"--config", cfg, "eval", "--mode", mode, "--checkpoint", ckpt, "--data", manifest});
    REQUIRE(r.code == 0);
    const double auc = json::parse(r.out)["auc"];
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
  }

  std::string bytes = slurp(ckpt);
  bytes[bytes.size() / 2] ^= 0x10;
  std::ofstream(dir / "bad.ecsk", std::ios::binary) << bytes;
  r = run({"inspect-checkpoint", "--checkpoint", (dir / "bad.ecsk").string()});
  CHECK(r.code == 4);
  CHECK(r.err.find("checksum") != std::string::npos);
}

TEST_CASE("divergence exits with 3") {
  const fs::path dir = scratch("diverge");
  const std::string cfg = tiny_config(dir, R"({"lr": 1e30, "total_steps": 6})").string();
  const Result r = run({"--config", cfg, "--out", dir.string(), "train"});
  CHECK(r.code == 3);
  CHECK(r.err.find("training step") != std::string::npos);
}

TEST_CASE("grad-check reports every entry") {
  const Result r = run({"grad-check", "--instances", "1"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["passed"] == true);
  for (const auto& e : j["checks"]) CHECK(e["max_rel_error"].get<double>() < e["tolerance"].get<double>());
}
