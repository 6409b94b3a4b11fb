#include "cli.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ecglab/error.hpp"
#include "ecglab/hash.hpp"
#include "ecglab/leads/lead_rules.hpp"
#include "ecglab/pipeline/checkpoint.hpp"
#include "ecglab/pipeline/config.hpp"
#include "ecglab/pipeline/grad_suite.hpp"
#include "ecglab/pipeline/train.hpp"
#include "ecglab/render/png.hpp"

namespace ecglab::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDivergence: return kExitDivergence;
    case ErrorKind::kIo:
    case ErrorKind::kChecksum: return kExitIo;
    default: return kExitInvalid;
  }
}

struct Context {
  Flags& flags;
  ExperimentConfig config;
  std::ostream& out;
  std::shared_ptr<spdlog::logger> log;

  fs::path out_dir() const { return flags.out.empty() ? fs::path(config.paths.out) : fs::path(flags.out); }
  fs::path ensure_out_dir() const {
    const fs::path d = out_dir();
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create output directory " + d.string() + ": " + ec.message());
    return d;
  }
  void emit(const ordered_json& j) const { out << j.dump(2) << '\n'; }
};

ExperimentConfig resolve_config(const Flags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed_set) c.seed = f.seed;
  if (f.steps > 0) c.train.total_steps = f.steps;
  if (!f.data.empty()) c.paths.data = f.data;
  if (!f.checkpoint.empty()) c.paths.checkpoint = f.checkpoint;
  if (!f.out.empty()) c.paths.out = f.out;
  c.resolve();
  return c;
}

Dataset dataset_for(const Context& ctx) {
  if (!ctx.config.paths.data.empty()) {
    ctx.log->info("loading dataset {}", ctx.config.paths.data);
    return load_dataset(ctx.config.paths.data);
  }
  ctx.log->info("building dataset in memory ({} + {} records)", ctx.config.data.n_samples, ctx.config.data.n_test);
  return build_dataset(ctx.config.data);
}

EcgRecord read_any_record(const fs::path& p) {
  return p.extension() == ".csv" ? load_record_csv(p) : load_record(p);
}

fs::path sidecar_path(fs::path png) { return png.replace_extension(".json"); }

// --- subcommands -----------------------------------------------------------

int cmd_synth_data(Context& ctx) {
  const Dataset d = build_dataset(ctx.config.data);
  const fs::path dir = ctx.ensure_out_dir();
  save_dataset(d, dir);
  std::array<std::size_t, kNumRhythmClasses> counts{};
  for (const auto& it : d.items) ++counts[it.sample.label];
  ordered_json classes;
  for (std::size_t c = 0; c < counts.size(); ++c) classes[std::string(class_name(c))] = counts[c];
  ctx.log->info("wrote {} records to {}", d.items.size(), dir.string());
  ctx.emit({{"manifest", (dir / "manifest.json").string()},
            {"n_train", d.train.size()},
            {"n_val", d.val.size()},
            {"n_test", d.test.size()},
            {"class_counts", classes}});
  return kExitOk;
}

int cmd_render(Context& ctx) {
  if (ctx.flags.record.empty()) throw ParameterError("render: --record is required");
  const EcgRecord rec = read_any_record(ctx.flags.record);
  const EcgImage img = render(rec, ctx.config.render);
  const fs::path dir = ctx.ensure_out_dir();
  const fs::path png = dir / (fs::path(ctx.flags.record).stem().string() + ".png");
  write_png(img, png);
  write_sidecar(img, sidecar_path(png));
  ctx.log->info("rendered {}x{} image to {}", img.width, img.height, png.string());
  ctx.emit({{"png", png.string()},
            {"sidecar", sidecar_path(png).string()},
            {"width", img.width},
            {"height", img.height},
            {"config_hash", img.meta.config_hash}});
  return kExitOk;
}

int cmd_augment(Context& ctx) {
  if (ctx.flags.image.empty()) throw ParameterError("augment: --image is required");
  EcgImage img = read_png(ctx.flags.image);
  const fs::path side = sidecar_path(ctx.flags.image);
  if (fs::exists(side)) img.meta = read_sidecar(side);
  AugmentConfig aug = ctx.config.augment;
  aug.seed = ctx.config.seed;
  const EcgImage res = augment(img, aug);
  const fs::path dir = ctx.ensure_out_dir();
  const fs::path png = dir / (fs::path(ctx.flags.image).stem().string() + "_aug.png");
  write_png(res, png);
  write_sidecar(res, sidecar_path(png));
  ordered_json trace = ordered_json::array();
  for (const auto& s : res.meta.augment_trace) trace.push_back({{"transform", s.transform}, {"applied", s.applied}, {"params", s.params}});
  ctx.emit({{"png", png.string()}, {"seed", aug.seed}, {"trace", trace}});
  return kExitOk;
}

int cmd_grad_check(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = run_grad_suite(ctx.flags.instances, ctx.config.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ordered_json list = ordered_json::array();
  bool ok = true;
  for (const auto& e : entries) {
    ok = ok && e.passed();
    list.push_back({{"name", e.name},
                    {"kind", e.kind},
                    {"instances", e.instances},
                    {"max_rel_error", e.max_rel_error},
                    {"max_rel_error_f32", e.max_rel_error_f32},
                    {"tolerance", e.tolerance},
                    {"passed", e.passed()}});
    if (!e.passed()) ctx.log->error("{}: max relative error {:.3g} exceeds {:.0e}", e.name, e.max_rel_error, e.tolerance);
  }
  ctx.log->info("{} gradient checks in {:.1f}s, {}", entries.size(), secs, ok ? "all passed" : "FAILURES");
  ctx.emit({{"passed", ok}, {"seconds", secs}, {"checks", list}});
  return ok ? kExitOk : kExitDivergence;
}

int cmd_train(Context& ctx) {
  const ExperimentConfig& cfg = ctx.config;
  const std::uint64_t hash = config_hash(cfg);
  ctx.log->info("config hash {}", hex64(hash));
  const Dataset data = dataset_for(ctx);
  const fs::path dir = ctx.ensure_out_dir();
  {
    std::ofstream f(dir / "config.json");
    f << to_json(cfg).dump(2) << '\n';
    if (!f) throw IoError("cannot write " + (dir / "config.json").string());
  }
  std::ofstream log(dir / "loss_log.jsonl"), tlog(dir / "teacher_log.jsonl");
  if (!log || !tlog) throw IoError("cannot write logs under " + dir.string());

  TrainOptions opt;
  opt.workers = ctx.flags.workers;
  opt.on_log = [&](const std::string& line) {
    log << line << '\n';
    log.flush();
    if (line.find("val_loss") != std::string::npos) ctx.log->info("eval {}", line);
    else ctx.log->debug("{}", line);
  };
  opt.on_teacher_log = [&](const std::string& line) {
    tlog << line << '\n';
    ctx.log->debug("teacher {}", line);
  };
  AlignmentModel<float> model(cfg.model);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(cfg, data, model, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(r.best, dir / "best.ecsk");
  ctx.log->info("best checkpoint at step {} (val loss {:.5f}) after {:.0f}s", r.best.step, r.best.val_loss, secs);
  ctx.emit({{"config_hash", hex64(hash)},
            {"steps", r.steps.size()},
            {"best_step", r.best.step},
            {"best_val_loss", r.best.val_loss},
            {"final_total", r.steps.empty() ? 0.0 : r.steps.back().total},
            {"seconds", secs},
            {"checkpoint", (dir / "best.ecsk").string()},
            {"loss_log", (dir / "loss_log.jsonl").string()}});
  return kExitOk;
}

int cmd_eval(Context& ctx) {
  const ExperimentConfig& cfg = ctx.config;
  if (ctx.flags.mode != "linear-probe" && ctx.flags.mode != "zero-shot") {
    throw ParameterError("eval: --mode must be linear-probe or zero-shot");
  }
  if (cfg.paths.checkpoint.empty()) throw ParameterError("eval: checkpoint required (--checkpoint)");
  const Checkpoint ckpt = load_checkpoint(cfg.paths.checkpoint);
  if (ckpt.config_hash != config_hash(cfg)) {
    ctx.log->warn("checkpoint config hash {} differs from the resolved config {}", hex64(ckpt.config_hash), hex64(config_hash(cfg)));
  }
  AlignmentModel<float> model(cfg.model);
  restore(ckpt, model, nullptr);
  const Dataset data = dataset_for(ctx);
  const Embeddings test = embed_items(model, data, data.test, cfg, ctx.flags.workers);
  ordered_json j{{"mode", ctx.flags.mode}, {"checkpoint", cfg.paths.checkpoint}, {"n_test", data.test.size()}};
  if (ctx.flags.mode == "zero-shot") {
    std::vector<ReportText> prompts;
    for (std::size_t c = 0; c < kNumRhythmClasses; ++c) prompts.push_back(class_prompt(c));
    j["auc"] = zero_shot_auc(model, test, prompts);
  } else {
    const Embeddings train = embed_items(model, data, data.train, cfg, ctx.flags.workers);
    j["fraction"] = ctx.flags.fraction;
    j["auc"] = linear_probe(train.z_img, train.labels, test.z_img, test.labels, ctx.flags.fraction,
                            derive_seed({cfg.seed, 0x70726f6265ULL}), cfg.probe);
  }
  ctx.log->info("{} macro AUC {:.4f}", ctx.flags.mode, j["auc"].get<double>());
  ctx.emit(j);
  return kExitOk;
}

int cmd_snr_report(Context& ctx) {
  std::vector<EcgRecord> owned;
  if (!ctx.flags.records.empty()) {
    for (const auto& p : ctx.flags.records) owned.push_back(read_any_record(p));
  } else {
    Dataset d = dataset_for(ctx);
    for (auto& it : d.items) owned.push_back(std::move(it.sample.record));
  }
  std::vector<const EcgRecord*> ptrs;
  for (const auto& r : owned) ptrs.push_back(&r);
  const auto rows = snr_report(ptrs);
  const fs::path dir = ctx.ensure_out_dir();
  const fs::path csv = dir / "snr_report.csv";
  std::ofstream f(csv);
  f << snr_report_csv(rows);
  if (!f) throw IoError("cannot write " + csv.string());
  ordered_json leads;
  for (const auto& r : rows) leads[std::string(name(r.lead))] = r.mean_snr_db;
  ctx.emit({{"csv", csv.string()}, {"n_records", ptrs.size()}, {"mean_snr_db", leads}});
  return kExitOk;
}

int cmd_inspect(Context& ctx) {
  if (ctx.config.paths.checkpoint.empty()) throw ParameterError("inspect-checkpoint: checkpoint required (--checkpoint)");
  const Checkpoint c = load_checkpoint(ctx.config.paths.checkpoint);
  ordered_json tensors = ordered_json::array();
  std::size_t total = 0;
  for (const auto& [name, t] : c.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.dims}, {"numel", t.data.size()}});
    total += t.data.size();
  }
  ctx.emit({{"version", kCheckpointVersion},
            {"step", c.step},
            {"val_loss", c.val_loss},
            {"config_hash", hex64(c.config_hash)},
            {"n_tensors", c.tensors.size()},
            {"n_values", total},
            {"tensors", tensors}});
  return kExitOk;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("ecglab", sink);
  log->set_pattern("[%l] %v");
  const char* env = std::getenv("ECGLAB_LOG");
  const std::string level = env ? env : "info";
  if (level == "quiet") log->set_level(spdlog::level::warn);
  else if (level == "info") log->set_level(spdlog::level::info);
  else if (level == "debug") log->set_level(spdlog::level::debug);
  else throw ParameterError("ECGLAB_LOG must be quiet, info or debug, got \"" + level + "\"");
  return log;
}

}  // namespace

std::unique_ptr<CLI::App> make_app(Flags& f) {
  auto app = std::make_unique<CLI::App>("ecglab: synthetic ECG image laboratory", "ecglab");
  app->require_subcommand(1);
  app->fallthrough();
  app->add_option("--config", f.config, "JSON config file; omitted keys keep their defaults");
  app->add_option_function<std::uint64_t>("--seed", [&f](std::uint64_t s) { f.seed = s; f.seed_set = true; },
                                          "Override the config seed");
  app->add_option("--out", f.out, "Output directory (default: paths.out from the config)");
  app->add_option("--workers", f.workers, "Threads used for rendering images")->check(CLI::PositiveNumber);

  app->add_subcommand("synth-data", "Generate the synthetic dataset: records/ and manifest.json");

  auto* render = app->add_subcommand("render", "Render one record (.ecgr or .csv) to PNG plus sidecar JSON");
  render->add_option("--record", f.record, "Record file to render")->required();

  auto* aug = app->add_subcommand("augment", "Apply the seeded augmentation pipeline to a rendered PNG");
  aug->add_option("--image", f.image, "PNG written by render (its sidecar JSON is read if present)")->required();

  auto* gc = app->add_subcommand("grad-check", "Finite-difference check of every primitive and loss");
  gc->add_option("--instances", f.instances, "Random instances per check")->check(CLI::PositiveNumber);

  auto* train = app->add_subcommand("train", "Stage-0 teacher pretraining, then stage-1 alignment training");
  train->add_option("--steps", f.steps, "Override train.total_steps")->check(CLI::PositiveNumber);
  train->add_option("--data", f.data, "manifest.json from synth-data (default: build in memory)");

  auto* eval = app->add_subcommand("eval", "Downstream evaluation of a checkpoint on the test split");
  eval->add_option("--mode", f.mode, "linear-probe or zero-shot")->required();
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint (.ecsk) to evaluate");
  eval->add_option("--fraction", f.fraction, "Share of the train split used by the linear probe");
  eval->add_option("--data", f.data, "manifest.json from synth-data (default: build in memory)");

  auto* snr = app->add_subcommand("snr-report", "Mean SNR of derived limb leads, written as CSV");
  snr->add_option("--record", f.records, "Record file(s); default: every record of the dataset");
  snr->add_option("--data", f.data, "manifest.json from synth-data (default: build in memory)");

  auto* inspect = app->add_subcommand("inspect-checkpoint", "List the tensors and bookkeeping of a checkpoint");
  inspect->add_option("--checkpoint", f.checkpoint, "Checkpoint (.ecsk) to read");
  return app;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags flags;
  auto app = make_app(flags);
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app->parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app->help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    Context ctx{flags, resolve_config(flags), out, make_logger(err)};
    const CLI::App* sub = app->get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth-data") return cmd_synth_data(ctx);
    if (name == "render") return cmd_render(ctx);
    if (name == "augment") return cmd_augment(ctx);
    if (name == "grad-check") return cmd_grad_check(ctx);
    if (name == "train") return cmd_train(ctx);
    if (name == "eval") return cmd_eval(ctx);
    if (name == "snr-report") return cmd_snr_report(ctx);
    if (name == "inspect-checkpoint") return cmd_inspect(ctx);
    throw ParameterError("unknown subcommand " + name);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace ecglab::cli
