#include "ecglab/pipeline/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "ecglab/error.hpp"
#include "ecglab/hash.hpp"

namespace ecglab {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("train.batch_size must be >= 1");
  if (!(lr > 0)) throw ParameterError("train.lr must be > 0");
  if (total_steps < 1) throw ParameterError("train.total_steps must be >= 1");
  if (!(warmup_fraction > 0 && warmup_fraction < 1)) throw ParameterError("train.warmup_fraction must be in (0, 1)");
  if (eval_interval < 1) throw ParameterError("train.eval_interval must be >= 1");
  if (teacher_batch_size < 2) throw ParameterError("train.teacher_batch_size must be >= 2");
  if (!(teacher_lr > 0)) throw ParameterError("train.teacher_lr must be > 0");
  optimizer.validate();
}

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.batch_size = 80;
  c.lr = 5e-4;
  c.total_steps = 50000;
  return c;
}

ExperimentConfig::ExperimentConfig() {
  // Toy scale renders at 4 px/mm (1080 x 560).
  render.px_per_mm = 4;
}

void ExperimentConfig::resolve() {
  data.seed = seed;
  model.seed = seed;
  model.image_width = image_width_px(render);
  model.image_height = image_height_px(render);
  const auto t = static_cast<std::size_t>(std::llround(data.synth.fs * data.synth.duration));
  if (model.n_samples != t) {
    throw ParameterError("model.n_samples (" + std::to_string(model.n_samples) + ") must equal synth.fs * synth.duration (" +
                         std::to_string(t) + ")");
  }
  data.validate();
  train.validate();
  loss.validate();
  model.validate();
  render.validate();
  augment.validate();
  if (probe.epochs < 1 || probe.batch_size < 1 || !(probe.lr > 0)) throw ParameterError("probe: epochs, batch_size and lr must be positive");
  probe.optimizer.validate();
}

namespace {

ordered_json range_json(Range r) { return ordered_json::array({r.lo, r.hi}); }

/// Reads fields of one JSON object, remembering which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParameterError("config: \"" + where() + "\" must be an object");
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if constexpr (std::is_integral_v<V> && std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
      if (!j_.at(key).is_number_unsigned()) throw ParameterError("config: \"" + name(key) + "\" must be a non-negative integer");
    }
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception&) {
      throw ParameterError("config: \"" + name(key) + "\" has the wrong type");
    }
  }
  void get(const char* key, Range& out) {
    std::array<double, 2> a{out.lo, out.hi};
    get(key, a);
    out = {a[0], a[1]};
  }
  template <typename F>
  void object(const char* key, F&& f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Fields sub(j_.at(key), name(key));
    f(sub);
    sub.finish();
  }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ParameterError("config: unknown key \"" + name(k) + "\"");
    }
  }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_optimizer(Fields& f, AdamWConfig& o) {
  f.get("beta1", o.beta1);
  f.get("beta2", o.beta2);
  f.get("eps", o.eps);
  f.get("weight_decay", o.weight_decay);
}

ordered_json optimizer_json(const AdamWConfig& o) {
  return {{"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}, {"weight_decay", o.weight_decay}};
}

}  // namespace

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  const SynthRanges& s = c.data.synth;
  ordered_json hr = ordered_json::array();
  for (Range r : s.heart_rate) hr.push_back(range_json(r));
  j["data"] = {{"n_samples", c.data.n_samples},
               {"n_test", c.data.n_test},
               {"split_ratio", c.data.split_ratio},
               {"class_mix", c.data.class_mix},
               {"synth",
                {{"fs", s.fs},
                 {"duration", s.duration},
                 {"heart_rate", hr},
                 {"amplitude_jitter", s.amplitude_jitter},
                 {"noise_sigma_max", s.noise_sigma_max},
                 {"wander_max_mv", s.wander_max_mv},
                 {"wander_hz", range_json(s.wander_hz)}}}};
  const TrainConfig& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},
                {"lr", t.lr},
                {"total_steps", t.total_steps},
                {"warmup_fraction", t.warmup_fraction},
                {"eval_interval", t.eval_interval},
                {"optimizer", optimizer_json(t.optimizer)},
                {"teacher_steps", t.teacher_steps},
                {"teacher_batch_size", t.teacher_batch_size},
                {"teacher_lr", t.teacher_lr}};
  const LossWeights& l = c.loss;
  j["loss"] = {{"alpha", l.alpha},   {"beta", l.beta},         {"theta", l.theta},
               {"w_rule", l.w_rule}, {"w_e", l.w_e},           {"w_g", l.w_g},
               {"epsilon_smooth", l.epsilon_smooth},           {"det_floor", l.det_floor}};
  const ModelConfig& m = c.model;
  j["model"] = {{"d_img", m.d_img},
                {"d_sig", m.d_sig},
                {"decoder",
                 {{"layers", m.decoder.layers},
                  {"d", m.decoder.d},
                  {"heads", m.decoder.heads},
                  {"patch", m.decoder.patch},
                  {"mask_ratio", m.decoder.mask_ratio}}},
                {"n_samples", m.n_samples},
                {"grid_rows", m.grid_rows},
                {"grid_cols", m.grid_cols},
                {"image_patch", m.image_patch},
                {"image_hidden", m.image_hidden},
                {"signal_patch", m.signal_patch},
                {"signal_hidden", m.signal_hidden},
                {"text_dim", m.text_dim},
                {"pad_to_patch", m.pad_to_patch}};
  const RenderConfig& r = c.render;
  j["render"] = {{"px_per_mm", r.px_per_mm},
                 {"paper_speed", r.paper_speed},
                 {"gain", r.gain},
                 {"margins", {{"left", r.margins.left}, {"right", r.margins.right}, {"top", r.margins.top}, {"bottom", r.margins.bottom}}},
                 {"grid_style", to_string(r.grid_style)},
                 {"show_labels", r.show_labels},
                 {"show_calibration_pulse", r.show_calibration_pulse},
                 {"seed", r.seed}};
  const AugmentConfig& a = c.augment;
  j["augment"] = {{"rotation_deg", range_json(a.rotation_deg)},
                  {"gauss_noise_sigma", range_json(a.gauss_noise_sigma)},
                  {"contrast", range_json(a.contrast)},
                  {"brightness", range_json(a.brightness)},
                  {"grid_color_jitter", a.grid_color_jitter},
                  {"apply_prob", a.apply_prob}};
  const ProbeConfig& p = c.probe;
  j["probe"] = {{"epochs", p.epochs},
                {"batch_size", p.batch_size},
                {"lr", p.lr},
                {"epsilon_smooth", p.epsilon_smooth},
                {"optimizer", optimizer_json(p.optimizer)}};
  j["paths"] = {{"out", c.paths.out}, {"data", c.paths.data}, {"checkpoint", c.paths.checkpoint}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Fields root(j, "");
  root.get("seed", c.seed);
  root.object("data", [&](Fields& f) {
    f.get("n_samples", c.data.n_samples);
    f.get("n_test", c.data.n_test);
    f.get("split_ratio", c.data.split_ratio);
    f.get("class_mix", c.data.class_mix);
    f.object("synth", [&](Fields& s) {
      SynthRanges& r = c.data.synth;
      s.get("fs", r.fs);
      s.get("duration", r.duration);
      std::array<std::array<double, 2>, kNumRhythmClasses> hr;
      for (std::size_t k = 0; k < hr.size(); ++k) hr[k] = {r.heart_rate[k].lo, r.heart_rate[k].hi};
      s.get("heart_rate", hr);
      for (std::size_t k = 0; k < hr.size(); ++k) r.heart_rate[k] = {hr[k][0], hr[k][1]};
      s.get("amplitude_jitter", r.amplitude_jitter);
      s.get("noise_sigma_max", r.noise_sigma_max);
      s.get("wander_max_mv", r.wander_max_mv);
      s.get("wander_hz", r.wander_hz);
    });
  });
  root.object("train", [&](Fields& f) {
    TrainConfig& t = c.train;
    f.get("batch_size", t.batch_size);
    f.get("lr", t.lr);
    f.get("total_steps", t.total_steps);
    f.get("warmup_fraction", t.warmup_fraction);
    f.get("eval_interval", t.eval_interval);
    f.object("optimizer", [&](Fields& o) { read_optimizer(o, t.optimizer); });
    f.get("teacher_steps", t.teacher_steps);
    f.get("teacher_batch_size", t.teacher_batch_size);
    f.get("teacher_lr", t.teacher_lr);
  });
  root.object("loss", [&](Fields& f) {
    LossWeights& l = c.loss;
    f.get("alpha", l.alpha);
    f.get("beta", l.beta);
    f.get("theta", l.theta);
    f.get("w_rule", l.w_rule);
    f.get("w_e", l.w_e);
    f.get("w_g", l.w_g);
    f.get("epsilon_smooth", l.epsilon_smooth);
    f.get("det_floor", l.det_floor);
  });
  root.object("model", [&](Fields& f) {
    ModelConfig& m = c.model;
    f.get("d_img", m.d_img);
    f.get("d_sig", m.d_sig);
    f.object("decoder", [&](Fields& d) {
      d.get("layers", m.decoder.layers);
      d.get("d", m.decoder.d);
      d.get("heads", m.decoder.heads);
      d.get("patch", m.decoder.patch);
      d.get("mask_ratio", m.decoder.mask_ratio);
    });
    f.get("n_samples", m.n_samples);
    f.get("grid_rows", m.grid_rows);
    f.get("grid_cols", m.grid_cols);
    f.get("image_patch", m.image_patch);
    f.get("image_hidden", m.image_hidden);
    f.get("signal_patch", m.signal_patch);
    f.get("signal_hidden", m.signal_hidden);
    f.get("text_dim", m.text_dim);
    f.get("pad_to_patch", m.pad_to_patch);
  });
  root.object("render", [&](Fields& f) {
    RenderConfig& r = c.render;
    f.get("px_per_mm", r.px_per_mm);
    f.get("paper_speed", r.paper_speed);
    f.get("gain", r.gain);
    f.object("margins", [&](Fields& m) {
      m.get("left", r.margins.left);
      m.get("right", r.margins.right);
      m.get("top", r.margins.top);
      m.get("bottom", r.margins.bottom);
    });
    std::string style(to_string(r.grid_style));
    f.get("grid_style", style);
    r.grid_style = grid_style_from_string(style);
    f.get("show_labels", r.show_labels);
    f.get("show_calibration_pulse", r.show_calibration_pulse);
    f.get("seed", r.seed);
  });
  root.object("augment", [&](Fields& f) {
    AugmentConfig& a = c.augment;
    f.get("rotation_deg", a.rotation_deg);
    f.get("gauss_noise_sigma", a.gauss_noise_sigma);
    f.get("contrast", a.contrast);
    f.get("brightness", a.brightness);
    f.get("grid_color_jitter", a.grid_color_jitter);
    f.get("apply_prob", a.apply_prob);
  });
  root.object("probe", [&](Fields& f) {
    ProbeConfig& p = c.probe;
    f.get("epochs", p.epochs);
    f.get("batch_size", p.batch_size);
    f.get("lr", p.lr);
    f.get("epsilon_smooth", p.epsilon_smooth);
    f.object("optimizer", [&](Fields& o) { read_optimizer(o, p.optimizer); });
  });
  root.object("paths", [&](Fields& f) {
    f.get("out", c.paths.out);
    f.get("data", c.paths.data);
    f.get("checkpoint", c.paths.checkpoint);
  });
  root.finish();
  c.resolve();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  ordered_json j = to_json(config);
  j.erase("paths");
  return fnv1a64(j.dump());
}

}  // namespace ecglab
