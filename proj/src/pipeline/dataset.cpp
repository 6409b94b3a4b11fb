#include "ecglab/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ecglab/error.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

namespace {

constexpr std::uint64_t kTestStream = 0x74657374ULL;

std::vector<std::size_t> quota(std::size_t n, const std::array<double, kNumRhythmClasses>& mix) {
  const double total = std::accumulate(mix.begin(), mix.end(), 0.0);
  std::vector<std::size_t> counts(kNumRhythmClasses);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < kNumRhythmClasses; ++c) {
    const double exact = static_cast<double>(n) * mix[c] / total;
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    used += counts[c];
    rem.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++counts[rem[k % rem.size()].second];
  return counts;
}

std::vector<DatasetItem> generate(std::size_t n, const DatasetConfig& cfg, std::uint64_t stream, const char* prefix) {
  const auto counts = quota(n, cfg.class_mix);
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], c);
  Rng order(derive_seed({cfg.seed, stream, 0x6c6162656cULL}));
  order.shuffle(labels.begin(), labels.end());

  const SynthRanges& r = cfg.synth;
  std::vector<DatasetItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed({cfg.seed, stream, i}));
    SynthParams p;
    p.fs = r.fs;
    p.duration = r.duration;
    p.heart_rate = rng.uniform(r.heart_rate[labels[i]].lo, r.heart_rate[labels[i]].hi);
    auto jitter = [&](double v) { return v * rng.uniform(1.0 - r.amplitude_jitter, 1.0 + r.amplitude_jitter); };
    p.waves = {jitter(p.waves.p), jitter(p.waves.q), jitter(p.waves.r), jitter(p.waves.s), jitter(p.waves.t)};
    p.noise_sigma = rng.uniform(0.0, r.noise_sigma_max);
    p.wander = {rng.uniform(0.0, r.wander_max_mv), rng.uniform(r.wander_hz.lo, r.wander_hz.hi)};
    p.seed = rng.next_u64();

    DatasetItem item;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05zu", prefix, i);
    item.id = id;
    item.heart_rate = p.heart_rate;
    item.sample = synth_ecg(p);
    if (item.sample.label != labels[i]) {
      throw ContractError("dataset: heart rate " + std::to_string(p.heart_rate) + " does not fall in its class range");
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace

void SynthRanges::validate() const {
  if (!(fs > 0)) throw ParameterError("synth.fs must be > 0");
  if (!(duration > 0)) throw ParameterError("synth.duration must be > 0");
  const ClassRule rule;
  for (std::size_t c = 0; c < heart_rate.size(); ++c) {
    const Range h = heart_rate[c];
    if (!(h.lo > 0 && h.lo <= h.hi) || rule.classify(h.lo) != c || rule.classify(h.hi) != c) {
      throw ParameterError("synth.heart_rate[" + std::to_string(c) + "] must lie inside the " +
                           std::string(class_name(c)) + " range");
    }
  }
  if (!(amplitude_jitter >= 0 && amplitude_jitter < 1)) throw ParameterError("synth.amplitude_jitter must be in [0, 1)");
  if (!(noise_sigma_max >= 0)) throw ParameterError("synth.noise_sigma_max must be >= 0");
  if (!(wander_max_mv >= 0)) throw ParameterError("synth.wander_max_mv must be >= 0");
  if (!(wander_hz.lo >= 0 && wander_hz.lo <= wander_hz.hi)) throw ParameterError("synth.wander_hz must be an ordered range");
}

void DatasetConfig::validate() const {
  if (n_samples < 10) throw ParameterError("n_samples must be >= 10, got " + std::to_string(n_samples));
  if (!(split_ratio > 0 && split_ratio < 1)) throw ParameterError("split_ratio must be in (0, 1)");
  double total = 0;
  for (double m : class_mix) {
    if (!(m >= 0)) throw ParameterError("class_mix entries must be >= 0");
    total += m;
  }
  if (!(total > 0)) throw ParameterError("class_mix must have a positive entry");
  synth.validate();
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Dataset build_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset d;
  d.seed = config.seed;
  d.items = generate(config.n_samples, config, 0, "rec");

  std::vector<std::size_t> perm(config.n_samples);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed({config.seed, 0x73706c6974ULL}));
  rng.shuffle(perm.begin(), perm.end());
  const auto n_train = static_cast<std::size_t>(std::llround(config.split_ratio * static_cast<double>(config.n_samples)));
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const bool is_train = k < n_train;
    d.items[perm[k]].split = is_train ? Split::kTrain : Split::kVal;
  }
  auto test = generate(config.n_test, config, kTestStream, "test");
  for (auto& t : test) {
    t.split = Split::kTest;
    d.items.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    switch (d.items[i].split) {
      case Split::kTrain: d.train.push_back(i); break;
      case Split::kVal: d.val.push_back(i); break;
      case Split::kTest: d.test.push_back(i); break;
    }
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "records", ec);
  if (ec) throw IoError("cannot create " + (dir / "records").string() + ": " + ec.message());
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["seed"] = dataset.seed;
  auto& items = j["records"] = nlohmann::ordered_json::array();
  for (const DatasetItem& it : dataset.items) {
    const std::string rel = "records/" + it.id + ".ecgr";
    save_record(it.sample.record, dir / rel);
    items.push_back({{"id", it.id},
                     {"path", rel},
                     {"split", to_string(it.split)},
                     {"label", it.sample.label},
                     {"class", class_name(it.sample.label)},
                     {"heart_rate", it.heart_rate},
                     {"report", it.sample.report.raw}});
  }
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << j.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot read manifest " + manifest_path.string());
  Dataset d;
  try {
    const auto j = nlohmann::json::parse(f);
    d.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("records")) {
      DatasetItem it;
      it.id = r.at("id").get<std::string>();
      const auto split = r.at("split").get<std::string>();
      if (split == "train") it.split = Split::kTrain;
      else if (split == "val") it.split = Split::kVal;
      else if (split == "test") it.split = Split::kTest;
      else throw ParseError("manifest: unknown split \"" + split + "\"");
      it.heart_rate = r.at("heart_rate").get<double>();
      it.sample.label = r.at("label").get<std::size_t>();
      if (it.sample.label >= kNumRhythmClasses) throw ParseError("manifest: label out of range for " + it.id);
      it.sample.report = tokenize(r.at("report").get<std::string>());
      it.sample.record = load_record(manifest_path.parent_path() / r.at("path").get<std::string>());
      d.items.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest: " + std::string(e.what()));
  }
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    (d.items[i].split == Split::kTrain ? d.train : d.items[i].split == Split::kVal ? d.val : d.test).push_back(i);
  }
  return d;
}

}  // namespace ecglab
