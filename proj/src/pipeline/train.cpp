#include "ecglab/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "ecglab/error.hpp"
#include "ecglab/leads/lead_rules.hpp"
#include "ecglab/render/render.hpp"

namespace ecglab {

using Tf = ad::Tensor<float>;

namespace {

template <typename F>
void fan_out(std::size_t n, std::size_t workers, F&& f) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Epoch-wise shuffled batches over a fixed index set; the final partial
/// batch of each epoch is dropped so every batch has the same size.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, std::size_t batch, std::uint64_t seed)
      : pool_(std::move(pool)), batch_(batch), seed_(seed) {
    if (pool_.size() < batch_) {
      throw DataError("batch size " + std::to_string(batch_) + " exceeds the " + std::to_string(pool_.size()) +
                      " training samples");
    }
  }

  std::vector<std::size_t> next() {
    if (cursor_ + batch_ > order_.size()) {
      order_ = pool_;
      Rng rng(derive_seed({seed_, 0x65706f6368ULL, epoch_++}));
      rng.shuffle(order_.begin(), order_.end());
      cursor_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
    cursor_ += batch_;
    return out;
  }

 private:
  std::vector<std::size_t> pool_, order_;
  std::size_t batch_, cursor_ = 0;
  std::uint64_t seed_, epoch_ = 0;
};

Tf rows_of(const Tf& table, const std::vector<std::size_t>& rows) {
  const std::size_t d = table.dim(1);
  std::vector<float> out;
  out.reserve(rows.size() * d);
  for (std::size_t r : rows) out.insert(out.end(), table.data().begin() + r * d, table.data().begin() + (r + 1) * d);
  return Tf::constant({rows.size(), d}, std::move(out));
}

Tf records_tensor(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t t) {
  std::vector<float> out;
  out.reserve(idx.size() * kNumLeads * t);
  for (std::size_t i : idx) {
    const auto s = data.items[i].sample.record.samples();
    if (s.size() != kNumLeads * t) throw ShapeError("record " + data.items[i].id + " does not have the model's length");
    out.insert(out.end(), s.begin(), s.end());
  }
  return Tf::constant({idx.size(), kNumLeads, t}, std::move(out));
}

Tf patches_tensor(const std::vector<std::vector<float>>& per_item, const ModelConfig& m) {
  const std::size_t per = m.n_image_patches() * m.image_patch * m.image_patch;
  std::vector<float> out;
  out.reserve(per_item.size() * per);
  for (const auto& p : per_item) out.insert(out.end(), p.begin(), p.end());
  return Tf::constant({per_item.size(), m.n_image_patches(), m.image_patch * m.image_patch}, std::move(out));
}

std::vector<const EcgRecord*> record_ptrs(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<const EcgRecord*> out;
  for (std::size_t i : idx) out.push_back(&data.items[i].sample.record);
  return out;
}

std::vector<const ReportText*> report_ptrs(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<const ReportText*> out;
  for (std::size_t i : idx) out.push_back(&data.items[i].sample.report);
  return out;
}

/// Frozen-teacher embeddings of every item, computed once.
struct TeacherCache {
  Tf z_sig, z_txt;  // (n_items, d_sig)
};

TeacherCache cache_teachers(const AlignmentModel<float>& model, const Dataset& data) {
  std::vector<std::size_t> all(data.items.size());
  std::iota(all.begin(), all.end(), 0);
  TeacherCache c;
  std::vector<float> sig, txt;
  for (std::size_t start = 0; start < all.size(); start += 64) {
    std::vector<std::size_t> idx(all.begin() + static_cast<std::ptrdiff_t>(start),
                                 all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), start + 64)));
    const Tf s = model.encode_signal(record_ptrs(data, idx));
    const Tf t = model.encode_text(report_ptrs(data, idx));
    sig.insert(sig.end(), s.data().begin(), s.data().end());
    txt.insert(txt.end(), t.data().begin(), t.data().end());
  }
  const std::size_t d = model.config().d_sig;
  c.z_sig = Tf::constant({all.size(), d}, std::move(sig));
  c.z_txt = Tf::constant({all.size(), d}, std::move(txt));
  return c;
}

TotalLoss<float> batch_loss(const AlignmentModel<float>& model, const Temperatures<float>& temps, const Tf& patches,
                            const Tf& targets, const Tf& z_sig, const Tf& z_txt, const std::vector<std::uint64_t>& mask_seeds,
                            bool training, const LossWeights& w) {
  const Tf z_img = model.encode_image_patches(patches);
  const Projections<float> proj = model.project(z_img);
  const Tf x_hat = model.decode(proj.z_rec, mask_seeds, training);
  LossParts<float> parts;
  parts.ctr = contrastive_loss(proj.z_ctr, z_txt, temps.tau_ctr(), w.epsilon_smooth);
  parts.gram = gram_loss(volume_matrix(proj.z_ctr, z_txt, z_sig, w.det_floor), temps.tau_gram(), w.epsilon_smooth);
  parts.mse = recon_mse(x_hat, targets);
  parts.rule = rule_loss(x_hat, targets, RuleWeights{w.w_e, w.w_g});
  return total_loss(parts, w);
}

std::vector<std::pair<std::string, Tf>> named(ParameterRegistry<float>& reg, const std::string& prefix) {
  std::vector<std::pair<std::string, Tf>> out;
  for (auto& [name, t] : reg.all()) out.emplace_back(prefix + name, t);
  return out;
}

std::string fmt(double v) {
  nlohmann::json j = v;
  return j.dump();
}

}  // namespace

EcgImage render_item(const DatasetItem& item, const RenderConfig& render) { return ecglab::render(item.sample.record, render); }

std::vector<double> pretrain_teachers(AlignmentModel<float>& model, const Dataset& data, const ExperimentConfig& config,
                                      const LogSink& on_log) {
  if (model.teachers_frozen()) throw LifecycleError("teachers are already frozen");
  const TrainConfig& t = config.train;
  BatchSampler sampler(data.train, std::min(t.teacher_batch_size, data.train.size()), derive_seed({config.seed, 0x7465616368ULL}));
  AdamW opt(named(model.teachers(), "teacher/"), t.optimizer);
  const Tf tau = Tf::constant({1}, {static_cast<float>(kTemperatureInit)});
  std::vector<double> losses;
  for (std::size_t step = 1; step <= t.teacher_steps; ++step) {
    const auto idx = sampler.next();
    const Tf z_sig = model.signal_forward(record_ptrs(data, idx));
    const Tf z_txt = model.text_forward(report_ptrs(data, idx));
    const Tf loss = contrastive_loss(z_sig, z_txt, tau, 0.0);
    const double v = loss.item();
    if (!std::isfinite(v)) throw DivergenceError("stage-0 teacher loss is non-finite at step " + std::to_string(step));
    model.teachers().zero_grad();
    ad::backward(loss);
    opt.step(cosine_warmup_lr(step, t.teacher_steps, t.warmup_fraction, t.teacher_lr));
    losses.push_back(v);
    if (on_log) on_log("{\"step\":" + std::to_string(step) + ",\"l_ctr\":" + fmt(v) + "}");
  }
  model.freeze_teachers();
  return losses;
}

TrainResult train(const ExperimentConfig& config, const Dataset& data, AlignmentModel<float>& model,
                  const TrainOptions& options) {
  const TrainConfig& t = config.train;
  const ModelConfig& m = model.config();
  TrainResult result;
  if (data.val.empty()) throw DataError("dataset has no validation split");
  if (!model.teachers_frozen()) result.teacher_losses = pretrain_teachers(model, data, config, options.on_teacher_log);
  const TeacherCache teach = cache_teachers(model, data);
  const std::uint64_t hash = config_hash(config);

  // Validation inputs never change: clean renders, no masking.
  std::vector<std::vector<float>> val_patches(data.val.size());
  fan_out(data.val.size(), options.workers, [&](std::size_t k) {
    val_patches[k] = image_patches(render_item(data.items[data.val[k]], config.render), m);
  });

  Temperatures<float> temps = Temperatures<float>::init();
  auto params = named(model.student(), "student/");
  params.emplace_back("temperature/s_ctr", temps.s_ctr);
  params.emplace_back("temperature/s_gram", temps.s_gram);
  AdamW opt(params, t.optimizer);
  BatchSampler sampler(data.train, t.batch_size, derive_seed({config.seed, 0x6261746368ULL}));

  auto evaluate = [&]() {
    double sum = 0;
    std::size_t chunks = 0;
    for (std::size_t start = 0; start < data.val.size(); start += t.batch_size) {
      const std::size_t n = std::min(t.batch_size, data.val.size() - start);
      if (n < 2 && chunks > 0) break;  // a lone trailing sample has no contrastive negatives
      std::vector<std::size_t> idx(data.val.begin() + static_cast<std::ptrdiff_t>(start),
                                   data.val.begin() + static_cast<std::ptrdiff_t>(start + n));
      std::vector<std::vector<float>> p(val_patches.begin() + static_cast<std::ptrdiff_t>(start),
                                        val_patches.begin() + static_cast<std::ptrdiff_t>(start + n));
      const auto loss = batch_loss(model, temps, patches_tensor(p, m), records_tensor(data, idx, m.n_samples),
                                   rows_of(teach.z_sig, idx), rows_of(teach.z_txt, idx),
                                   std::vector<std::uint64_t>(n, 0), false, config.loss);
      sum += loss.parts.total;
      ++chunks;
    }
    return static_cast<float>(sum / static_cast<double>(chunks));
  };

  auto emit = [&](std::string line) {
    if (options.on_log) options.on_log(line);
    result.log.push_back(std::move(line));
  };

  bool have_best = false;
  for (std::size_t step = 1; step <= t.total_steps; ++step) {
    const auto idx = sampler.next();
    std::vector<std::vector<float>> per(idx.size());
    std::vector<std::uint64_t> mask_seeds(idx.size());
    fan_out(idx.size(), options.workers, [&](std::size_t k) {
      AugmentConfig aug = config.augment;
      aug.seed = sample_seed(config.seed, step, idx[k]);
      per[k] = image_patches(augment(render_item(data.items[idx[k]], config.render), aug), m);
    });
    for (std::size_t k = 0; k < idx.size(); ++k) mask_seeds[k] = derive_seed({sample_seed(config.seed, step, idx[k]), 1});

    // A blown-up model collapses its embeddings to zero before anything overflows.
    const auto loss = [&] {
      try {
        return batch_loss(model, temps, patches_tensor(per, m), records_tensor(data, idx, m.n_samples),
                          rows_of(teach.z_sig, idx), rows_of(teach.z_txt, idx), mask_seeds, true, config.loss);
      } catch (const DomainError& e) {
        throw DivergenceError("training step " + std::to_string(step) + ": " + e.what());
      }
    }();
    for (auto& [name, p] : params) p.zero_grad();
    ad::backward(loss.total);
    opt.step(cosine_warmup_lr(step, t.total_steps, t.warmup_fraction, t.lr));
    temps.clamp();

    const LossBreakdown& b = loss.parts;
    result.steps.push_back(b);
    emit("{\"step\":" + std::to_string(step) + ",\"l_ctr\":" + fmt(b.l_ctr) + ",\"l_gram\":" + fmt(b.l_gram) +
         ",\"l_mse\":" + fmt(b.l_mse) + ",\"l_rule\":" + fmt(b.l_rule) + ",\"total\":" + fmt(b.total) +
         ",\"tau_ctr\":" + fmt(std::exp(temps.s_ctr.data()[0])) + ",\"tau_gram\":" + fmt(std::exp(temps.s_gram.data()[0])) + "}");

    if (step % t.eval_interval == 0 || step == t.total_steps) {
      const float v = evaluate();
      if (!std::isfinite(v)) throw DivergenceError("validation loss is non-finite at step " + std::to_string(step));
      result.evals.push_back({step, v});
      const bool improved = !have_best || v < result.best.val_loss;
      if (improved) {
        result.best = snapshot(model, temps, step, v, hash);
        have_best = true;
      }
      emit("{\"step\":" + std::to_string(step) + ",\"val_loss\":" + fmt(v) + ",\"best\":" + (improved ? "true" : "false") + "}");
    }
  }
  return result;
}

Embeddings embed_items(const AlignmentModel<float>& model, const Dataset& data, const std::vector<std::size_t>& indices,
                       const ExperimentConfig& config, std::size_t workers) {
  const ModelConfig& m = model.config();
  Embeddings e;
  e.z_img = {indices.size(), m.d_img, {}};
  e.z_ctr = {indices.size(), m.d_sig, {}};
  e.z_rec = {indices.size(), m.d_sig, {}};
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, indices.size() - start);
    std::vector<std::vector<float>> per(n);
    fan_out(n, workers, [&](std::size_t k) {
      per[k] = image_patches(render_item(data.items[indices[start + k]], config.render), m);
    });
    const Tf z = model.encode_image_patches(patches_tensor(per, m));
    const Projections<float> p = model.project(z);
    e.z_img.data.insert(e.z_img.data.end(), z.data().begin(), z.data().end());
    e.z_ctr.data.insert(e.z_ctr.data.end(), p.z_ctr.data().begin(), p.z_ctr.data().end());
    e.z_rec.data.insert(e.z_rec.data.end(), p.z_rec.data().begin(), p.z_rec.data().end());
  }
  for (std::size_t i : indices) e.labels.push_back(data.items[i].sample.label);
  return e;
}

double zero_shot_auc(const AlignmentModel<float>& model, const Embeddings& test, const std::vector<ReportText>& prompts) {
  std::vector<const ReportText*> ptrs;
  for (const auto& p : prompts) ptrs.push_back(&p);
  const Tf z = model.encode_text(ptrs);
  const Matrix txt{prompts.size(), z.dim(1), std::vector<float>(z.data().begin(), z.data().end())};
  return macro_auc(cosine_scores(test.z_ctr, txt), test.labels);
}

double decoded_residual_rms(const AlignmentModel<float>& model, const Embeddings& items, double fs) {
  const std::size_t t = model.config().n_samples, n = items.z_rec.rows;
  if (n == 0) throw DataError("decoded_residual_rms: no items");
  double sum = 0;
  for (std::size_t start = 0; start < n; start += 16) {
    const std::size_t k = std::min<std::size_t>(16, n - start);
    const Tf z = Tf::constant({k, items.z_rec.cols},
                              std::vector<float>(items.z_rec.data.begin() + static_cast<std::ptrdiff_t>(start * items.z_rec.cols),
                                                 items.z_rec.data.begin() + static_cast<std::ptrdiff_t>((start + k) * items.z_rec.cols)));
    const Tf x = model.decode(z, std::vector<std::uint64_t>(k, 0), false);
    for (std::size_t s = 0; s < k; ++s) {
      const auto src = x.data().subspan(s * kNumLeads * t, kNumLeads * t);
      sum += einthoven_residual_rms(EcgRecord(fs, t, std::vector<float>(src.begin(), src.end())));
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace ecglab
