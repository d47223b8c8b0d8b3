#include "ulmv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "ulmv/dataset_io.hpp"
#include "ulmv/metrics.hpp"

namespace ulmv {

namespace {

// splitmix64-style stream derivation so every (seed, tag, epoch, batch)
// combination owns an independent deterministic stream.
uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr uint64_t kTagInit = 0x1;
constexpr uint64_t kTagOrder = 0x2;
constexpr uint64_t kTagDropout = 0x3;
constexpr uint64_t kTagAugment = 0x4;

}  // namespace

std::vector<MaskGrid> apply_view_dropout(const std::vector<MaskGrid>& available, double p,
                                         std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("apply_view_dropout: p must be in [0,1)");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<MaskGrid> out = available;
  for (MaskGrid& grid : out)
    for (auto& row : grid)
      for (uint8_t& slot : row)
        if (slot) slot = unif(rng) < p ? 0 : 1;
  return out;
}

Trainer::Trainer(const Dataset& ds, TrainConfig cfg) : ds_(ds), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.view_subset) {
    if (cfg_.view_subset->empty()) throw ConfigError("train: view subset must be nonempty");
    for (int a : *cfg_.view_subset)
      if (a < 0 || a >= ds.catalog.n_views()) throw ConfigError("train: view subset index out of range");
  }
  cfg_.model.class_count = ds.class_count;
  cfg_.model.max_timepoints = std::max<int64_t>(cfg_.model.max_timepoints, ds.timepoints);
  model_ = std::make_unique<UnifiedModel<float>>(ds.catalog, cfg_.model, mix(cfg_.seed, kTagInit));

  opt_ = std::make_unique<AdamW<float>>(model_->store().all(), cfg_.adamw);
  for (const Parameter<float>* p : opt_->params()) {
    double lr = cfg_.lr.default_max_lr;
    for (const auto& [view, view_lr] : cfg_.lr.per_view_encoder)
      if (p->name.rfind("enc." + view + ".", 0) == 0) lr = view_lr;
    max_lr_.push_back(lr);
  }

  train_idx_ = ds.split_indices("train");
  if (train_idx_.empty()) throw ConfigError("train: empty train split");
  std::vector<int> labels;
  for (int i : train_idx_)
    for (const TimepointRecord& rec : ds.patients[static_cast<size_t>(i)].steps)
      if (rec.label) labels.push_back(*rec.label);
  class_weights_ = class_weights(labels, ds.class_count);

  steps_per_epoch_ = (static_cast<int64_t>(train_idx_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = steps_per_epoch_ * cfg_.epochs;
}

MaskGrid Trainer::effective_availability(int patient_index) const {
  const PatientSeries& p = ds_.patients[static_cast<size_t>(patient_index)];
  MaskGrid grid(p.steps.size());
  for (size_t t = 0; t < p.steps.size(); ++t) {
    grid[t].resize(static_cast<size_t>(ds_.catalog.n_views()), 0);
    for (int a = 0; a < ds_.catalog.n_views(); ++a) {
      bool allowed = !cfg_.view_subset ||
                     std::find(cfg_.view_subset->begin(), cfg_.view_subset->end(), a) != cfg_.view_subset->end();
      grid[t][static_cast<size_t>(a)] = (allowed && p.steps[t].available(a)) ? 1 : 0;
    }
  }
  return grid;
}

std::vector<int> Trainer::epoch_order(int64_t epoch) const {
  std::vector<int> order = train_idx_;
  std::mt19937_64 rng(mix(cfg_.seed, mix(kTagOrder, static_cast<uint64_t>(epoch))));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double Trainer::batch_step(const std::vector<int>& patients, const std::vector<MaskGrid>& masks,
                           std::mt19937_64& aug_rng) {
  Tape<float> tape;
  std::vector<Tape<float>::Id> per_patient_logits;
  LossBatch<float> batch;
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (size_t b = 0; b < patients.size(); ++b) {
    const PatientSeries& p = ds_.patients[static_cast<size_t>(patients[b])];
    SeriesInputs<float> in;
    in.obs.resize(p.steps.size());
    in.mask = masks[b];
    for (size_t t = 0; t < p.steps.size(); ++t) {
      in.obs[t].resize(static_cast<size_t>(ds_.catalog.n_views()));
      for (int a = 0; a < ds_.catalog.n_views(); ++a) {
        if (!masks[b][t][static_cast<size_t>(a)]) continue;
        Tensor<float> obs = *p.steps[t].observations[static_cast<size_t>(a)];
        if (cfg_.augment_noise_std > 0 && ds_.catalog.views[static_cast<size_t>(a)].kind == ViewKind::image)
          for (float& v : obs.data) v += static_cast<float>(cfg_.augment_noise_std * gauss(aug_rng));
        in.obs[t][static_cast<size_t>(a)] = std::move(obs);
      }
      batch.push(p.steps[t].label, class_weights_);
    }
    per_patient_logits.push_back(model_->series_logits(tape, in));
  }

  auto probs = tape.softmax_last(tape.concat_rows(per_patient_logits));
  auto loss = weighted_masked_ce(tape, probs, batch);
  const double loss_val = tape.val(loss)[0];
  if (!std::isfinite(loss_val)) throw NumericFault("train: non-finite loss");

  model_->store().zero_grad();
  tape.backward(loss);
  const double lr_scale = one_cycle_lr(global_step_, 1.0, total_steps_, cfg_.schedule);
  opt_->step([&](size_t i) { return static_cast<float>(max_lr_[i] * lr_scale); });
  return loss_val;
}

void Trainer::one_step(int64_t step) {
  const int64_t epoch = step / steps_per_epoch_;
  const int64_t batch_idx = step % steps_per_epoch_;
  const std::vector<int> order = epoch_order(epoch);

  const size_t lo = static_cast<size_t>(batch_idx) * static_cast<size_t>(cfg_.batch_size);
  const size_t hi = std::min(order.size(), lo + static_cast<size_t>(cfg_.batch_size));
  std::vector<int> patients(order.begin() + static_cast<std::ptrdiff_t>(lo),
                            order.begin() + static_cast<std::ptrdiff_t>(hi));

  std::vector<MaskGrid> masks;
  masks.reserve(patients.size());
  for (int pi : patients) masks.push_back(effective_availability(pi));
  if (!cfg_.disable_view_dropout && cfg_.view_dropout > 0) {
    std::mt19937_64 drop_rng(mix(cfg_.seed, mix(kTagDropout, static_cast<uint64_t>(step))));
    masks = apply_view_dropout(masks, cfg_.view_dropout, drop_rng);
  }
  std::mt19937_64 aug_rng(mix(cfg_.seed, mix(kTagAugment, static_cast<uint64_t>(step))));
  last_loss_ = batch_step(patients, masks, aug_rng);
  ++global_step_;
}

void Trainer::train_steps(int n) {
  for (int i = 0; i < n && global_step_ < total_steps_; ++i) one_step(global_step_);
}

double Trainer::validation_metric() {
  const std::vector<int> val_idx = ds_.split_indices("val");
  EvalOptions opt;
  opt.view_subset = cfg_.view_subset;
  try {
    const auto preds = predict_final(*model_, ds_, val_idx, opt);
    const MetricTriple m = compute_metrics(preds, ds_.class_count);
    return cfg_.selection_metric == "roc" ? m.roc : m.ap;
  } catch (const ConfigError& e) {
    std::cerr << "[ulmv] validation metric unavailable: " << e.what() << "\n";
    return 0.0;
  }
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.header["version"] = kCheckpointVersion;
  ckpt.header["model"] = model_config_to_json(cfg_.model);
  ckpt.header["catalog_fingerprint"] = catalog_fingerprint(ds_.catalog, ds_.timepoints, ds_.class_count);
  ckpt.header["seed"] = cfg_.seed;
  ckpt.header["step"] = global_step_;
  ckpt.header["adam_step"] = opt_->step_count();
  ckpt.header["total_steps"] = total_steps_;
  ckpt.header["view_dropout_used"] = !cfg_.disable_view_dropout && cfg_.view_dropout > 0;
  if (cfg_.view_subset) {
    nlohmann::ordered_json subset = nlohmann::ordered_json::array();
    for (int a : *cfg_.view_subset) subset.push_back(ds_.catalog.views[static_cast<size_t>(a)].name);
    ckpt.header["view_subset"] = subset;
  } else {
    ckpt.header["view_subset"] = nullptr;
  }
  ckpt.header["metrics"] = nlohmann::ordered_json::object();

  const auto params = model_->store().all();
  for (const Parameter<float>* p : params) ckpt.tensors.emplace_back(p->name, p->value);
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + params[i]->name, const_cast<AdamW<float>&>(*opt_).moment1(i));
    ckpt.tensors.emplace_back("adam.v." + params[i]->name, const_cast<AdamW<float>&>(*opt_).moment2(i));
  }
  ckpt.seal();
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  const std::string fp = catalog_fingerprint(ds_.catalog, ds_.timepoints, ds_.class_count);
  if (ckpt.header.at("catalog_fingerprint").get<std::string>() != fp)
    throw ConfigError("restore: checkpoint was trained against a different catalog");
  const auto params = model_->store().all();
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor<float>* v = ckpt.find(params[i]->name);
    const Tensor<float>* m = ckpt.find("adam.m." + params[i]->name);
    const Tensor<float>* mv = ckpt.find("adam.v." + params[i]->name);
    if (!v || !m || !mv) throw DataFormatError("restore: checkpoint is missing tensor " + params[i]->name);
    if (v->shape != params[i]->value.shape)
      throw DataFormatError("restore: shape mismatch for " + params[i]->name);
    params[i]->value = *v;
    opt_->moment1(i) = *m;
    opt_->moment2(i) = *mv;
  }
  opt_->set_step_count(ckpt.header.at("adam_step").get<int64_t>());
  global_step_ = ckpt.header.at("step").get<int64_t>();
}

TrainResult Trainer::run() {
  TrainResult result;
  if (cfg_.epochs == 0) {
    result.best = snapshot();
    result.best_epoch = 0;
    return result;
  }
  bool have_best = false;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    double loss_sum = 0;
    int64_t steps = 0;
    try {
      for (int64_t b = 0; b < steps_per_epoch_; ++b) {
        one_step(global_step_);
        loss_sum += last_loss_;
        ++steps;
      }
    } catch (const NumericFault& e) {
      std::cerr << "[ulmv] training diverged: " << e.what() << "\n";
      result.diverged = true;
      if (!have_best) {
        result.best = snapshot();
        result.best_epoch = epoch;
      }
      return result;
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = one_cycle_lr(std::min(global_step_, total_steps_), 1.0, total_steps_, cfg_.schedule) *
             cfg_.lr.default_max_lr;
    log.train_loss = loss_sum / static_cast<double>(steps);
    log.val_metric = validation_metric();
    result.log.push_back(log);
    if (!have_best || log.val_metric > result.best_val) {
      result.best = snapshot();
      result.best_epoch = epoch;
      result.best_val = log.val_metric;
      have_best = true;
    }
  }
  // Embed the selection outcome in the winning checkpoint header.
  result.best.header["metrics"] = {{"best_epoch", result.best_epoch},
                                   {"val_" + cfg_.selection_metric, result.best_val}};
  result.best.seal();
  return result;
}

TrainResult train_view_specific(const Dataset& ds, const std::vector<int>& view_subset,
                                TrainConfig cfg) {
  if (view_subset.empty()) throw ConfigError("train_view_specific: subset must be nonempty");
  cfg.view_subset = view_subset;
  cfg.disable_view_dropout = true;
  Trainer trainer(ds, std::move(cfg));
  return trainer.run();
}

}  // namespace ulmv
