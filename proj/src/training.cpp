#include "big/training.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "big/error.hpp"
#include "big/ops.hpp"
#include "big/rng.hpp"

namespace big {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(alpha_elbo >= 0.0) || !(alpha_ce >= 0.0) || !(beta >= 0.0)) {
    throw ConfigError("train: loss weights must be non-negative");
  }
  if (!(alpha_elbo > 0.0 || alpha_ce > 0.0)) throw ConfigError("train: at least one loss weight must be positive");
  if (!(augmentation_fraction >= 0.0 && augmentation_fraction < 1.0)) {
    throw ConfigError("train.augmentation_fraction must lie in [0, 1)");
  }
  Adam({}, adam);  // validates the optimizer settings
}

double surrogate_spike_grad(double x, double u_th, double k) {
  if (!(k > 0.0)) throw ConfigError("surrogate slope must be positive");
  return ops::sigmoid_surrogate(x, u_th, k);
}

std::string EpochMetrics::to_jsonl() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["mse"] = mse;
  j["kl"] = kl;
  j["ce"] = ce;
  j["acc"] = acc;
  return j.dump();
}

void check_finite(std::span<const NamedTensor> named) {
  for (const auto& nt : named) {
    const auto d = nt.tensor.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!std::isfinite(d[i])) {
        throw NumericError("non-finite value in '" + nt.name + "' at flat index " + std::to_string(i) + " (" +
                           std::to_string(d[i]) + ")");
      }
    }
  }
}

namespace {

std::vector<NamedTensor> trainable(const Model& m, bool with_iann) {
  std::vector<NamedTensor> out;
  for (auto& p : m.parameters()) {
    if (!with_iann && p.name.rfind("iann.", 0) == 0) continue;
    out.push_back(p);
  }
  return out;
}

}  // namespace

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), adam_(trainable(model, cfg_.train_iann), cfg_.adam) {
  cfg_.validate();
}

EpochMetrics Trainer::train_epoch(std::span<const Example> data) {
  if (data.empty()) throw ContractError("train_epoch: empty dataset");
  for (const auto& ex : data) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= model_.cfg.n_classes) {
      throw ConfigError("train_epoch: example label " + std::to_string(ex.label) + " outside [0, " +
                        std::to_string(model_.cfg.n_classes) + ")");
    }
  }
  if (!cfg_.train_iann && (cache_owner_ != data.data() || cache_.size() != data.size())) {
    cache_.clear();
    for (const auto& ex : data) {
      const Example* one[] = {&ex};
      cache_.push_back(iann_batch(model_, one));
    }
    cache_owner_ = data.data();
  }

  const std::uint64_t e = epoch_;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle(derive_seed(cfg_.seed, {e}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  EpochMetrics m;
  std::size_t seen = 0, correct = 0;
  const std::size_t k = model_.cfg.n_classes, dim = model_.cfg.latent_dim;
  for (std::size_t start = 0, b = 0; start < order.size(); start += cfg_.batch_size, ++b) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    std::vector<const Example*> batch;
    std::vector<int> labels;
    std::vector<Tensor> targets, cached;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&data[order[i]]);
      labels.push_back(data[order[i]].label);
      targets.push_back(data[order[i]].target);
      if (!cfg_.train_iann) cached.push_back(cache_[order[i]]);
    }
    const std::size_t n = batch.size();
    const std::uint64_t bseed = derive_seed(cfg_.seed, {e, b});

    adam_.zero_grad();
    Tape tape;
    ForwardResult r;
    Tensor recon, kl, ce, loss;
    {
      TapeScope scope(tape);
      const Tensor xt = cfg_.train_iann ? iann_batch(model_, batch) : ops::concat(cached, 0);
      r = forward_from_tilde(model_, xt, true, bseed);
      Tensor target = ops::concat(targets, 0);
      target = ops::reshape(target, r.x_hat.shape());
      const ElboTerms elbo = elbo_loss(target, r.x_hat, r.code, cfg_.beta);
      recon = elbo.recon;
      kl = elbo.kl;
      ce = ops::cross_entropy_with_softmax(r.logits, labels);
      // Terms with zero weight stay out of the graph entirely.
      std::vector<Tensor> terms;
      if (cfg_.alpha_elbo > 0.0) terms.push_back(ops::scale(elbo.loss, cfg_.alpha_elbo));
      if (cfg_.alpha_ce > 0.0) terms.push_back(ops::scale(ce, cfg_.alpha_ce));
      loss = terms.size() == 1 ? terms[0] : ops::add(terms[0], terms[1]);
    }
    const std::vector<NamedTensor> outputs{{"x_tilde", r.x_tilde}, {"mu", r.code.mu},        {"log_var", r.code.log_var},
                                           {"z", r.code.z},        {"x_hat", r.x_hat},       {"logits", r.logits},
                                           {"mse", recon},         {"kl", kl},               {"ce", ce},
                                           {"loss", loss}};
    check_finite(outputs);
    backward(tape, loss);
    std::vector<NamedTensor> grads;
    for (const auto& p : adam_.params()) {
      if (p.tensor.has_grad()) {
        const auto g = p.tensor.grad();
        grads.push_back({"grad(" + p.name + ")", Tensor(p.tensor.shape(), std::vector<double>(g.begin(), g.end()))});
      }
    }
    check_finite(grads);
    adam_.step();
    ++model_.trained_steps;

    // Local learning channel: memory update from the batch's latent draws.
    const auto z = r.code.z.data();
    for (std::size_t i = 0; i < n; ++i) hetero_store(model_.memory, z.subspan(i * dim, dim), labels[i]);

    const auto lg = r.logits.data();
    for (std::size_t i = 0; i < n; ++i) {
      correct += static_cast<int>(argmax_lowest(lg.subspan(i * k, k))) == labels[i];
    }
    const double w = static_cast<double>(n);
    m.loss += w * loss.item();
    m.mse += w * recon.item();
    m.kl += w * kl.item();
    m.ce += w * ce.item();
    seen += n;
  }
  adam_.zero_grad();
  ++epoch_;
  m.epoch = epoch_;
  m.loss /= seen;
  m.mse /= seen;
  m.kl /= seen;
  m.ce /= seen;
  m.acc = static_cast<double>(correct) / static_cast<double>(seen);
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck = model_checkpoint(model_);
  TrainingState st;
  st.epoch = epoch_;
  st.step = adam_.steps();
  st.seed = cfg_.seed;
  st.moments = adam_.moments();
  ck.training = std::move(st);
  return ck;
}

void Trainer::resume(const Checkpoint& ckpt) {
  if (!ckpt.training) throw ParseError("checkpoint has no training state to resume from");
  const Model stored = model_from_checkpoint(ckpt);
  if (stored.cfg.to_json() != model_.cfg.to_json()) {
    throw ConfigError("checkpoint model config differs from the current model config");
  }
  if (ckpt.training->seed != cfg_.seed) {
    throw ConfigError("checkpoint was trained with seed " + std::to_string(ckpt.training->seed) + ", config has " +
                      std::to_string(cfg_.seed));
  }
  assign_from_checkpoint(model_.parameters(), ckpt);
  model_.cls.load_parameters(ckpt);
  model_.memory = stored.memory;
  model_.trained_steps = stored.trained_steps;
  adam_.load_moments(ckpt.training->moments, ckpt.training->step);
  epoch_ = ckpt.training->epoch;
  cache_.clear();
  cache_owner_ = nullptr;
}

std::string FewShotResult::to_csv() const {
  std::ostringstream os;
  os << "fraction,augmented,accuracy,original,generated\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.fraction << ',' << (r.augmented ? 1 : 0) << ',' << r.accuracy << ',' << r.original << ',' << r.generated
       << '\n';
  }
  return os.str();
}

namespace {

double train_and_score(const PipelineConfig& model_cfg, const TrainConfig& train_cfg, std::span<const Example> train,
                       std::span<const Example> test, Model* keep) {
  Model m = Model::create(model_cfg, derive_seed(train_cfg.seed, {1}));
  Trainer t(m, train_cfg);
  for (std::size_t e = 0; e < train_cfg.epochs; ++e) t.train_epoch(train);
  const double acc = evaluate_accuracy(m, test);
  if (keep) *keep = std::move(m);
  return acc;
}

}  // namespace

FewShotResult few_shot_protocol(std::span<const EegRecording> train, std::span<const EegRecording> test,
                                std::span<const double> fractions, const PipelineConfig& model_cfg,
                                const TrainConfig& train_cfg) {
  if (train.empty() || test.empty()) throw ConfigError("few-shot: need non-empty train and test splits");
  model_cfg.validate();
  train_cfg.validate();
  const auto train_ex = prepare_examples(model_cfg, train);
  const auto test_ex = prepare_examples(model_cfg, test);

  // Per-class index lists in a seeded order.
  std::vector<std::vector<std::size_t>> by_class(model_cfg.n_classes);
  for (std::size_t i = 0; i < train_ex.size(); ++i) {
    const int y = train_ex[i].label;
    if (y < 0 || static_cast<std::size_t>(y) >= model_cfg.n_classes) {
      throw ConfigError("few-shot: training recording " + std::to_string(i) + " has no valid label");
    }
    by_class[y].push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng rng(derive_seed(train_cfg.seed, {100, c}));
    auto& v = by_class[c];
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  }

  FewShotResult out;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    const double f = fractions[fi];
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("few-shot: fraction " + std::to_string(f) + " outside (0, 1]");
    std::vector<Example> subset;
    bool skip = false;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const auto take = static_cast<std::size_t>(std::floor(f * by_class[c].size() + 1e-9));
      if (take < 1) {
        skip = true;
        out.notices.push_back("fraction " + std::to_string(f) + " leaves class " + std::to_string(c) +
                              " without samples; rows skipped");
        break;
      }
      for (std::size_t i = 0; i < take; ++i) subset.push_back(train_ex[by_class[c][i]]);
    }
    if (skip) continue;

    Model generator;
    const double plain = train_and_score(model_cfg, train_cfg, subset, test_ex, &generator);
    out.rows.push_back({f, false, plain, subset.size(), 0});

    const std::size_t missing = train_ex.size() - subset.size();
    if (missing == 0) {
      // Nothing to generate: the augmented run would repeat the plain one.
      out.rows.push_back({f, true, plain, subset.size(), 0});
      continue;
    }
    std::vector<Example> extended = subset;
    {
      const auto gen = generate_eeg(generator, missing, GenerateMode::Posterior, subset,
                                    derive_seed(train_cfg.seed, {200, fi}));
      for (const auto& rec : gen.recordings) extended.push_back(prepare_example(model_cfg, rec));
    }
    const double aug = train_and_score(model_cfg, train_cfg, extended, test_ex, nullptr);
    out.rows.push_back({f, true, aug, subset.size(), missing});
  }
  return out;
}

}  // namespace big
