#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "big/optim.hpp"
#include "big/pipeline.hpp"

namespace big {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  AdamConfig adam;
  double alpha_elbo = 1.0;
  double alpha_ce = 1.0;
  double beta = 1.0;  // KL weight inside the ELBO term
  std::uint64_t seed = 0;
  double augmentation_fraction = 0.0;  // share of generated samples (few-shot runs)
  bool train_iann = true;              // false: the IANN is frozen and its output cached

  void validate() const;
};

// Sigmoid pseudo-derivative k e^{-k(x-u)} / (1 + e^{-k(x-u)})^2.
double surrogate_spike_grad(double x, double u_th, double k);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double mse = 0.0;
  double kl = 0.0;
  double ce = 0.0;
  double acc = 0.0;  // training-batch accuracy of the classifier

  std::string to_jsonl() const;  // {"epoch","loss","mse","kl","ce","acc"}
};

// Owns the optimizer and loop position for one model. Epoch e shuffles with
// derive_seed(seed, {e}); batch k of epoch e samples with
// derive_seed(seed, {e, k}). Everything a resumed run needs is in the
// checkpoint.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  EpochMetrics train_epoch(std::span<const Example> data);
  std::size_t epoch() const { return epoch_; }
  const TrainConfig& config() const { return cfg_; }
  Adam& optimizer() { return adam_; }

  Checkpoint checkpoint() const;
  // Restores model, optimizer moments and loop position from `ckpt`.
  void resume(const Checkpoint& ckpt);

 private:
  Model& model_;
  TrainConfig cfg_;
  Adam adam_;
  std::size_t epoch_ = 0;
  std::vector<Tensor> cache_;  // frozen-IANN outputs, by example index
  const Example* cache_owner_ = nullptr;
};

// Throws NumericError naming the first non-finite entry among `named`.
void check_finite(std::span<const NamedTensor> named);

struct FewShotRow {
  double fraction = 0.0;
  bool augmented = false;
  double accuracy = 0.0;
  std::size_t original = 0;
  std::size_t generated = 0;
};

struct FewShotResult {
  std::vector<FewShotRow> rows;
  std::vector<std::string> notices;  // skipped fractions

  std::string to_csv() const;  // fraction,augmented,accuracy,original,generated
};

// For each fraction: a stratified subset of `train` trains a model (row
// augmented=false); that model's decoder then generates posterior samples of
// the subset until the original training size is restored, and a fresh model
// trained on the union gives the augmented row. Both are scored on `test`.
FewShotResult few_shot_protocol(std::span<const EegRecording> train, std::span<const EegRecording> test,
                                std::span<const double> fractions, const PipelineConfig& model_cfg,
                                const TrainConfig& train_cfg);

}  // namespace big
