#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "big/checkpoint.hpp"
#include "big/classifier.hpp"
#include "big/eeg.hpp"
#include "big/encoding.hpp"
#include "big/iann.hpp"
#include "big/memory.hpp"
#include "big/vae.hpp"

namespace big {

enum class ClassifierInput {
  EncoderFeatures,  // last encoder conv map
  Latent,           // sampled z (mu at inference), viewed as [1 x latent_dim]
};

ClassifierInput parse_classifier_input(const std::string& name);
std::string to_string(ClassifierInput c);

// Everything needed to rebuild a model from its checkpoint.
struct PipelineConfig {
  std::size_t channels = 0;
  std::size_t samples = 0;  // per recording
  double sample_rate = 0.0;
  std::size_t n_classes = 2;
  std::vector<std::string> bands{"alpha", "beta"};
  PoissonCoderConfig coder{400.0, AmplitudeNorm::Magnitude, 25.0, 4, 0};
  double target_scale = 25.0;  // band signals are divided by this for the reconstruction target
  // Iann / Vae / Classifier sizes not listed here are derived from the above.
  std::size_t iann_heads = 8;
  std::vector<std::size_t> iann_widths;  // empty: default plan
  DriveMode iann_drive = DriveMode::Cumulative;
  double iann_init_gain = 0.1;
  double iann_attention_gain = 4.0;
  std::size_t readout_window = 8;
  double surrogate_slope = 10.0;
  double lif_tau = 0.02;
  std::size_t latent_dim = 32;
  std::vector<std::size_t> vae_channels{16, 32, 64};
  std::size_t vae_kernel = 7;
  std::size_t vae_lift_channels = 32;
  ClassifierInput classifier_input = ClassifierInput::EncoderFeatures;
  ClassifierConfig classifier;  // in_channels/length/n_classes filled in by derive
  double memory_eta = 0.01;
  double memory_gamma = 0.8;  // weight of the classifier in the blended prediction

  std::vector<BandSpec> band_specs() const;
  IannConfig iann_config() const;
  VaeConfig vae_config() const;
  ClassifierConfig classifier_config() const;
  void validate() const;

  std::string to_json() const;
  static PipelineConfig from_json(const std::string& text);
};

struct Model {
  PipelineConfig cfg;
  Iann iann;
  Vae vae;
  Classifier cls;
  HeteroMemory memory;
  std::uint64_t trained_steps = 0;  // gradient steps applied so far

  static Model create(const PipelineConfig& cfg, std::uint64_t seed);

  // Gradient-trained parameters: iann.*, vae.*, cls.*.
  std::vector<NamedTensor> parameters() const;
  // Non-gradient state: batchnorm statistics and the memory matrix.
  std::vector<NamedTensor> state() const;
};

// One recording after band filtering and Poisson coding.
struct Example {
  Tensor spikes;  // [bands x T x channels]
  Tensor target;  // [bands*channels x samples], band signals / target_scale
  int label = -1;
  std::size_t steps_per_sample = 1;
};

Example prepare_example(const PipelineConfig& cfg, const EegRecording& rec);
std::vector<Example> prepare_examples(const PipelineConfig& cfg, std::span<const EegRecording> recs);

struct ForwardResult {
  Tensor x_tilde;  // [N x bands*channels x samples]
  Encoded encoded;
  LatentCode code;  // with z
  Tensor x_hat;
  Tensor logits;  // [N x n_classes]
};

// Full forward over a minibatch. Train mode samples z and uses batch
// statistics/dropout; eval mode uses z = mu.
ForwardResult forward_batch(Model& model, std::span<const Example* const> batch, bool train, std::uint64_t seed);

// IANN output [N x bands*channels x samples] for a batch.
Tensor iann_batch(const Model& model, std::span<const Example* const> batch);
// Everything after the IANN, given its output.
ForwardResult forward_from_tilde(Model& model, const Tensor& x_tilde, bool train, std::uint64_t seed);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;  // blended
  std::vector<double> classifier;
  std::vector<double> memory;
};

Prediction predict(Model& model, const Example& ex);
Prediction predict(Model& model, const EegRecording& rec);

double evaluate_accuracy(Model& model, std::span<const Example> data);

// Decoded band stack back to EEG: sum over bands times target_scale.
EegRecording compose_recording(const PipelineConfig& cfg, const Tensor& stack, std::optional<int> label);

struct GenerationResult {
  std::vector<EegRecording> recordings;
  std::vector<std::string> warnings;
};

// Prior mode ignores `sources`; posterior mode cycles through them.
GenerationResult generate_eeg(Model& model, std::size_t n, GenerateMode mode, std::span<const Example> sources,
                              std::uint64_t seed);

// Checkpoint: all parameters and state plus the config as "meta.config"
// (the JSON text, one byte per element).
Checkpoint model_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace big
