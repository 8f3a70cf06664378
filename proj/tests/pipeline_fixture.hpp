#pragma once

// Small end-to-end configuration shared by the pipeline and training tests.

#include <vector>

#include "big/eeg.hpp"
#include "big/pipeline.hpp"
#include "big/rng.hpp"

namespace big::testing {

inline PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.channels = 4;
  c.samples = 64;
  c.sample_rate = 64.0;
  c.coder.max_rate = 200.0;
  c.iann_widths = {16, 8, 4};
  c.iann_heads = 2;
  c.iann_init_gain = 0.3;
  c.iann_attention_gain = 4.0;
  c.latent_dim = 4;
  c.vae_channels = {4, 4, 4};
  c.vae_kernel = 3;
  c.vae_lift_channels = 4;
  c.classifier.filters = {2, 2, 2};
  c.classifier.kernels = {4, 3, 2};
  c.classifier.pool1 = 2;
  c.classifier.pool2 = 2;
  return c;
}

// n recordings per class: alpha-dominant (label 0) and beta-dominant (label 1).
inline std::vector<EegRecording> small_dataset(const PipelineConfig& c, std::size_t per_class, std::uint64_t seed) {
  std::vector<EegRecording> out;
  const double seconds = static_cast<double>(c.samples) / c.sample_rate;
  for (int label = 0; label < 2; ++label) {
    const SynthClassSpec spec = label == 0 ? synth_alpha_dominant(0) : synth_beta_dominant(1);
    for (std::size_t i = 0; i < per_class; ++i) {
      EegRecording r = synthesize_eeg(spec, c.channels, seconds, c.sample_rate,
                                      derive_seed(seed, {static_cast<std::uint64_t>(label), i}));
      r.label = label;
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace big::testing
