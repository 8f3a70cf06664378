#include "big/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "big/error.hpp"
#include "big/ops.hpp"
#include "big/rng.hpp"

namespace big {

using nlohmann::json;

ClassifierInput parse_classifier_input(const std::string& name) {
  if (name == "encoder_features") return ClassifierInput::EncoderFeatures;
  if (name == "latent") return ClassifierInput::Latent;
  throw ConfigError("unknown classifier input '" + name + "' (expected encoder_features or latent)");
}

std::string to_string(ClassifierInput c) {
  return c == ClassifierInput::EncoderFeatures ? "encoder_features" : "latent";
}

std::vector<BandSpec> PipelineConfig::band_specs() const {
  std::vector<BandSpec> out;
  for (const auto& b : bands) out.push_back(band_by_name(b));
  return out;
}

IannConfig PipelineConfig::iann_config() const {
  IannConfig c;
  c.channels = channels;
  c.widths = iann_widths;
  c.heads = iann_heads;
  c.lif.tau = lif_tau;
  c.lif.dt = sample_rate > 0.0 ? coder.dt(sample_rate) : c.lif.dt;
  c.drive = iann_drive;
  c.surrogate_slope = surrogate_slope;
  c.init_gain = iann_init_gain;
  c.attention_gain = iann_attention_gain;
  c.readout_window = readout_window;
  return c;
}

VaeConfig PipelineConfig::vae_config() const {
  VaeConfig c;
  c.in_channels = bands.size() * channels;
  c.length = samples;
  c.latent_dim = latent_dim;
  c.conv_channels = vae_channels;
  c.kernel = vae_kernel;
  c.lift_channels = vae_lift_channels;
  return c;
}

ClassifierConfig PipelineConfig::classifier_config() const {
  ClassifierConfig c = classifier;
  c.n_classes = n_classes;
  if (classifier_input == ClassifierInput::EncoderFeatures) {
    const VaeConfig v = vae_config();
    c.in_channels = v.conv_channels.empty() ? 0 : v.conv_channels.back();
    c.length = v.length >= 4 && v.length % 4 == 0 ? v.feature_length() : 0;
  } else {
    c.in_channels = 1;
    c.length = latent_dim;
  }
  return c;
}

void PipelineConfig::validate() const {
  if (channels == 0) throw ConfigError("model.channels must be positive");
  if (samples == 0) throw ConfigError("model.samples must be positive");
  if (!(sample_rate > 0.0)) throw ConfigError("model.sample_rate must be positive");
  if (n_classes < 2) throw ConfigError("model.n_classes must be at least 2");
  if (bands.empty()) throw ConfigError("model.bands must not be empty");
  for (const auto& b : band_specs()) {
    if (!(b.high_hz < sample_rate / 2.0)) {
      throw ConfigError("band " + b.name + " upper edge " + std::to_string(b.high_hz) + " Hz is not below Nyquist " +
                        std::to_string(sample_rate / 2.0) + " Hz");
    }
  }
  coder.validate(sample_rate);
  if (!(target_scale > 0.0)) throw ConfigError("model.target_scale must be positive");
  if (!(memory_gamma >= 0.0 && memory_gamma <= 1.0)) throw ConfigError("model.memory.gamma must lie in [0, 1]");
  if (!(memory_eta >= 0.0)) throw ConfigError("model.memory.eta must be non-negative");
  iann_config().validate();
  vae_config().validate();
  const ClassifierConfig cc = classifier_config();
  try {
    cc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (classifier fed from " + to_string(classifier_input) +
                      "; samples " + std::to_string(samples) + ")");
  }
}

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + where + "." + key + "'");
  }
}

}  // namespace

std::string PipelineConfig::to_json() const {
  json j;
  j["channels"] = channels;
  j["samples"] = samples;
  j["sample_rate"] = sample_rate;
  j["n_classes"] = n_classes;
  j["bands"] = bands;
  j["coder"] = {{"max_rate", coder.max_rate},
                {"amplitude_norm", to_string(coder.amplitude_norm)},
                {"reference_amplitude", coder.reference_amplitude},
                {"timesteps_per_sample", coder.timesteps_per_sample},
                {"seed", coder.seed}};
  j["target_scale"] = target_scale;
  j["iann"] = {{"heads", iann_heads},
               {"widths", iann_widths},
               {"drive", to_string(iann_drive)},
               {"init_gain", iann_init_gain},
               {"attention_gain", iann_attention_gain},
               {"readout_window", readout_window},
               {"surrogate_slope", surrogate_slope},
               {"tau", lif_tau}};
  j["vae"] = {{"latent_dim", latent_dim},
              {"channels", vae_channels},
              {"kernel", vae_kernel},
              {"lift_channels", vae_lift_channels}};
  j["classifier"] = {{"input", to_string(classifier_input)},
                     {"filters", classifier.filters},
                     {"kernels", classifier.kernels},
                     {"pool1", classifier.pool1},
                     {"pool2", classifier.pool2},
                     {"drop", classifier.drop}};
  j["memory"] = {{"eta", memory_eta}, {"gamma", memory_gamma}};
  return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  const std::string w = "model";
  check_keys(j, w, {"channels", "samples", "sample_rate", "n_classes", "bands", "coder", "target_scale", "iann", "vae",
                    "classifier", "memory"});
  PipelineConfig c;
  read(j, "channels", c.channels, w);
  read(j, "samples", c.samples, w);
  read(j, "sample_rate", c.sample_rate, w);
  read(j, "n_classes", c.n_classes, w);
  read(j, "bands", c.bands, w);
  read(j, "target_scale", c.target_scale, w);
  if (j.contains("coder")) {
    const json& s = j["coder"];
    check_keys(s, w + ".coder", {"max_rate", "amplitude_norm", "reference_amplitude", "timesteps_per_sample", "seed"});
    read(s, "max_rate", c.coder.max_rate, w + ".coder");
    std::string norm = to_string(c.coder.amplitude_norm);
    read(s, "amplitude_norm", norm, w + ".coder");
    c.coder.amplitude_norm = parse_amplitude_norm(norm);
    read(s, "reference_amplitude", c.coder.reference_amplitude, w + ".coder");
    read(s, "timesteps_per_sample", c.coder.timesteps_per_sample, w + ".coder");
    read(s, "seed", c.coder.seed, w + ".coder");
  }
  if (j.contains("iann")) {
    const json& s = j["iann"];
    check_keys(s, w + ".iann", {"heads", "widths", "drive", "init_gain", "attention_gain", "readout_window", "surrogate_slope", "tau"});
    read(s, "heads", c.iann_heads, w + ".iann");
    read(s, "widths", c.iann_widths, w + ".iann");
    std::string drive = to_string(c.iann_drive);
    read(s, "drive", drive, w + ".iann");
    c.iann_drive = parse_drive_mode(drive);
    read(s, "init_gain", c.iann_init_gain, w + ".iann");
    read(s, "attention_gain", c.iann_attention_gain, w + ".iann");
    read(s, "readout_window", c.readout_window, w + ".iann");
    read(s, "surrogate_slope", c.surrogate_slope, w + ".iann");
    read(s, "tau", c.lif_tau, w + ".iann");
  }
  if (j.contains("vae")) {
    const json& s = j["vae"];
    check_keys(s, w + ".vae", {"latent_dim", "channels", "kernel", "lift_channels"});
    read(s, "latent_dim", c.latent_dim, w + ".vae");
    read(s, "channels", c.vae_channels, w + ".vae");
    read(s, "kernel", c.vae_kernel, w + ".vae");
    read(s, "lift_channels", c.vae_lift_channels, w + ".vae");
  }
  if (j.contains("classifier")) {
    const json& s = j["classifier"];
    check_keys(s, w + ".classifier", {"input", "filters", "kernels", "pool1", "pool2", "drop"});
    std::string input = to_string(c.classifier_input);
    read(s, "input", input, w + ".classifier");
    c.classifier_input = parse_classifier_input(input);
    read(s, "filters", c.classifier.filters, w + ".classifier");
    read(s, "kernels", c.classifier.kernels, w + ".classifier");
    read(s, "pool1", c.classifier.pool1, w + ".classifier");
    read(s, "pool2", c.classifier.pool2, w + ".classifier");
    read(s, "drop", c.classifier.drop, w + ".classifier");
  }
  if (j.contains("memory")) {
    const json& s = j["memory"];
    check_keys(s, w + ".memory", {"eta", "gamma"});
    read(s, "eta", c.memory_eta, w + ".memory");
    read(s, "gamma", c.memory_gamma, w + ".memory");
  }
  return c;
}

Model Model::create(const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.iann = Iann(cfg.iann_config(), derive_seed(seed, {0}));
  m.vae = Vae(cfg.vae_config(), derive_seed(seed, {1}));
  m.cls = Classifier(cfg.classifier_config(), derive_seed(seed, {2}));
  m.memory = HeteroMemory(cfg.n_classes, cfg.latent_dim, cfg.memory_eta);
  return m;
}

std::vector<NamedTensor> Model::parameters() const {
  auto out = iann.named_parameters();
  for (auto& p : vae.named_parameters()) out.push_back(p);
  for (auto& p : cls.named_parameters()) out.push_back(p);
  return out;
}

std::vector<NamedTensor> Model::state() const {
  auto out = cls.buffers();
  out.push_back({"memory.m", Tensor({memory.labels, memory.dim}, memory.m)});
  out.push_back({"memory.store_count", Tensor::scalar(static_cast<double>(memory.store_count))});
  out.push_back({"meta.trained_steps", Tensor::scalar(static_cast<double>(trained_steps))});
  return out;
}

Example prepare_example(const PipelineConfig& cfg, const EegRecording& rec) {
  rec.validate();
  if (rec.channels != cfg.channels) {
    throw ConfigError("recording has " + std::to_string(rec.channels) + " channels, model expects " +
                      std::to_string(cfg.channels));
  }
  if (rec.samples != cfg.samples) {
    throw ConfigError("recording has " + std::to_string(rec.samples) + " samples, model expects " +
                      std::to_string(cfg.samples));
  }
  if (std::abs(rec.sample_rate - cfg.sample_rate) > 1e-9 * cfg.sample_rate) {
    throw ConfigError("recording sample rate " + std::to_string(rec.sample_rate) + " Hz differs from the model's " +
                      std::to_string(cfg.sample_rate) + " Hz");
  }
  const auto bands = cfg.band_specs();
  const std::size_t B = bands.size(), C = cfg.channels, L = cfg.samples;
  const std::size_t T = L * static_cast<std::size_t>(cfg.coder.timesteps_per_sample);
  std::vector<double> spikes(B * T * C), target(B * C * L);
  for (std::size_t b = 0; b < B; ++b) {
    const EegRecording f = bandpass_filter(rec, bands[b]);
    PoissonCoderConfig coder = cfg.coder;
    coder.seed = derive_seed(cfg.coder.seed, {b});
    const SpikeTrain s = poisson_encode(f, coder);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) spikes[(b * T + t) * C + c] = s.at(c, t);
    for (std::size_t i = 0; i < C * L; ++i) target[b * C * L + i] = f.data[i] / cfg.target_scale;
  }
  Example ex;
  ex.spikes = Tensor({B, T, C}, std::move(spikes));
  ex.target = Tensor({B * C, L}, std::move(target));
  ex.label = rec.label.value_or(-1);
  ex.steps_per_sample = static_cast<std::size_t>(cfg.coder.timesteps_per_sample);
  return ex;
}

std::vector<Example> prepare_examples(const PipelineConfig& cfg, std::span<const EegRecording> recs) {
  std::vector<Example> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(prepare_example(cfg, r));
  return out;
}

Tensor iann_batch(const Model& model, std::span<const Example* const> batch) {
  if (batch.empty()) throw ContractError("forward: empty batch");
  const std::size_t n = batch.size(), bc = model.cfg.bands.size() * model.cfg.channels;
  std::vector<Tensor> spikes;
  spikes.reserve(n);
  for (const Example* e : batch) spikes.push_back(e->spikes);
  const Tensor all = n == 1 ? spikes[0] : ops::concat(spikes, 0);
  const Tensor xt = model.iann.forward(all, batch[0]->steps_per_sample);
  return ops::reshape(xt, {n, bc, xt.dim(2)});
}

ForwardResult forward_from_tilde(Model& model, const Tensor& x_tilde, bool train, std::uint64_t seed) {
  const auto& cfg = model.cfg;
  ForwardResult r;
  r.x_tilde = x_tilde;
  const std::size_t n = x_tilde.dim(0);
  r.encoded = model.vae.encode(r.x_tilde);
  if (train) {
    r.code = reparameterize(r.encoded.code, derive_seed(seed, {0}));
  } else {
    r.code = r.encoded.code;
    r.code.z = r.code.mu;
  }
  r.x_hat = model.vae.decode(r.code.z);
  const Tensor cls_in = cfg.classifier_input == ClassifierInput::EncoderFeatures
                            ? r.encoded.features
                            : ops::reshape(r.code.z, {n, 1, cfg.latent_dim});
  r.logits = model.cls.logits(cls_in, train, derive_seed(seed, {1}));
  return r;
}

ForwardResult forward_batch(Model& model, std::span<const Example* const> batch, bool train, std::uint64_t seed) {
  return forward_from_tilde(model, iann_batch(model, batch), train, seed);
}

namespace {

Prediction blend(const Model& model, std::span<const double> probs, std::span<const double> mu) {
  Prediction p;
  p.classifier.assign(probs.begin(), probs.end());
  p.memory = hetero_recall(model.memory, mu);
  const double g = model.cfg.memory_gamma;
  p.probabilities.resize(p.classifier.size());
  for (std::size_t k = 0; k < p.classifier.size(); ++k) {
    p.probabilities[k] = g * p.classifier[k] + (1.0 - g) * p.memory[k];
  }
  p.label = static_cast<int>(argmax_lowest(p.probabilities));
  return p;
}

std::vector<Prediction> predict_batch(Model& model, std::span<const Example* const> batch) {
  const ForwardResult r = forward_batch(model, batch, false, 0);
  const Tensor probs = ops::softmax(r.logits);
  const std::size_t k = model.cfg.n_classes, d = model.cfg.latent_dim;
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(blend(model, probs.data().subspan(i * k, k), r.code.mu.data().subspan(i * d, d)));
  }
  return out;
}

}  // namespace

Prediction predict(Model& model, const Example& ex) {
  const Example* one[] = {&ex};
  return predict_batch(model, one)[0];
}

Prediction predict(Model& model, const EegRecording& rec) { return predict(model, prepare_example(model.cfg, rec)); }

double evaluate_accuracy(Model& model, std::span<const Example> data) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 16;
  for (std::size_t i = 0; i < data.size(); i += kChunk) {
    std::vector<const Example*> batch;
    for (std::size_t j = i; j < std::min(data.size(), i + kChunk); ++j) batch.push_back(&data[j]);
    const auto preds = predict_batch(model, batch);
    for (std::size_t j = 0; j < preds.size(); ++j) correct += preds[j].label == batch[j]->label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

EegRecording compose_recording(const PipelineConfig& cfg, const Tensor& stack, std::optional<int> label) {
  const std::size_t B = cfg.bands.size(), C = cfg.channels, L = cfg.samples;
  if (stack.numel() != B * C * L) {
    throw DimensionError("compose: band stack " + shape_str(stack.shape()) + " does not hold " + std::to_string(B) +
                         " bands of " + std::to_string(C) + "x" + std::to_string(L));
  }
  EegRecording rec = make_recording(C, L, cfg.sample_rate);
  const auto v = stack.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C * L; ++i) rec.data[i] += v[b * C * L + i] * cfg.target_scale;
  rec.label = label;
  return rec;
}

GenerationResult generate_eeg(Model& model, std::size_t n, GenerateMode mode, std::span<const Example> sources,
                              std::uint64_t seed) {
  GenerationResult out;
  if (model.trained_steps == 0) out.warnings.push_back("model parameters are untrained (no gradient steps recorded)");
  std::vector<Tensor> inputs;
  std::vector<std::optional<int>> labels;
  if (mode == GenerateMode::Posterior) {
    for (const auto& ex : sources) {
      const Tensor xt = model.iann.forward(ex.spikes, ex.steps_per_sample);
      inputs.push_back(ops::reshape(xt, {1, model.cfg.bands.size() * model.cfg.channels, xt.dim(2)}));
      labels.push_back(ex.label >= 0 ? std::optional<int>(ex.label) : std::nullopt);
    }
  }
  for (auto& g : generate_samples(model.vae, n, mode, inputs, labels, seed)) {
    out.recordings.push_back(compose_recording(model.cfg, g.values, g.label));
  }
  return out;
}

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint ck;
  for (const auto& p : model.parameters()) ck.tensors.push_back({p.name, p.tensor.detach()});
  for (const auto& s : model.state()) ck.tensors.push_back(s);
  const std::string text = model.cfg.to_json();
  std::vector<double> bytes(text.begin(), text.end());
  const std::size_t n = bytes.size();
  ck.tensors.push_back({"meta.config", Tensor({n}, std::move(bytes))});
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  const Tensor& meta = ckpt.get("meta.config");
  std::string text;
  for (double v : meta.data()) {
    if (!(v >= 0.0 && v < 256.0) || v != std::floor(v)) throw ParseError("checkpoint: corrupt meta.config");
    text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  PipelineConfig cfg;
  try {
    cfg = PipelineConfig::from_json(text);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: stored config unreadable: ") + e.what());
  }
  Model m = Model::create(cfg, 0);
  assign_from_checkpoint(m.iann.named_parameters(), ckpt);
  assign_from_checkpoint(m.vae.named_parameters(), ckpt);
  m.cls.load_parameters(ckpt);
  const Tensor& mem = ckpt.get("memory.m");
  if (mem.numel() != m.memory.m.size()) throw ParseError("checkpoint: memory.m has the wrong size");
  m.memory.m.assign(mem.data().begin(), mem.data().end());
  m.memory.store_count = static_cast<std::uint64_t>(ckpt.get("memory.store_count").item());
  m.trained_steps = static_cast<std::uint64_t>(ckpt.get("meta.trained_steps").item());
  return m;
}

}  // namespace big
