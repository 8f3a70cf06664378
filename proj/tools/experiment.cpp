#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "big/binary_io.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"

namespace big::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string version() { return "0.1.0"; }

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

std::vector<std::string> read_paths(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const json& v = j.at(key);
  try {
    if (v.is_string()) return {v.get<std::string>()};
    return v.get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for 'data.") + key + "' (expected a path or list of paths)");
  }
}

}  // namespace

ExperimentConfig load_experiment(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": not valid JSON: " + e.what());
  }
  check_keys(j, "config", {"seed", "data", "model", "train", "fewshot"});
  ExperimentConfig c;
  read(j, "seed", c.seed, "config");
  if (seed_override) c.seed = *seed_override;

  if (!j.contains("data")) throw ConfigError("config: missing 'data'");
  const json& d = j.at("data");
  check_keys(d, "data", {"synthetic", "train", "test"});
  if (d.contains("synthetic")) {
    const json& s = d.at("synthetic");
    check_keys(s, "data.synthetic", {"classes", "train_per_class", "test_per_class", "channels", "seconds", "sample_rate"});
    SyntheticData syn;
    read(s, "classes", syn.classes, "data.synthetic");
    read(s, "train_per_class", syn.train_per_class, "data.synthetic");
    read(s, "test_per_class", syn.test_per_class, "data.synthetic");
    read(s, "channels", syn.channels, "data.synthetic");
    read(s, "seconds", syn.seconds, "data.synthetic");
    read(s, "sample_rate", syn.sample_rate, "data.synthetic");
    if (syn.classes.size() < 2) throw ConfigError("data.synthetic.classes needs at least two entries");
    for (std::size_t i = 0; i < syn.classes.size(); ++i) synth_preset(syn.classes[i], static_cast<int>(i));
    if (syn.train_per_class == 0 || syn.channels == 0 || !(syn.seconds > 0.0) || !(syn.sample_rate > 0.0)) {
      throw ConfigError("data.synthetic: sizes must be positive");
    }
    c.synthetic = syn;
  }
  c.train_paths = read_paths(d, "train");
  c.test_paths = read_paths(d, "test");
  if (c.synthetic && !c.train_paths.empty()) throw ConfigError("data: give either 'synthetic' or 'train', not both");
  if (!c.synthetic && c.train_paths.empty()) throw ConfigError("data: need 'synthetic' or 'train'");
  for (const auto& p : c.train_paths)
    if (!fs::exists(p)) throw ConfigError("data.train: no such path " + p);
  for (const auto& p : c.test_paths)
    if (!fs::exists(p)) throw ConfigError("data.test: no such path " + p);

  json model = j.contains("model") ? j.at("model") : json::object();
  if (!model.is_object()) throw ConfigError("model must be an object");
  // Recording geometry defaults to the synthetic data's.
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    if (!model.contains("channels")) model["channels"] = s.channels;
    if (!model.contains("sample_rate")) model["sample_rate"] = s.sample_rate;
    if (!model.contains("samples")) model["samples"] = static_cast<std::size_t>(std::llround(s.seconds * s.sample_rate));
    if (!model.contains("n_classes")) model["n_classes"] = s.classes.size();
  }
  c.model = PipelineConfig::from_json(model.dump());

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "alpha_elbo", "alpha_ce", "beta",
                            "train_iann"});
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "lr", c.train.adam.lr, "train");
    read(t, "beta1", c.train.adam.beta1, "train");
    read(t, "beta2", c.train.adam.beta2, "train");
    read(t, "eps", c.train.adam.eps, "train");
    read(t, "alpha_elbo", c.train.alpha_elbo, "train");
    read(t, "alpha_ce", c.train.alpha_ce, "train");
    read(t, "beta", c.train.beta, "train");
    read(t, "train_iann", c.train.train_iann, "train");
  }
  c.train.seed = derive_seed(c.seed, {2});

  if (j.contains("fewshot")) {
    const json& f = j.at("fewshot");
    check_keys(f, "fewshot", {"fractions", "seeds"});
    read(f, "fractions", c.fewshot.fractions, "fewshot");
    read(f, "seeds", c.fewshot.seeds, "fewshot");
  }
  if (c.fewshot.fractions.empty() || c.fewshot.seeds.empty()) throw ConfigError("fewshot: fractions and seeds must be non-empty");
  for (double f : c.fewshot.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fewshot: fraction " + std::to_string(f) + " outside (0, 1]");

  c.model.validate();
  c.train.validate();

  nlohmann::ordered_json canon;
  canon["seed"] = c.seed;
  canon["data"] = d;
  canon["model"] = json::parse(c.model.to_json());
  canon["train"] = j.contains("train") ? j.at("train") : json::object();
  canon["fewshot"] = {{"fractions", c.fewshot.fractions}, {"seeds", c.fewshot.seeds}};
  c.text = canon.dump();
  return c;
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".bige") found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw ConfigError("no .bige files in " + p);
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw ConfigError("no such input " + p);
    }
  }
  return out;
}

std::vector<EegRecording> load_recordings(const std::vector<std::string>& files) {
  std::vector<EegRecording> out;
  for (const auto& f : files) out.push_back(load_recording(f));
  return out;
}

Dataset load_data(const ExperimentConfig& cfg) {
  Dataset d;
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      const SynthClassSpec spec = synth_preset(s.classes[c], static_cast<int>(c));
      auto make = [&](std::uint64_t split, std::size_t i) {
        EegRecording r = synthesize_eeg(spec, s.channels, s.seconds, s.sample_rate, derive_seed(cfg.seed, {10 + split, c, i}));
        r.label = static_cast<int>(c);
        return r;
      };
      for (std::size_t i = 0; i < s.train_per_class; ++i) d.train.push_back(make(0, i));
      for (std::size_t i = 0; i < s.test_per_class; ++i) d.test.push_back(make(1, i));
    }
  } else {
    d.train = load_recordings(expand_inputs(cfg.train_paths));
    if (!cfg.test_paths.empty()) d.test = load_recordings(expand_inputs(cfg.test_paths));
  }
  for (const auto& r : d.train)
    if (!r.label) throw ConfigError("training recording without a label");
  return d;
}

Manifest::Manifest(std::string command, std::uint64_t seed) : command_(std::move(command)), seed_(seed) {}

void Manifest::input(const std::string& path) {
  inputs_.push_back({{"path", path}, {"hash", binio::file_hash(path)}});
}

void Manifest::output(const std::string& dir, const std::string& name) {
  outputs_.push_back({{"path", name}, {"hash", binio::file_hash((fs::path(dir) / name).string())}});
}

void Manifest::write(const std::string& dir) const {
  nlohmann::ordered_json j;
  j["tool"] = "big";
  j["version"] = version();
  j["command"] = command_;
  j["seed"] = seed_;
  for (auto it = extra_.begin(); it != extra_.end(); ++it) j[it.key()] = it.value();
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["created_utc"] = stamp;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir);
  out << j.dump(2) << '\n';
}

}  // namespace big::cli
