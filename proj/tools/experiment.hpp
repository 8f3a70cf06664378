#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "big/eeg.hpp"
#include "big/pipeline.hpp"
#include "big/training.hpp"

namespace big::cli {

struct SyntheticData {
  std::vector<std::string> classes{"alpha", "beta"};  // label = position
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t channels = 8;
  double seconds = 2.0;
  double sample_rate = 128.0;
};

struct FewShotSettings {
  std::vector<double> fractions{0.2, 1.0};
  std::vector<std::uint64_t> seeds{0};
};

// One declarative run description. Everything is parsed and validated by
// `load_experiment` before any compute starts.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<SyntheticData> synthetic;
  std::vector<std::string> train_paths, test_paths;  // BIGE files or directories
  PipelineConfig model;
  TrainConfig train;
  FewShotSettings fewshot;
  std::string text;  // canonical JSON of the parsed config, hashed into the manifest
};

ExperimentConfig load_experiment(const std::string& path, std::optional<std::uint64_t> seed_override);

struct Dataset {
  std::vector<EegRecording> train, test;
};

Dataset load_data(const ExperimentConfig& cfg);

// Files in `paths`, with directories expanded to their *.bige entries in name
// order.
std::vector<std::string> expand_inputs(const std::vector<std::string>& paths);
std::vector<EegRecording> load_recordings(const std::vector<std::string>& files);

// Run record. Only `created_utc` varies between identical reruns.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed);
  void set(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }
  void input(const std::string& path);
  void output(const std::string& dir, const std::string& name);
  void write(const std::string& dir) const;

 private:
  std::string command_;
  std::uint64_t seed_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::array();
};

std::string version();

}  // namespace big::cli
