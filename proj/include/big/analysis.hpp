#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "big/classifier.hpp"
#include "big/eeg.hpp"
#include "big/encoding.hpp"
#include "big/tensor.hpp"

namespace big {

// ---- firing rates -----------------------------------------------------------

struct FiringReport {
  std::vector<double> neuron_rates;   // Hz
  std::vector<double> channel_rates;  // mean over each channel's neurons, Hz
  std::vector<std::pair<std::size_t, std::size_t>> raster;  // (neuron, step), neuron-major
  double duration = 0.0;                                     // seconds
};

// `channels` = 0 means one neuron per channel; otherwise neurons split into
// that many equal consecutive groups.
FiringReport firing_rates(const SpikeTrain& train, std::size_t channels = 0);

// ---- phase locking ------------------------------------------------------------

struct PlvMatrix {
  std::size_t channels = 0;
  std::vector<double> values;  // row-major channels x channels
  BandSpec band;
  std::pair<double, double> window{0.0, 0.0};  // seconds, [start, end)
  std::vector<std::string> labels;

  double at(std::size_t a, std::size_t b) const { return values[a * channels + b]; }
  void validate() const;  // symmetry, unit diagonal, range
};

// Band-filters every channel over the whole recording, then measures phase
// locking over `window` (whole recording when absent).
PlvMatrix plv_matrix(const EegRecording& rec, const BandSpec& band,
                     std::optional<std::pair<double, double>> window = std::nullopt);

// Consecutive non-overlapping windows of `seconds` each (a trailing partial
// window is dropped).
std::vector<PlvMatrix> windowed_plv(const EegRecording& rec, const BandSpec& band, double seconds);

struct PlvComparison {
  double correlation = 0.0;  // Pearson over the upper triangles
  double mad = 0.0;          // mean absolute difference over the upper triangles
  double overlap = 0.0;      // shared fraction of the top-k edges
  std::size_t k = 0;
};

PlvComparison compare_plv(const PlvMatrix& a, const PlvMatrix& b, std::size_t top_k = 10);

// ---- montage projection -------------------------------------------------------

using Montage = std::map<std::string, std::pair<double, double>>;  // unit-disc x, y

// 10-20 positions (azimuthal projection, nose at +y).
const Montage& standard_1020_montage();
// Labels spaced evenly on a circle of radius 0.8, for recordings without
// standard names.
Montage ring_montage(std::span<const std::string> labels);
Montage load_montage_csv(const std::string& path);  // label,x,y rows with a header

struct Edge {
  std::string a, b;
  double weight = 0.0;
};

struct Topography {
  static constexpr std::size_t kGrid = 64;
  std::vector<double> grid;  // kGrid x kGrid, row 0 at y = +1; NaN outside the disc
  std::vector<Edge> edges;
  double threshold = 0.0;

  // Grid cell whose center is closest to (x, y).
  static std::pair<std::size_t, std::size_t> cell_of(double x, double y);
  static std::pair<double, double> center_of(std::size_t row, std::size_t col);
};

// Inverse-distance (power 2) interpolation of node values onto the grid.
// Throws ConfigError naming every channel the montage lacks.
Topography montage_project(std::span<const double> node_values, std::span<const std::string> labels,
                           const Montage& montage);
// Node value = mean PLV to the other channels; edges are upper-triangle
// entries strictly above the given percentile of those entries.
Topography montage_project(const PlvMatrix& plv, const Montage& montage, double percentile = 95.0);

// Linear-interpolation percentile (0..100) of `values`.
double percentile(std::vector<double> values, double p);

// ---- ROC ----------------------------------------------------------------------

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
};

// Binary: label 1 is the positive class, `scores` its probability.
RocCurve roc_curve(std::span<const int> labels, std::span<const double> scores);

struct MulticlassRoc {
  std::vector<RocCurve> per_class;  // one-vs-rest
  double macro_auc = 0.0;
};

// probabilities: row-major [n x classes].
MulticlassRoc roc_one_vs_rest(std::span<const int> labels, std::span<const double> probabilities,
                              std::size_t classes);

// ---- cost model ---------------------------------------------------------------

enum class LayerKind { Conv, ConvTranspose, Dense, BatchNorm, Activation, AvgPool, Softmax, Spiking, Passthrough };

std::string to_string(LayerKind k);

// Dimensions are optional so a missing one can be reported by name.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Passthrough;
  std::optional<std::size_t> in_channels, out_channels, kernel, in_length, out_length, groups, window, units;
  std::optional<double> density;  // spiking layers: measured fraction of active inputs
};

struct Architecture {
  std::string name;
  std::size_t batch = 1;
  std::vector<LayerSpec> layers;
};

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::Passthrough;
  OpCounts counts;
};

struct CostReport {
  std::vector<LayerCost> layers;
  OpCounts total;
};

// conv: C_out (C_in/groups) K L_out MACs; transposed conv: C_in C_out K L_in;
// dense: in out; batchnorm, activation, softmax and pooling go to `other`;
// spiking layers add round(density in out L) accumulates.
CostReport flop_estimate(const Architecture& arch);

Architecture classifier_architecture(const ClassifierConfig& cfg, std::size_t batch = 1);

// Compact convolutional baseline in the EEGNet layout, written with 1-D
// ops: temporal conv over each electrode, depthwise spatial conv, separable
// conv, two average pools and a dense readout.
struct EegNetConfig {
  std::size_t channels = 0;
  std::size_t length = 0;  // multiple of pool1 * pool2
  std::size_t n_classes = 2;
  std::size_t f1 = 8;
  std::size_t depth = 2;
  std::size_t f2 = 16;
  std::size_t kernel = 64;
  std::size_t separable_kernel = 16;
  std::size_t pool1 = 4;
  std::size_t pool2 = 8;

  void validate() const;
};

Architecture eegnet_architecture(const EegNetConfig& cfg, std::size_t batch = 1);

// Random-weight inference pass of the baseline on x [N x channels x length];
// returns logits. Exists so the cost model can be checked against counts.
Tensor eegnet_forward(const EegNetConfig& cfg, const Tensor& x, std::uint64_t seed);

// ---- writers ------------------------------------------------------------------

void write_rates_csv(const std::string& path, const FiringReport& r);
void write_plv_csv(const std::string& path, const PlvMatrix& m);
void write_topography_csv(const std::string& path, const Topography& t);
void write_edges_csv(const std::string& path, const Topography& t);
void write_roc_csv(const std::string& path, const RocCurve& c);
void write_cost_csv(const std::string& path, const CostReport& r);

}  // namespace big
