#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace big {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of f64 with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage. Forward ops never
// mutate their inputs; only gradient accumulation and optimizer updates write
// into existing storage.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Write access for parameter updates and initialization. Never use on a
  // tensor that is already recorded on a live tape.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();  // allocates a zero buffer on demand
  void zero_grad();
  void clear_grad();

  // Copy of the values with no gradient tracking.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const void* id() const { return impl_.get(); }
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered record of differentiable operations. Nodes are appended in
// execution order, so the list is topologically sorted by construction.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

// Makes a tape the recording target for ops issued on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Reverse sweep. Seeds d(loss)/d(loss) = 1 and visits each node once in
// reverse recording order. Parameter gradients accumulate across calls.
void backward(Tape& tape, const Tensor& loss);

// Counts arithmetic executed by op kernels while a CountScope is alive. Used
// to check the analytic cost model against what actually runs.
struct OpCounts {
  std::uint64_t macs = 0;         // dense multiply-accumulates
  std::uint64_t accumulates = 0;  // additions driven by binary spikes
  std::uint64_t other = 0;        // pooling, activations, normalization
};

class CountScope {
 public:
  CountScope();
  ~CountScope();
  CountScope(const CountScope&) = delete;
  CountScope& operator=(const CountScope&) = delete;
  const OpCounts& counts() const { return counts_; }

 private:
  OpCounts counts_;
  OpCounts* previous_;
};

OpCounts* active_counter();

namespace detail {

// True when an op with these inputs must be recorded on the active tape.
bool needs_record(std::initializer_list<const Tensor*> inputs);

// Adds g into t's gradient when t tracks gradients.
void accumulate(const Tensor& t, std::span<const double> g);

inline void count_macs(std::uint64_t n) {
  if (auto* c = active_counter()) c->macs += n;
}
inline void count_accumulates(std::uint64_t n) {
  if (auto* c = active_counter()) c->accumulates += n;
}
inline void count_other(std::uint64_t n) {
  if (auto* c = active_counter()) c->other += n;
}

}  // namespace detail

}  // namespace big
