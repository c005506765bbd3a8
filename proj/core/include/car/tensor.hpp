#pragma once
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "car/error.hpp"

namespace car {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches it
  bool requires_grad = false;
  int tape_node = -1;  // producing node on the active tape, -1 for leaves
  std::string name;
};

// Shared handle; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t rank() const { return d_->shape.size(); }
  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  double item() const;

  std::vector<double>& grad() { return d_->grad; }
  const std::vector<double>& grad() const { return d_->grad; }
  void ensure_grad();  // size to values, keep contents
  void zero_grad();

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }
  int tape_node() const { return d_->tape_node; }

  const std::string& name() const { return d_->name; }
  Tensor& set_name(std::string n) { d_->name = std::move(n); return *this; }

  TensorData* data() const { return d_.get(); }
  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

  // Deep copy of values/shape; grad not copied, no tape link.
  Tensor clone() const;

 private:
  std::shared_ptr<TensorData> d_;
};

// Records one node per primitive application; backward replays in reverse.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(Node&)> backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  int record(std::vector<Tensor> inputs, Tensor output, std::function<void(Node&)> backward);
  std::size_t num_nodes() const { return nodes_.size(); }

  // Zeroes grads of every tensor the tape references, seeds d(loss)=1,
  // then walks nodes newest-to-oldest. Loss must be a scalar on this tape.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
};

// Suppresses recording within a scope (gradient-free forwards).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape* saved_;
};

// ---- primitives (all record on the active tape when an input needs grad) ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);            // identical shapes
Tensor add_bias(const Tensor& a, const Tensor& bias);    // (N,F) + (F) per row
Tensor concat_cols(const Tensor& a, const Tensor& b);    // (N,Fa)||(N,Fb)
Tensor mul(const Tensor& a, const Tensor& b);            // elementwise
Tensor scale_rows(const Tensor& a, const Tensor& s);     // row i of a times s[i]
Tensor row_sum(const Tensor& a);                         // (N,F) -> (N)
Tensor dot_cols(const Tensor& a, const Tensor& w);       // (N,F)x(F) -> (N) row dots
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a, double temperature = 1.0);
Tensor log_elem(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<std::uint32_t>& idx);
Tensor segment_sum(const Tensor& a, const std::vector<std::uint32_t>& seg, std::size_t num_segments);
// Per-segment softmax over 1-D scores, max-subtraction stabilized.
// Segment ids need not be contiguous; empty segments contribute nothing.
Tensor segment_softmax(const Tensor& scores, const std::vector<std::uint32_t>& seg, std::size_t num_segments);
Tensor softmax_rows(const Tensor& a);                    // (N,C) rows sum to 1
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor scalar_mul(const Tensor& a, double c);

// Mean over masked rows of -log(p[row, label]); probabilities clamped to
// >= 1e-12 before the log. Rows where mask is false are ignored.
Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels,
                     const std::vector<std::uint8_t>& mask);
// Mean over elements of -[t log p + (1-t) log(1-p)], p clamped to
// [1e-12, 1-1e-12]. Gradient flows to pred only; targets are data.
Tensor binary_cross_entropy(const Tensor& pred, const std::vector<double>& targets);
// Mean squared error against constant targets.
Tensor squared_error(const Tensor& pred, const std::vector<double>& targets);

constexpr double kProbFloor = 1e-12;

// ---- optimizer ----

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});
  // One update from the grads currently on the params. Throws NumericError
  // naming the parameter if its gradient has a non-finite entry.
  void step();
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace car
