#include "car/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace car {

namespace {

thread_local Tape* g_active_tape = nullptr;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}

bool grad_wanted(std::initializer_list<const Tensor*> ins) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

bool any_nonzero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return true;
  return false;
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = std::move(shape);
  t.d_->values.assign(numel(t.d_->shape), 0.0);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  require(numel(shape) == values.size(),
          "tensor: value count " + std::to_string(values.size()) +
              " does not match shape " + shape_str(shape));
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = std::move(shape);
  t.d_->values = std::move(values);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

double Tensor::item() const {
  require(d_ && d_->values.size() == 1, "item: tensor is not a scalar");
  return d_->values[0];
}

void Tensor::ensure_grad() {
  if (d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), 0.0);
}

void Tensor::zero_grad() {
  d_->grad.assign(d_->values.size(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = d_->shape;
  t.d_->values = d_->values;
  t.d_->requires_grad = d_->requires_grad;
  t.d_->name = d_->name;
  return t;
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

int Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void(Node&)> backward) {
  int id = static_cast<int>(nodes_.size());
  output.data()->tape_node = id;
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
  return id;
}

void Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, "backward: loss must be a scalar");
  std::unordered_set<TensorData*> seen;
  auto zero = [&seen](const Tensor& t) {
    if (seen.insert(t.data()).second) const_cast<Tensor&>(t).zero_grad();
  };
  for (Node& n : nodes_) {
    for (const Tensor& in : n.inputs) zero(in);
    zero(n.output);
  }
  zero(loss);
  const_cast<Tensor&>(loss).grad()[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.output.grad().empty() || !any_nonzero(n.output.grad())) continue;
    n.backward(n);
  }
}

NoGrad::NoGrad() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGrad::~NoGrad() { g_active_tape = saved_; }

// ---- primitives ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  MapConstMat A(a.values().data(), m, k), B(b.values().data(), k, n);
  MapMat C(out.values().data(), m, n);
  C.noalias() = A * B;
  if (grad_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, b}, out, [m, k, n](Tape::Node& nd) {
      Tensor &ta = nd.inputs[0], &tb = nd.inputs[1];
      MapConstMat A(ta.values().data(), m, k), B(tb.values().data(), k, n);
      MapConstMat G(nd.output.grad().data(), m, n);
      if (ta.requires_grad() || ta.tape_node() >= 0) {
        ta.ensure_grad();
        MapMat GA(ta.grad().data(), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (tb.requires_grad() || tb.tape_node() >= 0) {
        tb.ensure_grad();
        MapMat GB(tb.grad().data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: need rank-2, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values()[j * m + i] = a.values()[i * n + j];
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [m, n](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          ta.grad()[i * n + j] += nd.output.grad()[j * m + i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (grad_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, b}, out, [](Tape::Node& nd) {
      for (int k = 0; k < 2; ++k) {
        Tensor& t = nd.inputs[k];
        t.ensure_grad();
        for (std::size_t i = 0; i < t.size(); ++i) t.grad()[i] += nd.output.grad()[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require(a.rank() == 2 && bias.rank() == 1 && bias.shape()[0] == a.shape()[1],
          "add_bias: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(bias.shape()));
  const std::size_t n = a.shape()[0], f = a.shape()[1];
  Tensor out = Tensor::zeros({n, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      out.values()[i * f + j] = a.values()[i * f + j] + bias.values()[j];
  if (grad_wanted({&a, &bias})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, bias}, out, [n, f](Tape::Node& nd) {
      Tensor &ta = nd.inputs[0], &tb = nd.inputs[1];
      ta.ensure_grad();
      tb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
          ta.grad()[i * f + j] += nd.output.grad()[i * f + j];
          tb.grad()[j] += nd.output.grad()[i * f + j];
        }
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape()[0] == b.shape()[0],
          "concat_cols: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.shape()[0], fa = a.shape()[1], fb = b.shape()[1];
  Tensor out = Tensor::zeros({n, fa + fb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.values().data() + i * fa, fa, out.values().data() + i * (fa + fb));
    std::copy_n(b.values().data() + i * fb, fb, out.values().data() + i * (fa + fb) + fa);
  }
  if (grad_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, b}, out, [n, fa, fb](Tape::Node& nd) {
      Tensor &ta = nd.inputs[0], &tb = nd.inputs[1];
      ta.ensure_grad();
      tb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < fa + fb; ++j) {
          double g = nd.output.grad()[i * (fa + fb) + j];
          if (j < fa)
            ta.grad()[i * fa + j] += g;
          else
            tb.grad()[i * fb + (j - fa)] += g;
        }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (grad_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, b}, out, [](Tape::Node& nd) {
      Tensor &ta = nd.inputs[0], &tb = nd.inputs[1];
      ta.ensure_grad();
      tb.ensure_grad();
      for (std::size_t i = 0; i < ta.size(); ++i) {
        ta.grad()[i] += nd.output.grad()[i] * tb.values()[i];
        tb.grad()[i] += nd.output.grad()[i] * ta.values()[i];
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  require(a.rank() == 2 && s.rank() == 1 && s.shape()[0] == a.shape()[0],
          "scale_rows: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(s.shape()));
  const std::size_t n = a.shape()[0], f = a.shape()[1];
  Tensor out = Tensor::zeros({n, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      out.values()[i * f + j] = a.values()[i * f + j] * s.values()[i];
  if (grad_wanted({&a, &s})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, s}, out, [n, f](Tape::Node& nd) {
      Tensor &ta = nd.inputs[0], &ts = nd.inputs[1];
      ta.ensure_grad();
      ts.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
          double g = nd.output.grad()[i * f + j];
          ta.grad()[i * f + j] += g * ts.values()[i];
          ts.grad()[i] += g * ta.values()[i * f + j];
        }
    });
  }
  return out;
}

Tensor row_sum(const Tensor& a) {
  require(a.rank() == 2, "row_sum: need rank-2, got " + shape_str(a.shape()));
  const std::size_t n = a.shape()[0], f = a.shape()[1];
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f; ++j) acc += a.values()[i * f + j];
    out.values()[i] = acc;
  }
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [n, f](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) ta.grad()[i * f + j] += nd.output.grad()[i];
    });
  }
  return out;
}

Tensor dot_cols(const Tensor& a, const Tensor& w) {
  require(a.rank() == 2 && w.rank() == 1 && w.shape()[0] == a.shape()[1],
          "dot_cols: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(w.shape()));
  const std::size_t n = a.shape()[0], f = a.shape()[1];
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f; ++j) acc += a.values()[i * f + j] * w.values()[j];
    out.values()[i] = acc;
  }
  if (grad_wanted({&a, &w})) {
    out.set_requires_grad(true);
    Tape::active()->record({a, w}, out, [n, f](Tape::Node& nd) {
      Tensor &ta = nd.inputs[0], &tw = nd.inputs[1];
      ta.ensure_grad();
      tw.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double g = nd.output.grad()[i];
        for (std::size_t j = 0; j < f; ++j) {
          ta.grad()[i * f + j] += g * tw.values()[j];
          tw.grad()[j] += g * ta.values()[i * f + j];
        }
      }
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = a.values()[i];
    out.values()[i] = x >= 0.0 ? x : slope * x;
  }
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [slope](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < ta.size(); ++i)
        ta.grad()[i] += nd.output.grad()[i] * (ta.values()[i] >= 0.0 ? 1.0 : slope);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a, double temperature) {
  require(temperature > 0.0, "sigmoid: temperature must be positive");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = 1.0 / (1.0 + std::exp(-a.values()[i] / temperature));
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [temperature](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < ta.size(); ++i) {
        double y = nd.output.values()[i];
        ta.grad()[i] += nd.output.grad()[i] * y * (1.0 - y) / temperature;
      }
    });
  }
  return out;
}

Tensor log_elem(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = std::log(a.values()[i]);
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < ta.size(); ++i)
        ta.grad()[i] += nd.output.grad()[i] / ta.values()[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::uint32_t>& idx) {
  require(a.rank() == 1 || a.rank() == 2, "gather_rows: need rank 1 or 2");
  const std::size_t n = a.shape()[0];
  const std::size_t f = a.rank() == 2 ? a.shape()[1] : 1;
  for (std::uint32_t i : idx)
    require(i < n, "gather_rows: index " + std::to_string(i) + " out of range " + std::to_string(n));
  Shape os = a.rank() == 2 ? Shape{idx.size(), f} : Shape{idx.size()};
  Tensor out = Tensor::zeros(os);
  for (std::size_t e = 0; e < idx.size(); ++e)
    std::copy_n(a.values().data() + idx[e] * f, f, out.values().data() + e * f);
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [idx, f](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < f; ++j)
          ta.grad()[idx[e] * f + j] += nd.output.grad()[e * f + j];
    });
  }
  return out;
}

Tensor segment_sum(const Tensor& a, const std::vector<std::uint32_t>& seg, std::size_t num_segments) {
  require(a.rank() == 1 || a.rank() == 2, "segment_sum: need rank 1 or 2");
  require(a.shape()[0] == seg.size(), "segment_sum: segment ids must match rows");
  const std::size_t f = a.rank() == 2 ? a.shape()[1] : 1;
  for (std::uint32_t s : seg)
    require(s < num_segments, "segment_sum: segment id " + std::to_string(s) + " out of range");
  Shape os = a.rank() == 2 ? Shape{num_segments, f} : Shape{num_segments};
  Tensor out = Tensor::zeros(os);
  for (std::size_t e = 0; e < seg.size(); ++e)
    for (std::size_t j = 0; j < f; ++j)
      out.values()[seg[e] * f + j] += a.values()[e * f + j];
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [seg, f](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t e = 0; e < seg.size(); ++e)
        for (std::size_t j = 0; j < f; ++j)
          ta.grad()[e * f + j] += nd.output.grad()[seg[e] * f + j];
    });
  }
  return out;
}

Tensor segment_softmax(const Tensor& scores, const std::vector<std::uint32_t>& seg,
                       std::size_t num_segments) {
  require(scores.rank() == 1, "segment_softmax: need rank-1 scores");
  require(scores.shape()[0] == seg.size(), "segment_softmax: segment ids must match scores");
  for (std::uint32_t s : seg)
    require(s < num_segments, "segment_softmax: segment id " + std::to_string(s) + " out of range");
  const std::size_t e_count = seg.size();
  std::vector<double> segmax(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < e_count; ++e)
    segmax[seg[e]] = std::max(segmax[seg[e]], scores.values()[e]);
  Tensor out = Tensor::zeros({e_count});
  std::vector<double> segsum(num_segments, 0.0);
  for (std::size_t e = 0; e < e_count; ++e) {
    double x = std::exp(scores.values()[e] - segmax[seg[e]]);
    out.values()[e] = x;
    segsum[seg[e]] += x;
  }
  for (std::size_t e = 0; e < e_count; ++e) out.values()[e] /= segsum[seg[e]];
  if (grad_wanted({&scores})) {
    out.set_requires_grad(true);
    Tape::active()->record({scores}, out, [seg, num_segments](Tape::Node& nd) {
      Tensor& ts = nd.inputs[0];
      ts.ensure_grad();
      std::vector<double> dot(num_segments, 0.0);
      for (std::size_t e = 0; e < seg.size(); ++e)
        dot[seg[e]] += nd.output.grad()[e] * nd.output.values()[e];
      for (std::size_t e = 0; e < seg.size(); ++e)
        ts.grad()[e] += nd.output.values()[e] * (nd.output.grad()[e] - dot[seg[e]]);
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require(a.rank() == 2, "softmax_rows: need rank-2, got " + shape_str(a.shape()));
  const std::size_t n = a.shape()[0], c = a.shape()[1];
  Tensor out = Tensor::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, a.values()[i * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double x = std::exp(a.values()[i * c + j] - mx);
      out.values()[i * c + j] = x;
      sum += x;
    }
    for (std::size_t j = 0; j < c; ++j) out.values()[i * c + j] /= sum;
  }
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [n, c](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j)
          dot += nd.output.grad()[i * c + j] * nd.output.values()[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          ta.grad()[i * c + j] +=
              nd.output.values()[i * c + j] * (nd.output.grad()[i * c + j] - dot);
      }
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  require(a.size() > 0, "mean_all: empty tensor");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc / static_cast<double>(a.size()));
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      double g = nd.output.grad()[0] / static_cast<double>(ta.size());
      for (std::size_t i = 0; i < ta.size(); ++i) ta.grad()[i] += g;
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < ta.size(); ++i) ta.grad()[i] += nd.output.grad()[0];
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * c;
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record({a}, out, [c](Tape::Node& nd) {
      Tensor& ta = nd.inputs[0];
      ta.ensure_grad();
      for (std::size_t i = 0; i < ta.size(); ++i) ta.grad()[i] += nd.output.grad()[i] * c;
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels,
                     const std::vector<std::uint8_t>& mask) {
  require(probs.rank() == 2, "cross_entropy: need rank-2 probabilities");
  const std::size_t n = probs.shape()[0], c = probs.shape()[1];
  require(labels.size() == n && mask.size() == n,
          "cross_entropy: labels/mask must have one entry per row");
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    ++m;
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c,
            "cross_entropy: label out of range at row " + std::to_string(i));
    double rs = 0.0;
    for (std::size_t j = 0; j < c; ++j) rs += probs.values()[i * c + j];
    require(std::abs(rs - 1.0) <= 1e-6,
            "cross_entropy: row " + std::to_string(i) + " does not sum to 1");
  }
  require(m > 0, "cross_entropy: empty mask");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    acc -= std::log(std::max(probs.values()[i * c + labels[i]], kProbFloor));
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(m));
  if (grad_wanted({&probs})) {
    out.set_requires_grad(true);
    Tape::active()->record({probs}, out, [labels, mask, m, c](Tape::Node& nd) {
      Tensor& tp = nd.inputs[0];
      tp.ensure_grad();
      double g = nd.output.grad()[0] / static_cast<double>(m);
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        double p = tp.values()[i * c + labels[i]];
        if (p >= kProbFloor) tp.grad()[i * c + labels[i]] -= g / p;
      }
    });
  }
  return out;
}

Tensor binary_cross_entropy(const Tensor& pred, const std::vector<double>& targets) {
  require(pred.size() == targets.size(),
          "binary_cross_entropy: prediction/target count mismatch");
  require(pred.size() > 0, "binary_cross_entropy: empty input");
  const double lo = kProbFloor, hi = 1.0 - kProbFloor;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double p = std::clamp(pred.values()[i], lo, hi);
    acc -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(pred.size()));
  if (grad_wanted({&pred})) {
    out.set_requires_grad(true);
    Tape::active()->record({pred}, out, [targets, lo, hi](Tape::Node& nd) {
      Tensor& tp = nd.inputs[0];
      tp.ensure_grad();
      double g = nd.output.grad()[0] / static_cast<double>(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) {
        double p = tp.values()[i];
        if (p > lo && p < hi) tp.grad()[i] += g * (p - targets[i]) / (p * (1.0 - p));
      }
    });
  }
  return out;
}

Tensor squared_error(const Tensor& pred, const std::vector<double>& targets) {
  require(pred.size() == targets.size(), "squared_error: prediction/target count mismatch");
  require(pred.size() > 0, "squared_error: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred.values()[i] - targets[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(pred.size()));
  if (grad_wanted({&pred})) {
    out.set_requires_grad(true);
    Tape::active()->record({pred}, out, [targets](Tape::Node& nd) {
      Tensor& tp = nd.inputs[0];
      tp.ensure_grad();
      double g = nd.output.grad()[0] * 2.0 / static_cast<double>(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i)
        tp.grad()[i] += g * (tp.values()[i] - targets[i]);
    });
  }
  return out;
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].size(), 0.0);
    v_[i].assign(params_[i].size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& par = params_[p];
    par.ensure_grad();
    for (std::size_t i = 0; i < par.size(); ++i) {
      double g = par.grad()[i];
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in parameter '" +
                           (par.name().empty() ? std::to_string(p) : par.name()) + "'");
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m_[p][i] / bc1;
      double vhat = v_[p][i] / bc2;
      par.values()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace car
