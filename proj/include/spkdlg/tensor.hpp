#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spkdlg/util.hpp"

namespace spkdlg {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense tensor of doubles with an attached gradient slot. Copies are shallow:
// they refer to the same storage, which is what lets tape nodes and the
// optimizer see gradients accumulated into parameters.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = true);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double scalar_value() const;  // size-1 tensors only

  bool requires_grad() const;
  void set_requires_grad(bool b);

  // The gradient slot stays unset until backward first accumulates into it.
  bool has_grad() const;
  std::vector<double>& grad();              // allocates zeros on first call
  const std::vector<double>& grad() const;  // precondition: has_grad()
  void clear_grad();

  // Identity of the underlying storage (parameter-tying checks).
  bool is(const Tensor& other) const { return data_ == other.data_; }

 private:
  struct Data {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    bool grad_set = false;
    std::vector<double> grad;
  };
  std::shared_ptr<Data> data_;
};

// Records the forward computation and replays it in reverse for gradients.
// Nodes are appended at construction time, so every node's inputs precede it
// and a single reverse sweep is a valid topological traversal.
class Tape {
 public:
  // elementwise; binary ops accept equal shapes, a scalar operand, or a
  // rank-1 row broadcast against a rank-2 matrix
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);

  // a: [m x k] or [k], b: [k x n]
  Tensor matmul(const Tensor& a, const Tensor& b);

  Tensor concat(std::span<const Tensor> parts, std::size_t axis);
  Tensor stack_rows(std::span<const Tensor> rows);  // T x [d] -> [T x d]
  Tensor row(const Tensor& matrix, std::size_t index);
  Tensor max_over_time(const Tensor& seq);  // [T x d] -> [d]

  // seq: [T x d], filters: [(width*d) x F] (flattened windows), T >= width.
  // Output [T-width+1 x F]; biases are added by the caller.
  Tensor conv1d(const Tensor& seq, const Tensor& filters, std::size_t width);

  Tensor embed(const Tensor& table, std::span<const int> ids,
               bool freeze_pad_row);

  Tensor sum(const Tensor& x);             // -> [1]
  Tensor scale(const Tensor& x, double k); // constant scalar multiply

  // Summed binary cross-entropy against constant 0/1 targets, with
  // probabilities clipped to [kProbClip, 1-kProbClip]. -> [1]
  Tensor bce_sum(const Tensor& probs, std::vector<double> targets);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node in reverse.
  // May be called once per tape; loss must be a scalar.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  static constexpr double kProbClip = 1e-7;

 private:
  Tensor make(Shape shape, std::vector<double> values, bool requires_grad);
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> nodes_;
  bool backward_done_ = false;
};

}  // namespace spkdlg
