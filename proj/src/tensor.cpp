#include "spkdlg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spkdlg {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << 'x';
    out << s[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void check_shape(const Shape& s) {
  if (s.empty()) throw std::invalid_argument("tensor: rank-0 shape");
  for (std::size_t d : s) {
    if (d == 0) throw std::invalid_argument("tensor: zero dimension in " + shape_str(s));
  }
}

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  Tensor t;
  t.data_ = std::make_shared<Data>();
  t.data_->values.assign(shape_numel(shape), 0.0);
  t.data_->shape = std::move(shape);
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.data_ = std::make_shared<Data>();
  t.data_->shape = std::move(shape);
  t.data_->values = std::move(values);
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  check_shape(shape);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(lo, hi);
  return from_values(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return data_->shape; }
std::size_t Tensor::rank() const { return data_->shape.size(); }
std::size_t Tensor::size() const { return data_->values.size(); }
std::size_t Tensor::dim(std::size_t axis) const { return data_->shape.at(axis); }

std::vector<double>& Tensor::values() { return data_->values; }
const std::vector<double>& Tensor::values() const { return data_->values; }

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw std::logic_error("tensor: scalar_value on shape " + shape_str(shape()));
  }
  return data_->values[0];
}

bool Tensor::requires_grad() const { return data_->requires_grad; }
void Tensor::set_requires_grad(bool b) { data_->requires_grad = b; }

bool Tensor::has_grad() const { return data_->grad_set; }

std::vector<double>& Tensor::grad() {
  if (!data_->grad_set) {
    data_->grad.assign(data_->values.size(), 0.0);
    data_->grad_set = true;
  }
  return data_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!data_->grad_set) {
    throw std::logic_error("tensor: gradient read before backward");
  }
  return data_->grad;
}

void Tensor::clear_grad() {
  data_->grad_set = false;
  data_->grad.clear();
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

namespace {

// Broadcast layout of one binary operand relative to the output.
enum class Cast { same, scalar, rowvec };

std::size_t cast_index(Cast c, std::size_t i, std::size_t cols) {
  switch (c) {
    case Cast::same: return i;
    case Cast::scalar: return 0;
    case Cast::rowvec: return i % cols;
  }
  return i;
}

struct BinaryPlan {
  Shape out_shape;
  Cast a;
  Cast b;
  std::size_t cols = 1;
};

BinaryPlan plan_binary(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {a.shape(), Cast::same, Cast::same, 1};
  if (b.size() == 1) return {a.shape(), Cast::same, Cast::scalar, 1};
  if (a.size() == 1) return {b.shape(), Cast::scalar, Cast::same, 1};
  if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) {
    return {a.shape(), Cast::same, Cast::rowvec, a.dim(1)};
  }
  if (b.rank() == 2 && a.rank() == 1 && a.dim(0) == b.dim(1)) {
    return {b.shape(), Cast::rowvec, Cast::same, b.dim(1)};
  }
  dim_error(op, a.shape(), b.shape());
}

}  // namespace

Tensor Tape::make(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor::from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  BinaryPlan p = plan_binary("add", a, b);
  std::size_t n = 1;
  for (std::size_t d : p.out_shape) n *= d;
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = av[cast_index(p.a, i, p.cols)] + bv[cast_index(p.b, i, p.cols)];
  }
  Tensor result = make(p.out_shape, std::move(out), a.requires_grad() || b.requires_grad());
  if (result.requires_grad()) {
    record([a, b, result, p, n]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) ga[cast_index(p.a, i, p.cols)] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) gb[cast_index(p.b, i, p.cols)] += g[i];
      }
    });
  }
  return result;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  BinaryPlan p = plan_binary("sub", a, b);
  std::size_t n = 1;
  for (std::size_t d : p.out_shape) n *= d;
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = av[cast_index(p.a, i, p.cols)] - bv[cast_index(p.b, i, p.cols)];
  }
  Tensor result = make(p.out_shape, std::move(out), a.requires_grad() || b.requires_grad());
  if (result.requires_grad()) {
    record([a, b, result, p, n]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) ga[cast_index(p.a, i, p.cols)] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) gb[cast_index(p.b, i, p.cols)] -= g[i];
      }
    });
  }
  return result;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  BinaryPlan p = plan_binary("mul", a, b);
  std::size_t n = 1;
  for (std::size_t d : p.out_shape) n *= d;
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = av[cast_index(p.a, i, p.cols)] * bv[cast_index(p.b, i, p.cols)];
  }
  Tensor result = make(p.out_shape, std::move(out), a.requires_grad() || b.requires_grad());
  if (result.requires_grad()) {
    record([a, b, result, p, n]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      const auto& av2 = a.values();
      const auto& bv2 = b.values();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) {
          ga[cast_index(p.a, i, p.cols)] += g[i] * bv2[cast_index(p.b, i, p.cols)];
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) {
          gb[cast_index(p.b, i, p.cols)] += g[i] * av2[cast_index(p.a, i, p.cols)];
        }
      }
    });
  }
  return result;
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  Tensor result = make(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    record([x, result]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      const auto& yv = result.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return result;
}

Tensor Tape::tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  Tensor result = make(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    record([x, result]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      const auto& yv = result.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return result;
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor result = make(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    record([x, result]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      const auto& xv2 = x.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv2[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return result;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2) dim_error("matmul", a.shape(), b.shape());
  const bool a_vec = a.rank() == 1;
  if (!a_vec && a.rank() != 2) dim_error("matmul", a.shape(), b.shape());
  const std::size_t m = a_vec ? 1 : a.dim(0);
  const std::size_t k = a_vec ? a.dim(0) : a.dim(1);
  const std::size_t n = b.dim(1);
  if (k != b.dim(0)) dim_error("matmul", a.shape(), b.shape());

  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + kk * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  Shape out_shape = a_vec ? Shape{n} : Shape{m, n};
  Tensor result = make(std::move(out_shape), std::move(out),
                       a.requires_grad() || b.requires_grad());
  if (result.requires_grad()) {
    record([a, b, result, m, k, n]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      const auto& av2 = a.values();
      const auto& bv2 = b.values();
      if (a.requires_grad()) {
        auto& ga = a.grad();  // += g . b^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = g.data() + i * n;
            const double* brow = bv2.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + kk] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();  // += a^T . g
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * n;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av2[i * k + kk];
            if (aik == 0.0) continue;
            double* brow = gb.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor Tape::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no tensors");
  if (parts.size() == 1) return parts[0];
  const std::size_t rank = parts[0].rank();
  if (axis >= rank) throw std::invalid_argument("concat: axis out of range");
  for (const Tensor& t : parts) {
    if (t.rank() != rank) dim_error("concat", parts[0].shape(), t.shape());
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != axis && t.dim(d) != parts[0].dim(d)) {
        dim_error("concat", parts[0].shape(), t.shape());
      }
    }
  }

  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const Tensor& t : parts) out_shape[axis] += t.dim(axis);

  bool needs_grad = false;
  for (const Tensor& t : parts) needs_grad = needs_grad || t.requires_grad();

  std::vector<double> out;
  std::size_t n = 1;
  for (std::size_t d : out_shape) n *= d;
  out.reserve(n);

  if (rank == 1 || axis == 0) {
    for (const Tensor& t : parts) {
      out.insert(out.end(), t.values().begin(), t.values().end());
    }
  } else {  // rank == 2, axis == 1
    const std::size_t rows = out_shape[0];
    for (std::size_t r = 0; r < rows; ++r) {
      for (const Tensor& t : parts) {
        const std::size_t c = t.dim(1);
        const auto& v = t.values();
        out.insert(out.end(), v.begin() + r * c, v.begin() + (r + 1) * c);
      }
    }
  }

  Tensor result = make(out_shape, std::move(out), needs_grad);
  if (needs_grad) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    record([held = std::move(held), result, axis, rank]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      if (rank == 1 || axis == 0) {
        std::size_t off = 0;
        for (Tensor& t : held) {
          if (t.requires_grad()) {
            auto& gt = t.grad();
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[off + i];
          }
          off += t.size();
        }
      } else {
        const std::size_t rows = result.dim(0);
        const std::size_t total_cols = result.dim(1);
        std::size_t col_off = 0;
        for (Tensor& t : held) {
          const std::size_t c = t.dim(1);
          if (t.requires_grad()) {
            auto& gt = t.grad();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) {
                gt[r * c + j] += g[r * total_cols + col_off + j];
              }
            }
          }
          col_off += c;
        }
      }
    });
  }
  return result;
}

Tensor Tape::stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty sequence");
  const std::size_t d = rows[0].size();
  bool needs_grad = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.dim(0) != d) dim_error("stack_rows", rows[0].shape(), r.shape());
    needs_grad = needs_grad || r.requires_grad();
  }
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const Tensor& r : rows) {
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  Tensor result = make({rows.size(), d}, std::move(out), needs_grad);
  if (needs_grad) {
    std::vector<Tensor> held(rows.begin(), rows.end());
    record([held = std::move(held), result, d]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      for (std::size_t t = 0; t < held.size(); ++t) {
        if (!held[t].requires_grad()) continue;
        auto& gr = held[t].grad();
        for (std::size_t j = 0; j < d; ++j) gr[j] += g[t * d + j];
      }
    });
  }
  return result;
}

Tensor Tape::row(const Tensor& matrix, std::size_t index) {
  if (matrix.rank() != 2) {
    throw std::invalid_argument("row: expected rank-2, got " + shape_str(matrix.shape()));
  }
  if (index >= matrix.dim(0)) {
    throw std::out_of_range("row: index " + std::to_string(index) +
                            " out of range for " + shape_str(matrix.shape()));
  }
  const std::size_t cols = matrix.dim(1);
  const auto& mv = matrix.values();
  std::vector<double> out(mv.begin() + index * cols, mv.begin() + (index + 1) * cols);
  Tensor result = make({cols}, std::move(out), matrix.requires_grad());
  if (result.requires_grad()) {
    record([matrix, result, index, cols]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      auto& gm = matrix.grad();
      for (std::size_t j = 0; j < cols; ++j) gm[index * cols + j] += g[j];
    });
  }
  return result;
}

Tensor Tape::max_over_time(const Tensor& seq) {
  if (seq.rank() != 2) {
    throw std::invalid_argument("max_over_time: expected rank-2, got " +
                                shape_str(seq.shape()));
  }
  const std::size_t rows = seq.dim(0);
  const std::size_t cols = seq.dim(1);
  const auto& v = seq.values();
  std::vector<double> out(cols);
  std::vector<std::size_t> argmax(cols, 0);
  for (std::size_t j = 0; j < cols; ++j) {
    double best = v[j];
    std::size_t best_row = 0;
    for (std::size_t r = 1; r < rows; ++r) {
      // strictly greater: ties keep the first occurrence
      if (v[r * cols + j] > best) {
        best = v[r * cols + j];
        best_row = r;
      }
    }
    out[j] = best;
    argmax[j] = best_row;
  }
  Tensor result = make({cols}, std::move(out), seq.requires_grad());
  if (result.requires_grad()) {
    record([seq, result, argmax = std::move(argmax), cols]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      auto& gs = seq.grad();
      for (std::size_t j = 0; j < cols; ++j) gs[argmax[j] * cols + j] += g[j];
    });
  }
  return result;
}

Tensor Tape::conv1d(const Tensor& seq, const Tensor& filters, std::size_t width) {
  if (seq.rank() != 2 || filters.rank() != 2) {
    dim_error("conv1d", seq.shape(), filters.shape());
  }
  const std::size_t t_len = seq.dim(0);
  const std::size_t d = seq.dim(1);
  const std::size_t f = filters.dim(1);
  if (width == 0 || t_len < width) {
    throw std::invalid_argument("conv1d: sequence " + shape_str(seq.shape()) +
                                " shorter than filter width " + std::to_string(width));
  }
  if (filters.dim(0) != width * d) dim_error("conv1d", seq.shape(), filters.shape());

  const std::size_t positions = t_len - width + 1;
  std::vector<double> out(positions * f, 0.0);
  const auto& sv = seq.values();
  const auto& wv = filters.values();
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < width * d; ++i) {
      const double x = sv[p * d + i];  // window rows are contiguous
      if (x == 0.0) continue;
      const double* wrow = wv.data() + i * f;
      double* orow = out.data() + p * f;
      for (std::size_t j = 0; j < f; ++j) orow[j] += x * wrow[j];
    }
  }
  Tensor result = make({positions, f}, std::move(out),
                       seq.requires_grad() || filters.requires_grad());
  if (result.requires_grad()) {
    record([seq, filters, result, positions, width, d, f]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      const auto& sv2 = seq.values();
      const auto& wv2 = filters.values();
      if (seq.requires_grad()) {
        auto& gs = seq.grad();
        for (std::size_t p = 0; p < positions; ++p) {
          const double* grow = g.data() + p * f;
          for (std::size_t i = 0; i < width * d; ++i) {
            const double* wrow = wv2.data() + i * f;
            double acc = 0.0;
            for (std::size_t j = 0; j < f; ++j) acc += grow[j] * wrow[j];
            gs[p * d + i] += acc;
          }
        }
      }
      if (filters.requires_grad()) {
        auto& gw = filters.grad();
        for (std::size_t p = 0; p < positions; ++p) {
          const double* grow = g.data() + p * f;
          for (std::size_t i = 0; i < width * d; ++i) {
            const double x = sv2[p * d + i];
            if (x == 0.0) continue;
            double* wrow = gw.data() + i * f;
            for (std::size_t j = 0; j < f; ++j) wrow[j] += x * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor Tape::embed(const Tensor& table, std::span<const int> ids, bool freeze_pad_row) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embed: table must be rank-2, got " +
                                shape_str(table.shape()));
  }
  if (ids.empty()) throw std::invalid_argument("embed: empty id sequence");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embed: token id " + std::to_string(id) +
                              " out of range [0," + std::to_string(vocab) + ")");
    }
  }
  std::vector<double> out;
  out.reserve(ids.size() * d);
  const auto& tv = table.values();
  for (int id : ids) {
    out.insert(out.end(), tv.begin() + std::size_t(id) * d,
               tv.begin() + (std::size_t(id) + 1) * d);
  }
  Tensor result = make({ids.size(), d}, std::move(out), table.requires_grad());
  if (result.requires_grad()) {
    std::vector<int> held(ids.begin(), ids.end());
    record([table, result, held = std::move(held), d, freeze_pad_row]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      auto& gt = table.grad();
      for (std::size_t t = 0; t < held.size(); ++t) {
        if (freeze_pad_row && held[t] == 0) continue;
        double* trow = gt.data() + std::size_t(held[t]) * d;
        const double* grow = g.data() + t * d;
        for (std::size_t j = 0; j < d; ++j) trow[j] += grow[j];
      }
    });
  }
  return result;
}

Tensor Tape::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor result = make({1}, {total}, x.requires_grad());
  if (result.requires_grad()) {
    record([x, result]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0];
      auto& gx = x.grad();
      for (double& v : gx) v += g;
    });
  }
  return result;
}

Tensor Tape::scale(const Tensor& x, double k) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * k;
  Tensor result = make(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    record([x, result, k]() mutable {
      if (!result.has_grad()) return;
      const auto& g = result.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += k * g[i];
    });
  }
  return result;
}

Tensor Tape::bce_sum(const Tensor& probs, std::vector<double> targets) {
  if (probs.size() != targets.size()) {
    throw std::invalid_argument("bce_sum: " + std::to_string(probs.size()) +
                                " probabilities vs " + std::to_string(targets.size()) +
                                " targets");
  }
  const auto& pv = probs.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], kProbClip, 1.0 - kProbClip);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  Tensor result = make({1}, {total}, probs.requires_grad());
  if (result.requires_grad()) {
    record([probs, result, targets = std::move(targets)]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0];
      const auto& pv2 = probs.values();
      auto& gp = probs.grad();
      for (std::size_t i = 0; i < pv2.size(); ++i) {
        if (pv2[i] <= kProbClip || pv2[i] >= 1.0 - kProbClip) continue;  // clipped flat
        gp[i] += g * (pv2[i] - targets[i]) / (pv2[i] * (1.0 - pv2[i]));
      }
    });
  }
  return result;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.shape()));
  }
  if (backward_done_) {
    throw std::logic_error("backward: tape already replayed");
  }
  backward_done_ = true;
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace spkdlg
