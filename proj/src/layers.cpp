#include "spkdlg/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace spkdlg {

Tensor glorot_uniform(Shape shape, Rng& rng) {
  std::size_t fan_in = shape[0];
  std::size_t fan_out = shape.size() > 1 ? shape[1] : shape[0];
  const double r = std::sqrt(6.0 / double(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -r, r, rng, /*requires_grad=*/true);
}

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t dim,
                                    Rng& rng, bool trainable) {
  EmbeddingTable table;
  table.vocab_size = vocab_size;
  table.dim = dim;
  table.trainable = trainable;
  table.weights = glorot_uniform({vocab_size, dim}, rng);
  table.weights.set_requires_grad(trainable);
  // padding row stays zero
  for (std::size_t j = 0; j < dim; ++j) table.weights.values()[j] = 0.0;
  return table;
}

Tensor embed(Tape& tape, const EmbeddingTable& table, std::span<const int> ids) {
  return tape.embed(table.weights, ids, table.freeze_padding);
}

LSTMCellParams LSTMCellParams::init(std::size_t input_dim, std::size_t hidden_dim,
                                    Rng& rng) {
  LSTMCellParams cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  const Shape w{input_dim + hidden_dim, hidden_dim};
  cell.w_input = glorot_uniform(w, rng);
  cell.w_forget = glorot_uniform(w, rng);
  cell.w_output = glorot_uniform(w, rng);
  cell.w_cell = glorot_uniform(w, rng);
  cell.b_input = Tensor::zeros({hidden_dim}, true);
  cell.b_forget = Tensor::from_values({hidden_dim},
                                      std::vector<double>(hidden_dim, 1.0), true);
  cell.b_output = Tensor::zeros({hidden_dim}, true);
  cell.b_cell = Tensor::zeros({hidden_dim}, true);
  return cell;
}

LSTMState lstm_initial_state(std::size_t hidden_dim) {
  return {Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
}

LSTMState lstm_step(Tape& tape, const LSTMCellParams& cell, const Tensor& x,
                    const LSTMState& prev) {
  if (x.rank() != 1 || x.dim(0) != cell.input_dim) {
    throw std::invalid_argument("lstm_step: input " + shape_str(x.shape()) +
                                " does not match cell input_dim " +
                                std::to_string(cell.input_dim));
  }
  if (prev.h.dim(0) != cell.hidden_dim || prev.c.dim(0) != cell.hidden_dim) {
    throw std::invalid_argument("lstm_step: state does not match cell hidden_dim " +
                                std::to_string(cell.hidden_dim));
  }
  const Tensor parts[] = {x, prev.h};
  Tensor xh = tape.concat(parts, 0);
  Tensor gate_i = tape.sigmoid(tape.add(tape.matmul(xh, cell.w_input), cell.b_input));
  Tensor gate_f = tape.sigmoid(tape.add(tape.matmul(xh, cell.w_forget), cell.b_forget));
  Tensor gate_o = tape.sigmoid(tape.add(tape.matmul(xh, cell.w_output), cell.b_output));
  Tensor candidate = tape.tanh(tape.add(tape.matmul(xh, cell.w_cell), cell.b_cell));
  Tensor c = tape.add(tape.mul(gate_f, prev.c), tape.mul(gate_i, candidate));
  Tensor h = tape.mul(gate_o, tape.tanh(c));
  return {h, c};
}

BLSTMEncoder BLSTMEncoder::init(std::size_t input_dim, std::size_t hidden_dim,
                                Rng& rng) {
  BLSTMEncoder enc;
  enc.forward_cell = LSTMCellParams::init(input_dim, hidden_dim, rng);
  enc.backward_cell = LSTMCellParams::init(input_dim, hidden_dim, rng);
  return enc;
}

Tensor blstm_encode(Tape& tape, const BLSTMEncoder& enc,
                    const std::vector<Tensor>& seq, const Tensor* init_fwd,
                    const Tensor* init_bwd) {
  if (seq.empty()) throw std::invalid_argument("blstm_encode: empty sequence");
  const std::size_t hidden = enc.hidden_dim();

  LSTMState fwd = lstm_initial_state(hidden);
  if (init_fwd) fwd.h = *init_fwd;
  for (const Tensor& x : seq) fwd = lstm_step(tape, enc.forward_cell, x, fwd);

  LSTMState bwd = lstm_initial_state(hidden);
  if (init_bwd) bwd.h = *init_bwd;
  for (auto it = seq.rbegin(); it != seq.rend(); ++it) {
    bwd = lstm_step(tape, enc.backward_cell, *it, bwd);
  }

  const Tensor halves[] = {fwd.h, bwd.h};
  return tape.concat(halves, 0);
}

CNNEncoder CNNEncoder::init(std::size_t input_dim, std::vector<std::size_t> widths,
                            std::size_t filters_per_width, Rng& rng,
                            Activation activation) {
  CNNEncoder enc;
  enc.input_dim = input_dim;
  enc.widths = std::move(widths);
  enc.filters_per_width = filters_per_width;
  enc.activation = activation;
  for (std::size_t w : enc.widths) {
    enc.weights.push_back(glorot_uniform({w * input_dim, filters_per_width}, rng));
    enc.biases.push_back(Tensor::zeros({filters_per_width}, true));
  }
  return enc;
}

namespace {

Tensor apply_activation(Tape& tape, Activation act, const Tensor& x) {
  switch (act) {
    case Activation::relu: return tape.relu(x);
    case Activation::tanh_fn: return tape.tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

}  // namespace

std::vector<Tensor> conv1d_bank(Tape& tape, const CNNEncoder& enc, const Tensor& seq) {
  std::vector<Tensor> maps;
  maps.reserve(enc.widths.size());
  for (std::size_t i = 0; i < enc.widths.size(); ++i) {
    Tensor conv = tape.conv1d(seq, enc.weights[i], enc.widths[i]);
    conv = tape.add(conv, enc.biases[i]);
    maps.push_back(apply_activation(tape, enc.activation, conv));
  }
  return maps;
}

Tensor cnn_encode(Tape& tape, const CNNEncoder& enc, const Tensor& seq) {
  if (seq.rank() != 2 || seq.dim(1) != enc.input_dim) {
    throw std::invalid_argument("cnn_encode: sequence " + shape_str(seq.shape()) +
                                " does not match input_dim " +
                                std::to_string(enc.input_dim));
  }
  std::size_t max_width = 0;
  for (std::size_t w : enc.widths) max_width = std::max(max_width, w);

  Tensor padded = seq;
  if (seq.dim(0) < max_width) {
    Tensor pad = Tensor::zeros({max_width - seq.dim(0), enc.input_dim});
    const Tensor parts[] = {seq, pad};
    padded = tape.concat(parts, 0);
  }

  std::vector<Tensor> pooled;
  pooled.reserve(enc.widths.size());
  for (const Tensor& fmap : conv1d_bank(tape, enc, padded)) {
    pooled.push_back(tape.max_over_time(fmap));
  }
  return tape.concat(pooled, 0);
}

DenseLayer DenseLayer::init(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer layer;
  layer.weight = glorot_uniform({in, out}, rng);
  layer.bias = Tensor::zeros({out}, true);
  return layer;
}

Tensor dense(Tape& tape, const DenseLayer& layer, const Tensor& x) {
  return tape.add(tape.matmul(x, layer.weight), layer.bias);
}

}  // namespace spkdlg
