#pragma once

#include <cstddef>
#include <vector>

#include "spkdlg/tensor.hpp"

namespace spkdlg {

// Glorot-style uniform init: +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, Rng& rng);

struct EmbeddingTable {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  Tensor weights;  // [vocab x dim], row 0 is the padding row
  bool trainable = true;
  bool freeze_padding = true;

  static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, Rng& rng,
                             bool trainable = true);
};

// Row lookup; gradient flows to the looked-up rows only when trainable.
Tensor embed(Tape& tape, const EmbeddingTable& table, std::span<const int> ids);

struct LSTMCellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  // gate weights applied to [x ; h_prev]
  Tensor w_input, w_forget, w_output, w_cell;  // [(input+hidden) x hidden]
  Tensor b_input, b_forget, b_output, b_cell;  // [hidden]

  // forget-gate bias starts at 1.0, all other biases at zero
  static LSTMCellParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
};

struct LSTMState {
  Tensor h;
  Tensor c;
};

LSTMState lstm_initial_state(std::size_t hidden_dim);

// i = sig(W_i.[x;h]+b_i), f = sig(W_f.[x;h]+b_f), o = sig(W_o.[x;h]+b_o),
// c~ = tanh(W_c.[x;h]+b_c), c_t = f*c_prev + i*c~, h_t = o*tanh(c_t)
LSTMState lstm_step(Tape& tape, const LSTMCellParams& cell, const Tensor& x,
                    const LSTMState& prev);

struct BLSTMEncoder {
  LSTMCellParams forward_cell;
  LSTMCellParams backward_cell;

  std::size_t input_dim() const { return forward_cell.input_dim; }
  std::size_t hidden_dim() const { return forward_cell.hidden_dim; }
  std::size_t output_dim() const { return 2 * forward_cell.hidden_dim; }

  static BLSTMEncoder init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
};

// Runs the forward cell left-to-right and the backward cell right-to-left over
// a sequence of rank-1 vectors and concatenates the two final hidden states.
// Optional initial hidden states carry context; cell states always start at 0.
Tensor blstm_encode(Tape& tape, const BLSTMEncoder& enc,
                    const std::vector<Tensor>& seq,
                    const Tensor* init_fwd = nullptr,
                    const Tensor* init_bwd = nullptr);

enum class Activation { relu, tanh_fn, identity };

struct CNNEncoder {
  std::vector<std::size_t> widths;      // e.g. {2, 3, 4}
  std::size_t filters_per_width = 0;
  std::size_t input_dim = 0;
  std::vector<Tensor> weights;  // per width: [(width*input_dim) x filters]
  std::vector<Tensor> biases;   // per width: [filters]
  Activation activation = Activation::relu;

  std::size_t output_dim() const { return filters_per_width * widths.size(); }

  static CNNEncoder init(std::size_t input_dim, std::vector<std::size_t> widths,
                         std::size_t filters_per_width, Rng& rng,
                         Activation activation = Activation::relu);
};

// Per-width convolution + bias + activation over seq [T x input_dim].
// Requires T >= max(width); callers pad shorter sequences first.
std::vector<Tensor> conv1d_bank(Tape& tape, const CNNEncoder& enc, const Tensor& seq);

// conv1d_bank -> max pooling over time per width -> concatenation.
// Sequences shorter than the largest filter width are right-padded with zero
// rows, so the output dimension is the same for every utterance length.
Tensor cnn_encode(Tape& tape, const CNNEncoder& enc, const Tensor& seq);

struct DenseLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  static DenseLayer init(std::size_t in, std::size_t out, Rng& rng);
};

Tensor dense(Tape& tape, const DenseLayer& layer, const Tensor& x);

}  // namespace spkdlg
