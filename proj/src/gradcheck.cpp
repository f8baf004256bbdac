#include "spkdlg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "spkdlg/model.hpp"

namespace spkdlg {

double finite_difference_max_rel_err(const std::function<double()>& f,
                                     Tensor param, std::span<const double> analytic,
                                     double step) {
  auto& values = param.values();
  double max_err = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = f();
    values[i] = saved - step;
    const double down = f();
    values[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double a = i < analytic.size() ? analytic[i] : 0.0;
    const double err = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1.0});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

GradCheckResult gradcheck(const std::string& name, std::span<const Tensor> params,
                          const std::function<Tensor(Tape&)>& loss_fn, double step) {
  Tape tape;
  Tensor loss = loss_fn(tape);
  tape.backward(loss);

  auto forward_only = [&loss_fn]() {
    Tape fresh;
    return loss_fn(fresh).scalar_value();
  };

  GradCheckResult result;
  result.name = name;
  const std::vector<double> zero;
  for (const Tensor& p : params) {
    std::span<const double> analytic =
        p.has_grad() ? std::span<const double>(p.grad()) : std::span<const double>(zero);
    const double err = finite_difference_max_rel_err(forward_only, p, analytic, step);
    result.max_rel_err = std::max(result.max_rel_err, err);
  }
  result.pass = result.max_rel_err <= kGradCheckTolerance;
  return result;
}

namespace {

// Project a tensor to a scalar with fixed pseudo-random weights so every
// output component contributes to the checked loss.
Tensor project(Tape& tape, const Tensor& x, Rng& rng) {
  Tensor weights = Tensor::uniform(x.shape(), -1.0, 1.0, rng, false);
  return tape.sum(tape.mul(x, weights));
}

ModelBundle toy_bundle(const ModelConfig& config, Rng& rng) {
  ModelBundle bundle;
  for (const char* w : {"what", "is", "the", "song", "sea"}) bundle.token_vocab.add(w);
  for (const char* l : {"QST_WHAT", "FOL_REC", "ACK_HOW"}) bundle.label_vocab.add(l);
  for (const char* a : {"RES_WHAT", "FOL_INFO"}) bundle.action_vocab.add(a);
  bundle.params = ModelParams::init(config, bundle.token_vocab.size(),
                                    bundle.label_vocab.size(),
                                    bundle.action_vocab.size(), rng);
  return bundle;
}

// Three-turn toy instance: tourist + guide history, tourist current turn.
std::vector<HistoryTurn> toy_history(std::size_t num_labels) {
  std::vector<HistoryTurn> history(2);
  history[0].role = Role::tourist;
  history[0].tokens = {2, 3, 4};
  history[0].intent_vector.assign(num_labels, 0.0);
  history[0].intent_vector[0] = 1.0;
  history[1].role = Role::guide;
  history[1].tokens = {5, 6, 2, 3};
  history[1].intent_vector.assign(num_labels, 0.0);
  history[1].intent_vector[1] = 1.0;
  return history;
}

GradCheckResult check_lu_loss(const std::string& name, const ModelConfig& config) {
  Rng rng(17);
  ModelBundle bundle = toy_bundle(config, rng);
  const ModelParams& params = bundle.params;

  const std::vector<HistoryTurn> history = toy_history(params.num_labels);
  const std::vector<int> current = {2, 3, 4, 5};
  std::vector<double> target(params.num_labels, 0.0);
  target[0] = 1.0;
  target[2] = 1.0;

  auto loss_fn = [&](Tape& tape) {
    HistoryEncoding enc = encode_history(tape, params, history);
    Tensor probs = forward_lu(tape, params, current, enc.summary);
    Tensor loss = tape.bce_sum(probs, target);
    if (params.config.intermediate_guidance) {
      std::vector<std::vector<double>> gold;
      for (const HistoryTurn& turn : history) gold.push_back(turn.intent_vector);
      loss = tape.add(loss, guidance_loss(tape, params, enc.sentence_encodings, gold));
    }
    return loss;
  };

  std::vector<Tensor> tensors;
  for (const auto& [pname, tensor] : params.named()) tensors.push_back(tensor);
  return gradcheck(name, tensors, loss_fn);
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite() {
  std::vector<GradCheckResult> results;

  // Each loss builder must be a pure function of its parameters; projection
  // weights are created from a fixed seed inside the builder.
  {
    Rng rng(1);
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng);
    Tensor b = Tensor::uniform({4, 2}, -1, 1, rng);
    results.push_back(gradcheck("matmul", std::vector<Tensor>{a, b}, [&](Tape& t) {
      Rng proj(2);
      return project(t, t.matmul(a, b), proj);
    }));
  }
  {
    Rng rng(3);
    Tensor v = Tensor::uniform({4}, -1, 1, rng);
    Tensor m = Tensor::uniform({4, 3}, -1, 1, rng);
    results.push_back(gradcheck("matmul_vec", std::vector<Tensor>{v, m}, [&](Tape& t) {
      Rng proj(4);
      return project(t, t.matmul(v, m), proj);
    }));
  }
  {
    Rng rng(5);
    Tensor a = Tensor::uniform({2, 3}, -1, 1, rng);
    Tensor b = Tensor::uniform({2, 3}, -1, 1, rng);
    Tensor row = Tensor::uniform({3}, -1, 1, rng);
    Tensor scalar = Tensor::uniform({1}, -1, 1, rng);
    results.push_back(gradcheck(
        "elementwise", std::vector<Tensor>{a, b, row, scalar}, [&](Tape& t) {
          Rng proj(6);
          Tensor sum = t.add(a, b);
          Tensor diff = t.sub(sum, row);      // row broadcast
          Tensor prod = t.mul(diff, scalar);  // scalar broadcast
          Tensor mixed = t.mul(prod, b);
          return project(t, mixed, proj);
        }));
  }
  {
    Rng rng(7);
    Tensor x = Tensor::uniform({5}, -2, 2, rng);
    results.push_back(gradcheck("activations", std::vector<Tensor>{x}, [&](Tape& t) {
      Rng proj(8);
      Tensor y = t.add(t.sigmoid(x), t.add(t.tanh(x), t.relu(x)));
      return project(t, y, proj);
    }));
  }
  {
    Rng rng(9);
    Tensor a = Tensor::uniform({3}, -1, 1, rng);
    Tensor b = Tensor::uniform({2}, -1, 1, rng);
    Tensor c = Tensor::uniform({2, 2}, -1, 1, rng);
    Tensor d = Tensor::uniform({2, 3}, -1, 1, rng);
    results.push_back(gradcheck(
        "concat", std::vector<Tensor>{a, b, c, d}, [&](Tape& t) {
          Rng proj(10);
          const Tensor flat[] = {a, b};
          const Tensor wide[] = {c, d};
          return t.add(project(t, t.concat(flat, 0), proj),
                       project(t, t.concat(wide, 1), proj));
        }));
  }
  {
    Rng rng(11);
    Tensor r0 = Tensor::uniform({3}, -1, 1, rng);
    Tensor r1 = Tensor::uniform({3}, -1, 1, rng);
    results.push_back(gradcheck(
        "stack_rows_row", std::vector<Tensor>{r0, r1}, [&](Tape& t) {
          Rng proj(12);
          const Tensor rows[] = {r0, r1, r0};
          Tensor m = t.stack_rows(rows);
          return t.add(project(t, m, proj), project(t, t.row(m, 1), proj));
        }));
  }
  {
    Rng rng(13);
    Tensor seq = Tensor::uniform({4, 3}, -1, 1, rng);
    results.push_back(gradcheck("max_over_time", std::vector<Tensor>{seq}, [&](Tape& t) {
      Rng proj(14);
      return project(t, t.max_over_time(seq), proj);
    }));
  }
  {
    Rng rng(15);
    Tensor seq = Tensor::uniform({5, 3}, -1, 1, rng);
    Tensor filters = Tensor::uniform({6, 4}, -1, 1, rng);
    results.push_back(gradcheck(
        "conv1d", std::vector<Tensor>{seq, filters}, [&](Tape& t) {
          Rng proj(16);
          return project(t, t.conv1d(seq, filters, 2), proj);
        }));
  }
  {
    Rng rng(17);
    Tensor table = Tensor::uniform({6, 3}, -1, 1, rng);
    const std::vector<int> ids = {2, 4, 2};
    results.push_back(gradcheck("embed", std::vector<Tensor>{table}, [&](Tape& t) {
      Rng proj(18);
      return project(t, t.embed(table, ids, true), proj);
    }));
  }
  {
    Rng rng(19);
    Tensor logits = Tensor::uniform({4}, -2, 2, rng);
    const std::vector<double> targets = {1.0, 0.0, 1.0, 0.0};
    results.push_back(gradcheck("bce_sum", std::vector<Tensor>{logits}, [&](Tape& t) {
      return t.bce_sum(t.sigmoid(logits), targets);
    }));
  }
  {
    Rng rng(21);
    Tensor x = Tensor::uniform({5}, -1, 1, rng);
    results.push_back(gradcheck("sum_scale", std::vector<Tensor>{x}, [&](Tape& t) {
      return t.scale(t.sum(t.mul(x, x)), 0.5);
    }));
  }
  {
    Rng rng(23);
    LSTMCellParams cell = LSTMCellParams::init(3, 2, rng);
    Tensor x = Tensor::uniform({3}, -1, 1, rng);
    Tensor h0 = Tensor::uniform({2}, -1, 1, rng);
    Tensor c0 = Tensor::uniform({2}, -1, 1, rng);
    std::vector<Tensor> tensors = {cell.w_input, cell.w_forget, cell.w_output,
                                   cell.w_cell,  cell.b_input,  cell.b_forget,
                                   cell.b_output, cell.b_cell,  x};
    results.push_back(gradcheck("lstm_step", tensors, [&](Tape& t) {
      Rng proj(24);
      LSTMState state = lstm_step(t, cell, x, {h0, c0});
      return t.add(project(t, state.h, proj), project(t, state.c, proj));
    }));
  }
  {
    Rng rng(25);
    BLSTMEncoder enc = BLSTMEncoder::init(3, 2, rng);
    std::vector<Tensor> seq = {Tensor::uniform({3}, -1, 1, rng),
                               Tensor::uniform({3}, -1, 1, rng),
                               Tensor::uniform({3}, -1, 1, rng)};
    Tensor init = Tensor::uniform({2}, -1, 1, rng);
    std::vector<Tensor> tensors = seq;
    tensors.push_back(init);
    tensors.push_back(enc.forward_cell.w_input);
    tensors.push_back(enc.forward_cell.w_cell);
    tensors.push_back(enc.backward_cell.w_forget);
    tensors.push_back(enc.backward_cell.b_output);
    results.push_back(gradcheck("blstm_encode", tensors, [&](Tape& t) {
      Rng proj(26);
      return project(t, blstm_encode(t, enc, seq, &init, &init), proj);
    }));
  }
  {
    Rng rng(27);
    CNNEncoder enc = CNNEncoder::init(3, {2, 3}, 2, rng);
    Tensor seq = Tensor::uniform({2, 3}, -1, 1, rng);  // shorter than widest filter
    std::vector<Tensor> tensors = {seq};
    for (const Tensor& w : enc.weights) tensors.push_back(w);
    for (const Tensor& b : enc.biases) tensors.push_back(b);
    results.push_back(gradcheck("cnn_encode", tensors, [&](Tape& t) {
      Rng proj(28);
      return project(t, cnn_encode(t, enc, seq), proj);
    }));
  }

  {
    ModelConfig config;
    config.history_mode = HistoryMode::semantic;
    config.hidden_dim = 3;
    config.embedding_dim = 4;
    config.history_window = 3;
    results.push_back(check_lu_loss("lu_loss_semantic_pooled", config));
  }
  {
    ModelConfig config;
    config.history_mode = HistoryMode::natural_language;
    config.role_split = true;
    config.intermediate_guidance = true;
    config.hidden_dim = 3;
    config.embedding_dim = 4;
    config.cnn_filters = 2;
    config.cnn_widths = {2, 3};
    config.history_window = 3;
    results.push_back(check_lu_loss("lu_loss_nl_role_split_guidance", config));
  }

  return results;
}

}  // namespace spkdlg
