#include "spkdlg/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace spkdlg {

Tensor multilabel_xent(Tape& tape, const Tensor& probs,
                       std::span<const double> targets) {
  return tape.bce_sum(probs, std::vector<double>(targets.begin(), targets.end()));
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                             AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& [name, tensor] : params_) {
    m_.emplace_back(tensor.size(), 0.0);
    v_.emplace_back(tensor.size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& [name, tensor] = params_[p];
    if (!tensor.requires_grad()) continue;
    const bool has_grad = tensor.has_grad();
    const std::vector<double>* grad = has_grad ? &tensor.grad() : nullptr;
    auto& values = tensor.values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? (*grad)[i] : 0.0;
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam: non-finite gradient in parameter '" +
                                 name + "'");
      }
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= config_.alpha * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, tensor] : params_) tensor.clear_grad();
}

double AdamOptimizer::clip_global_norm(double max_norm) {
  double sum_sq = 0.0;
  for (const auto& [name, tensor] : params_) {
    if (!tensor.has_grad()) continue;
    for (double g : tensor.grad()) sum_sq += g * g;
  }
  const double norm = std::sqrt(sum_sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, tensor] : params_) {
      if (!tensor.has_grad()) continue;
      for (double& g : tensor.grad()) g *= scale;
    }
  }
  return norm;
}

std::string task_name(Task task) {
  switch (task) {
    case Task::lu: return "lu";
    case Task::policy: return "policy";
    case Task::joint: return "joint";
  }
  return "lu";
}

Task parse_task(std::string_view name) {
  if (name == "lu") return Task::lu;
  if (name == "policy") return Task::policy;
  if (name == "joint") return Task::joint;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

namespace {

struct ExampleLoss {
  Tensor total;
  double guidance_value = 0.0;
};

ExampleLoss example_loss(Tape& tape, const ModelParams& params,
                         const TaskExample& ex, Task task) {
  ExampleLoss out;
  Tensor task_loss;

  HistoryEncoding history;
  const bool tags_only =
      task == Task::policy && params.config.policy_input == PolicyInput::tags;
  if (!tags_only) history = encode_history(tape, params, ex.history);

  switch (task) {
    case Task::lu: {
      Tensor probs = lu_output(tape, params,
                               encode_current(tape, params, ex.tokens, history.summary));
      task_loss = multilabel_xent(tape, probs, ex.target);
      break;
    }
    case Task::policy: {
      Tensor probs;
      if (tags_only) {
        probs = forward_policy_tags(tape, params, ex.current_tags);
      } else {
        probs = policy_output(
            tape, params, encode_current(tape, params, ex.tokens, history.summary));
      }
      task_loss = multilabel_xent(tape, probs, ex.target);
      break;
    }
    case Task::joint: {
      JointOutput both = joint_forward(tape, params, ex.tokens, history.summary);
      Tensor lu_loss = multilabel_xent(tape, both.lu, ex.current_tags);
      Tensor policy_loss = multilabel_xent(tape, both.policy, ex.target);
      task_loss = tape.add(lu_loss, policy_loss);
      break;
    }
  }

  if (params.config.intermediate_guidance && !tags_only) {
    std::vector<std::vector<double>> gold;
    gold.reserve(ex.history.size());
    for (const HistoryTurn& turn : ex.history) gold.push_back(turn.intent_vector);
    Tensor guidance = guidance_loss(tape, params, history.sentence_encodings, gold);
    out.guidance_value = guidance.scalar_value();
    task_loss = tape.add(task_loss, guidance);
  }

  out.total = task_loss;
  return out;
}

}  // namespace

TrainLog train_model(ModelBundle& bundle, const std::vector<Dialogue>& train,
                     const std::vector<Dialogue>& dev, const TrainConfig& config) {
  if (config.batch_size == 0 || config.epochs == 0) {
    throw std::invalid_argument("train: batch_size and epochs must be positive");
  }
  if (config.early_stop) {
    throw std::invalid_argument("train: early stopping is not supported");
  }
  if (train.empty()) throw std::invalid_argument("train: empty corpus");
  if (config.task == Task::joint &&
      bundle.params.config.policy_input == PolicyInput::tags) {
    throw std::invalid_argument("train: joint task is incompatible with tags input");
  }

  std::vector<TaskExample> examples = config.task == Task::lu
                                          ? build_lu_examples(train, bundle)
                                          : build_policy_examples(train, bundle);
  if (examples.empty()) {
    throw std::invalid_argument("train: corpus yields no examples for task " +
                                task_name(config.task));
  }

  AdamConfig adam;
  adam.alpha = config.learning_rate;
  AdamOptimizer optimizer(bundle.params.named(), adam);
  optimizer.zero_grad();

  Rng shuffle_rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) shuffle_rng.shuffle(order);

    double loss_total = 0.0;
    double guidance_total = 0.0;

    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(cursor + config.batch_size, order.size());
      const double inv_batch = 1.0 / double(batch_end - cursor);
      for (; cursor < batch_end; ++cursor) {
        Tape tape;
        ExampleLoss loss =
            example_loss(tape, bundle.params, examples[order[cursor]], config.task);
        loss_total += loss.total.scalar_value();
        guidance_total += loss.guidance_value;
        tape.backward(tape.scale(loss.total, inv_batch));
      }
      optimizer.clip_global_norm(config.clip_norm);
      optimizer.step();
      optimizer.zero_grad();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_total / double(examples.size());
    stats.guidance_sum = guidance_total / double(examples.size());
    if (!dev.empty()) {
      const EvalResult dev_result = evaluate_bundle(bundle, dev);
      stats.dev_lu_f1 = dev_result.lu_f1;
      stats.dev_policy_f1 = dev_result.policy_f1;
    }
    if (config.verbose) {
      std::fprintf(stderr, "epoch %zu loss %.6f dev_lu %.4f dev_policy %.4f\n",
                   stats.epoch, stats.train_loss, stats.dev_lu_f1,
                   stats.dev_policy_f1);
    }
    log.epochs.push_back(stats);
  }
  return log;
}

void write_metrics_tsv(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  char line[128];
  for (const EpochStats& stats : log.epochs) {
    std::snprintf(line, sizeof(line), "%zu\t%.6f\t%.6f\t%.6f\n", stats.epoch,
                  stats.train_loss, stats.dev_lu_f1, stats.dev_policy_f1);
    out << line;
  }
}

void write_guidance_tsv(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  char line[64];
  for (const EpochStats& stats : log.epochs) {
    std::snprintf(line, sizeof(line), "%zu\t%.6f\n", stats.epoch, stats.guidance_sum);
    out << line;
  }
}

}  // namespace spkdlg
