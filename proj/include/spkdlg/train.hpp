#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spkdlg/eval.hpp"
#include "spkdlg/model.hpp"

namespace spkdlg {

// Sum over labels of binary cross-entropy, probabilities clipped at 1e-7.
Tensor multilabel_xent(Tape& tape, const Tensor& probs,
                       std::span<const double> targets);

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                         AdamConfig config = {});

  // m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ; bias-corrected update.
  // Parameters without a populated gradient are treated as having g = 0.
  // A non-finite gradient aborts with the offending parameter's name.
  void step();

  void zero_grad();

  // Scales all populated gradients so their global L2 norm is at most
  // max_norm; returns the norm before clipping.
  double clip_global_norm(double max_norm);

  std::size_t step_count() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  std::size_t t_ = 0;
};

enum class Task { lu, policy, joint };

std::string task_name(Task task);
Task parse_task(std::string_view name);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool early_stop = false;  // not supported; training always runs all epochs
  double learning_rate = 1e-3;
  double clip_norm = 5.0;  // 0 disables gradient clipping
  Task task = Task::lu;
  bool verbose = false;
};

struct EpochStats {
  std::size_t epoch = 0;       // 1-based
  double train_loss = 0.0;     // mean objective per example (incl. guidance)
  double dev_lu_f1 = 0.0;
  double dev_policy_f1 = 0.0;
  double guidance_sum = 0.0;   // mean guidance term per example
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// Mini-batched Adam training of the configured task. Batches accumulate
// per-example gradients scaled by 1/|batch| (mean reduction), then clip and
// step. Single-threaded and bit-reproducible for a fixed seed.
TrainLog train_model(ModelBundle& bundle, const std::vector<Dialogue>& train,
                     const std::vector<Dialogue>& dev, const TrainConfig& config);

// epoch <tab> train_loss <tab> dev_LU_F1 <tab> dev_policy_F1
void write_metrics_tsv(const std::string& path, const TrainLog& log);
// epoch <tab> guidance term
void write_guidance_tsv(const std::string& path, const TrainLog& log);

}  // namespace spkdlg
