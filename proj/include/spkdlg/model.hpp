#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spkdlg/corpus.hpp"
#include "spkdlg/layers.hpp"
#include "spkdlg/tensor.hpp"

namespace spkdlg {

enum class HistoryMode { none, semantic, natural_language };
enum class PolicyInput { words, tags };

std::string history_mode_name(HistoryMode mode);
HistoryMode parse_history_mode(std::string_view name);  // none | sem | nl

struct ModelConfig {
  HistoryMode history_mode = HistoryMode::none;
  bool role_split = false;
  bool intermediate_guidance = false;
  std::size_t history_window = 5;
  double threshold = 0.5;
  std::size_t hidden_dim = 128;
  std::size_t embedding_dim = 200;
  std::size_t cnn_filters = 128;
  std::vector<std::size_t> cnn_widths = {2, 3, 4};
  PolicyInput policy_input = PolicyInput::words;
  // Alternative wiring for the history summary: concatenate the projection to
  // every timestep input instead of initializing the hidden states.
  bool concat_history_to_inputs = false;

  void validate() const;
};

// One history utterance as the model consumes it: the speaker role plus both
// payload forms (the mode picks which one is read).
struct HistoryTurn {
  Role role = Role::tourist;
  std::vector<double> intent_vector;  // multi-hot over the label vocabulary
  std::vector<int> tokens;
};

struct ModelParams {
  ModelConfig config;
  std::size_t num_labels = 0;
  std::size_t num_actions = 0;

  EmbeddingTable embedding;
  BLSTMEncoder current_encoder;
  std::optional<BLSTMEncoder> history_pooled;
  std::optional<BLSTMEncoder> history_tourist;
  std::optional<BLSTMEncoder> history_guide;
  std::optional<CNNEncoder> sentence_encoder;
  DenseLayer history_proj;  // maps the 2H history summary to an H-dim h0
  DenseLayer lu_head;
  DenseLayer policy_head;
  std::optional<DenseLayer> guidance_head;

  static ModelParams init(const ModelConfig& config, std::size_t num_tokens,
                          std::size_t num_labels, std::size_t num_actions,
                          Rng& rng);

  // Stable name -> tensor enumeration; every parameter appears exactly once.
  std::vector<std::pair<std::string, Tensor>> named() const;

  std::size_t history_input_dim() const;
  Tensor zero_history_summary() const;
};

struct HistoryEncoding {
  Tensor summary;                         // v_his, [2H]
  std::vector<Tensor> sentence_encodings; // chronological, NL mode only
};

// Pooled mode runs one BLSTM over the full intent sequence; role-split mode
// encodes each role's subsequence with its own BLSTM and sums the summaries.
// An empty history (or empty role partition) contributes a zero vector.
Tensor encode_history_semantic(Tape& tape, const ModelParams& params,
                               std::span<const HistoryTurn> history);

HistoryEncoding encode_history_nl(Tape& tape, const ModelParams& params,
                                  std::span<const HistoryTurn> history);

HistoryEncoding encode_history(Tape& tape, const ModelParams& params,
                               std::span<const HistoryTurn> history);

// v_cur: BLSTM over the embedded utterance, conditioned on the projected
// history summary through the initial hidden states of both directions.
Tensor encode_current(Tape& tape, const ModelParams& params,
                      std::span<const int> tokens, const Tensor& history_summary);

Tensor lu_output(Tape& tape, const ModelParams& params, const Tensor& v_cur);
Tensor policy_output(Tape& tape, const ModelParams& params, const Tensor& v_cur);

Tensor forward_lu(Tape& tape, const ModelParams& params,
                  std::span<const int> tokens, const Tensor& history_summary);
Tensor forward_policy(Tape& tape, const ModelParams& params,
                      std::span<const int> tokens, const Tensor& history_summary);

// Baseline variant: the policy head reads the current utterance's gold intent
// tags instead of the encoded words (no context).
Tensor forward_policy_tags(Tape& tape, const ModelParams& params,
                           const std::vector<double>& current_tags);

struct JointOutput {
  Tensor lu;
  Tensor policy;
};

// Runs both heads over a single encoding of the current utterance.
JointOutput joint_forward(Tape& tape, const ModelParams& params,
                          std::span<const int> tokens, const Tensor& history_summary);

// {k : o_k > threshold}; an empty prediction is legal.
std::set<std::size_t> predict_labels(const std::vector<double>& outputs,
                                     double threshold);

// Sum over history utterances of the multi-label cross-entropy between the
// guidance head's prediction and that utterance's gold intents. Training-time
// only; prediction never calls this.
Tensor guidance_loss(Tape& tape, const ModelParams& params,
                     const std::vector<Tensor>& sentence_encodings,
                     std::span<const std::vector<double>> gold_intents);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct ModelBundle {
  ModelParams params;
  TokenVocab token_vocab;
  LabelVocab label_vocab;
  LabelVocab action_vocab;
};

inline constexpr char kCheckpointMagic[] = "SPKDLG1";

void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Task examples
// ---------------------------------------------------------------------------

struct TaskExample {
  std::string session;
  std::size_t turn_index = 0;
  std::vector<HistoryTurn> history;  // up to history_window preceding turns
  std::vector<int> tokens;           // current utterance
  std::vector<double> current_tags;  // current turn's gold intents, multi-hot
  std::vector<double> target;        // multi-hot training target
  std::set<std::size_t> gold;        // gold label indices for F1
};

// LU: every tourist turn; target = that turn's intents.
std::vector<TaskExample> build_lu_examples(std::span<const Dialogue> dialogues,
                                           const ModelBundle& bundle);

// Policy: every tourist turn immediately followed by a guide turn;
// target = the following guide turn's intents.
std::vector<TaskExample> build_policy_examples(std::span<const Dialogue> dialogues,
                                               const ModelBundle& bundle);

}  // namespace spkdlg
