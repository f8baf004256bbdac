#include "spkdlg/model.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace spkdlg {

std::string history_mode_name(HistoryMode mode) {
  switch (mode) {
    case HistoryMode::none: return "none";
    case HistoryMode::semantic: return "sem";
    case HistoryMode::natural_language: return "nl";
  }
  return "none";
}

HistoryMode parse_history_mode(std::string_view name) {
  if (name == "none") return HistoryMode::none;
  if (name == "sem") return HistoryMode::semantic;
  if (name == "nl") return HistoryMode::natural_language;
  throw std::invalid_argument("unknown history mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("config: threshold must lie in (0,1)");
  }
  if (intermediate_guidance && history_mode != HistoryMode::natural_language) {
    throw std::invalid_argument(
        "config: intermediate guidance requires the natural-language history mode");
  }
  if (history_window == 0) {
    throw std::invalid_argument("config: history window must be positive");
  }
  if (hidden_dim == 0 || embedding_dim == 0) {
    throw std::invalid_argument("config: zero model dimension");
  }
  if (history_mode == HistoryMode::natural_language &&
      (cnn_filters == 0 || cnn_widths.empty())) {
    throw std::invalid_argument("config: NL mode needs CNN filters");
  }
}

std::size_t ModelParams::history_input_dim() const {
  switch (config.history_mode) {
    case HistoryMode::semantic: return num_labels;
    case HistoryMode::natural_language:
      return config.cnn_filters * config.cnn_widths.size();
    case HistoryMode::none: return 0;
  }
  return 0;
}

Tensor ModelParams::zero_history_summary() const {
  return Tensor::zeros({2 * config.hidden_dim});
}

ModelParams ModelParams::init(const ModelConfig& config, std::size_t num_tokens,
                              std::size_t num_labels, std::size_t num_actions,
                              Rng& rng) {
  config.validate();
  ModelParams params;
  params.config = config;
  params.num_labels = num_labels;
  params.num_actions = num_actions;

  const std::size_t hidden = config.hidden_dim;

  params.embedding = EmbeddingTable::init(num_tokens, config.embedding_dim, rng);

  const std::size_t current_input =
      config.embedding_dim + (config.concat_history_to_inputs ? hidden : 0);
  params.current_encoder = BLSTMEncoder::init(current_input, hidden, rng);

  if (config.history_mode == HistoryMode::natural_language) {
    params.sentence_encoder = CNNEncoder::init(config.embedding_dim, config.cnn_widths,
                                               config.cnn_filters, rng);
  }
  if (config.history_mode != HistoryMode::none) {
    const std::size_t in = params.history_input_dim();
    if (config.role_split) {
      params.history_tourist = BLSTMEncoder::init(in, hidden, rng);
      params.history_guide = BLSTMEncoder::init(in, hidden, rng);
    } else {
      params.history_pooled = BLSTMEncoder::init(in, hidden, rng);
    }
  }

  params.history_proj = DenseLayer::init(2 * hidden, hidden, rng);
  params.lu_head = DenseLayer::init(2 * hidden, num_labels, rng);
  if (config.policy_input == PolicyInput::tags) {
    params.policy_head = DenseLayer::init(num_labels, num_actions, rng);
  } else {
    params.policy_head = DenseLayer::init(2 * hidden, num_actions, rng);
  }
  if (config.intermediate_guidance) {
    params.guidance_head =
        DenseLayer::init(params.sentence_encoder->output_dim(), num_labels, rng);
  }
  return params;
}

namespace {

void push_cell(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix, const LSTMCellParams& cell) {
  out.emplace_back(prefix + ".w_input", cell.w_input);
  out.emplace_back(prefix + ".w_forget", cell.w_forget);
  out.emplace_back(prefix + ".w_output", cell.w_output);
  out.emplace_back(prefix + ".w_cell", cell.w_cell);
  out.emplace_back(prefix + ".b_input", cell.b_input);
  out.emplace_back(prefix + ".b_forget", cell.b_forget);
  out.emplace_back(prefix + ".b_output", cell.b_output);
  out.emplace_back(prefix + ".b_cell", cell.b_cell);
}

void push_blstm(std::vector<std::pair<std::string, Tensor>>& out,
                const std::string& prefix, const BLSTMEncoder& enc) {
  push_cell(out, prefix + ".fwd", enc.forward_cell);
  push_cell(out, prefix + ".bwd", enc.backward_cell);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding.weight", embedding.weights);
  push_blstm(out, "current", current_encoder);
  if (history_pooled) push_blstm(out, "history.pooled", *history_pooled);
  if (history_tourist) push_blstm(out, "history.tourist", *history_tourist);
  if (history_guide) push_blstm(out, "history.guide", *history_guide);
  if (sentence_encoder) {
    for (std::size_t i = 0; i < sentence_encoder->widths.size(); ++i) {
      const std::string prefix =
          "cnn.width" + std::to_string(sentence_encoder->widths[i]);
      out.emplace_back(prefix + ".weight", sentence_encoder->weights[i]);
      out.emplace_back(prefix + ".bias", sentence_encoder->biases[i]);
    }
  }
  out.emplace_back("history_proj.weight", history_proj.weight);
  out.emplace_back("history_proj.bias", history_proj.bias);
  out.emplace_back("lu.weight", lu_head.weight);
  out.emplace_back("lu.bias", lu_head.bias);
  out.emplace_back("policy.weight", policy_head.weight);
  out.emplace_back("policy.bias", policy_head.bias);
  if (guidance_head) {
    out.emplace_back("guidance.weight", guidance_head->weight);
    out.emplace_back("guidance.bias", guidance_head->bias);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward paths
// ---------------------------------------------------------------------------

namespace {

Tensor encode_partition(Tape& tape, const BLSTMEncoder& enc,
                        const std::vector<Tensor>& seq, std::size_t hidden) {
  if (seq.empty()) return Tensor::zeros({2 * hidden});
  return blstm_encode(tape, enc, seq);
}

}  // namespace

Tensor encode_history_semantic(Tape& tape, const ModelParams& params,
                               std::span<const HistoryTurn> history) {
  if (params.config.history_mode != HistoryMode::semantic) {
    throw std::logic_error("encode_history_semantic: model is not in semantic mode");
  }
  const std::size_t hidden = params.config.hidden_dim;
  if (history.empty()) return params.zero_history_summary();

  std::vector<Tensor> tourist_seq, guide_seq, pooled_seq;
  for (const HistoryTurn& turn : history) {
    if (turn.intent_vector.size() != params.num_labels) {
      throw std::invalid_argument(
          "encode_history_semantic: intent vector of size " +
          std::to_string(turn.intent_vector.size()) + ", expected " +
          std::to_string(params.num_labels));
    }
    Tensor v = Tensor::from_values({params.num_labels}, turn.intent_vector);
    if (params.config.role_split) {
      (turn.role == Role::tourist ? tourist_seq : guide_seq).push_back(v);
    } else {
      pooled_seq.push_back(v);
    }
  }

  if (!params.config.role_split) {
    return blstm_encode(tape, *params.history_pooled, pooled_seq);
  }
  Tensor tourist_summary =
      encode_partition(tape, *params.history_tourist, tourist_seq, hidden);
  Tensor guide_summary =
      encode_partition(tape, *params.history_guide, guide_seq, hidden);
  return tape.add(tourist_summary, guide_summary);
}

HistoryEncoding encode_history_nl(Tape& tape, const ModelParams& params,
                                  std::span<const HistoryTurn> history) {
  if (params.config.history_mode != HistoryMode::natural_language) {
    throw std::logic_error("encode_history_nl: model is not in NL mode");
  }
  const std::size_t hidden = params.config.hidden_dim;
  HistoryEncoding out;
  if (history.empty()) {
    out.summary = params.zero_history_summary();
    return out;
  }

  // One shared sentence encoder for every utterance.
  std::vector<Tensor> tourist_seq, guide_seq, pooled_seq;
  for (const HistoryTurn& turn : history) {
    if (turn.tokens.empty()) {
      throw std::invalid_argument("encode_history_nl: history utterance without tokens");
    }
    Tensor emb = embed(tape, params.embedding, turn.tokens);
    Tensor sentence = cnn_encode(tape, *params.sentence_encoder, emb);
    out.sentence_encodings.push_back(sentence);
    if (params.config.role_split) {
      (turn.role == Role::tourist ? tourist_seq : guide_seq).push_back(sentence);
    } else {
      pooled_seq.push_back(sentence);
    }
  }

  if (!params.config.role_split) {
    out.summary = blstm_encode(tape, *params.history_pooled, pooled_seq);
    return out;
  }
  Tensor tourist_summary =
      encode_partition(tape, *params.history_tourist, tourist_seq, hidden);
  Tensor guide_summary =
      encode_partition(tape, *params.history_guide, guide_seq, hidden);
  out.summary = tape.add(tourist_summary, guide_summary);
  return out;
}

HistoryEncoding encode_history(Tape& tape, const ModelParams& params,
                               std::span<const HistoryTurn> history) {
  switch (params.config.history_mode) {
    case HistoryMode::none:
      return {params.zero_history_summary(), {}};
    case HistoryMode::semantic:
      return {encode_history_semantic(tape, params, history), {}};
    case HistoryMode::natural_language:
      return encode_history_nl(tape, params, history);
  }
  return {params.zero_history_summary(), {}};
}

Tensor encode_current(Tape& tape, const ModelParams& params,
                      std::span<const int> tokens, const Tensor& history_summary) {
  if (tokens.empty()) {
    throw std::invalid_argument("encode_current: empty utterance");
  }
  if (history_summary.rank() != 1 ||
      history_summary.dim(0) != 2 * params.config.hidden_dim) {
    throw std::invalid_argument("encode_current: history summary has shape " +
                                shape_str(history_summary.shape()));
  }
  Tensor context = dense(tape, params.history_proj, history_summary);  // [H]
  Tensor emb = embed(tape, params.embedding, tokens);

  std::vector<Tensor> seq;
  seq.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Tensor x = tape.row(emb, t);
    if (params.config.concat_history_to_inputs) {
      const Tensor parts[] = {x, context};
      x = tape.concat(parts, 0);
    }
    seq.push_back(x);
  }

  if (params.config.concat_history_to_inputs) {
    return blstm_encode(tape, params.current_encoder, seq);
  }
  return blstm_encode(tape, params.current_encoder, seq, &context, &context);
}

Tensor lu_output(Tape& tape, const ModelParams& params, const Tensor& v_cur) {
  return tape.sigmoid(dense(tape, params.lu_head, v_cur));
}

Tensor policy_output(Tape& tape, const ModelParams& params, const Tensor& v_cur) {
  if (params.config.policy_input != PolicyInput::words) {
    throw std::logic_error("policy_output: model predicts from intent tags");
  }
  return tape.sigmoid(dense(tape, params.policy_head, v_cur));
}

Tensor forward_lu(Tape& tape, const ModelParams& params,
                  std::span<const int> tokens, const Tensor& history_summary) {
  return lu_output(tape, params, encode_current(tape, params, tokens, history_summary));
}

Tensor forward_policy(Tape& tape, const ModelParams& params,
                      std::span<const int> tokens, const Tensor& history_summary) {
  return policy_output(tape, params,
                       encode_current(tape, params, tokens, history_summary));
}

JointOutput joint_forward(Tape& tape, const ModelParams& params,
                          std::span<const int> tokens, const Tensor& history_summary) {
  Tensor v_cur = encode_current(tape, params, tokens, history_summary);
  return {lu_output(tape, params, v_cur), policy_output(tape, params, v_cur)};
}

Tensor forward_policy_tags(Tape& tape, const ModelParams& params,
                           const std::vector<double>& current_tags) {
  if (params.config.policy_input != PolicyInput::tags) {
    throw std::logic_error("forward_policy_tags: model predicts from words");
  }
  if (current_tags.size() != params.num_labels) {
    throw std::invalid_argument("forward_policy_tags: tag vector of size " +
                                std::to_string(current_tags.size()) + ", expected " +
                                std::to_string(params.num_labels));
  }
  Tensor tags = Tensor::from_values({params.num_labels}, current_tags);
  return tape.sigmoid(dense(tape, params.policy_head, tags));
}

std::set<std::size_t> predict_labels(const std::vector<double>& outputs,
                                     double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("predict_labels: threshold must lie in (0,1)");
  }
  std::set<std::size_t> labels;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (outputs[k] > threshold) labels.insert(k);
  }
  return labels;
}

Tensor guidance_loss(Tape& tape, const ModelParams& params,
                     const std::vector<Tensor>& sentence_encodings,
                     std::span<const std::vector<double>> gold_intents) {
  if (!params.guidance_head) {
    throw std::logic_error("guidance_loss: model has no guidance head");
  }
  if (sentence_encodings.size() != gold_intents.size()) {
    throw std::invalid_argument(
        "guidance_loss: " + std::to_string(sentence_encodings.size()) +
        " encodings vs " + std::to_string(gold_intents.size()) + " gold intent sets");
  }
  if (sentence_encodings.empty()) return Tensor::scalar(0.0);

  Tensor total;
  for (std::size_t t = 0; t < sentence_encodings.size(); ++t) {
    if (gold_intents[t].size() != params.num_labels) {
      throw std::invalid_argument("guidance_loss: gold intents of size " +
                                  std::to_string(gold_intents[t].size()) +
                                  ", expected " + std::to_string(params.num_labels));
    }
    Tensor probs =
        tape.sigmoid(dense(tape, *params.guidance_head, sentence_encodings[t]));
    Tensor l = tape.bce_sum(probs, gold_intents[t]);
    total = total.defined() ? tape.add(total, l) : l;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

void write_u8(std::ostream& out, std::uint8_t v) {
  out.put(static_cast<char>(v));
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  }
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

std::uint8_t read_u8(std::istream& in) {
  const int c = in.get();
  if (c == EOF) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint8_t>(c);
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

void write_vocab(std::ostream& out, const std::vector<std::string>& names) {
  write_u64(out, names.size());
  for (const auto& name : names) write_string(out, name);
}

std::vector<std::string> read_vocab(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::vector<std::string> names;
  names.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) names.push_back(read_string(in));
  return names;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);

  out.write(kCheckpointMagic, 7);
  write_u8(out, 1);  // format version

  const ModelConfig& config = bundle.params.config;
  write_u8(out, static_cast<std::uint8_t>(config.history_mode));
  write_u8(out, config.role_split ? 1 : 0);
  write_u8(out, config.intermediate_guidance ? 1 : 0);
  write_u8(out, static_cast<std::uint8_t>(config.policy_input));
  write_u8(out, config.concat_history_to_inputs ? 1 : 0);
  write_u64(out, config.history_window);
  write_f64(out, config.threshold);
  write_u64(out, config.hidden_dim);
  write_u64(out, config.embedding_dim);
  write_u64(out, config.cnn_filters);
  write_u64(out, config.cnn_widths.size());
  for (std::size_t w : config.cnn_widths) write_u64(out, w);

  write_vocab(out, bundle.token_vocab.names());
  write_vocab(out, bundle.label_vocab.names());
  write_vocab(out, bundle.action_vocab.names());

  const auto named = bundle.params.named();
  write_u64(out, named.size());
  for (const auto& [name, tensor] : named) {
    write_string(out, name);
    write_u64(out, tensor.rank());
    for (std::size_t d : tensor.shape()) write_u64(out, d);
    for (double v : tensor.values()) write_f64(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[7];
  in.read(magic, 7);
  if (!in || std::string(magic, 7) != kCheckpointMagic) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const std::uint8_t version = read_u8(in);
  if (version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }

  ModelConfig config;
  config.history_mode = static_cast<HistoryMode>(read_u8(in));
  config.role_split = read_u8(in) != 0;
  config.intermediate_guidance = read_u8(in) != 0;
  config.policy_input = static_cast<PolicyInput>(read_u8(in));
  config.concat_history_to_inputs = read_u8(in) != 0;
  config.history_window = read_u64(in);
  config.threshold = read_f64(in);
  config.hidden_dim = read_u64(in);
  config.embedding_dim = read_u64(in);
  config.cnn_filters = read_u64(in);
  config.cnn_widths.clear();
  const std::uint64_t n_widths = read_u64(in);
  for (std::uint64_t i = 0; i < n_widths; ++i) config.cnn_widths.push_back(read_u64(in));

  ModelBundle bundle;
  const auto token_names = read_vocab(in);
  if (token_names.size() < 2 || token_names[0] != "<pad>" || token_names[1] != "<unk>") {
    throw std::runtime_error("checkpoint: malformed token vocabulary");
  }
  for (std::size_t i = 2; i < token_names.size(); ++i) {
    bundle.token_vocab.add(token_names[i]);
  }
  for (const auto& name : read_vocab(in)) bundle.label_vocab.add(name);
  for (const auto& name : read_vocab(in)) bundle.action_vocab.add(name);

  Rng rng(0);
  bundle.params = ModelParams::init(config, bundle.token_vocab.size(),
                                    bundle.label_vocab.size(),
                                    bundle.action_vocab.size(), rng);

  auto named = bundle.params.named();
  std::unordered_map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : named) by_name.emplace(name, tensor);

  const std::uint64_t n_params = read_u64(in);
  if (n_params != named.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(named.size()) +
                             " parameters, file has " + std::to_string(n_params));
  }
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = read_string(in);
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
    }
    const std::uint64_t rank = read_u64(in);
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(read_u64(in));
    if (shape != it->second.shape()) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " +
                               shape_str(shape) + ", expected " +
                               shape_str(it->second.shape()));
    }
    for (double& v : it->second.values()) v = read_f64(in);
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Task examples
// ---------------------------------------------------------------------------

namespace {

std::vector<int> utterance_ids(const Turn& turn, const TokenVocab& vocab) {
  std::vector<int> ids;
  for (const std::string& token : tokenize(turn.transcript)) {
    ids.push_back(vocab.id_or_unk(token));
  }
  if (ids.empty()) ids.push_back(TokenVocab::kUnk);
  return ids;
}

std::set<std::size_t> gold_indices(const std::vector<std::string>& intents,
                                   const LabelVocab& vocab) {
  std::set<std::size_t> gold;
  std::size_t sentinel = vocab.size();
  for (const std::string& intent : intents) {
    if (auto id = vocab.find(intent)) {
      gold.insert(*id);
    } else {
      gold.insert(sentinel++);  // unseen label: counted against recall
    }
  }
  return gold;
}

std::vector<HistoryTurn> history_window(const Dialogue& dialogue, std::size_t current,
                                        const ModelBundle& bundle) {
  const std::size_t window = bundle.params.config.history_window;
  const std::size_t start = current > window ? current - window : 0;
  std::vector<HistoryTurn> history;
  for (std::size_t i = start; i < current; ++i) {
    const Turn& turn = dialogue.turns[i];
    HistoryTurn ht;
    ht.role = turn.speaker;
    ht.intent_vector = bundle.label_vocab.multi_hot(turn.intents);
    ht.tokens = utterance_ids(turn, bundle.token_vocab);
    history.push_back(std::move(ht));
  }
  return history;
}

}  // namespace

std::vector<TaskExample> build_lu_examples(std::span<const Dialogue> dialogues,
                                           const ModelBundle& bundle) {
  std::vector<TaskExample> examples;
  for (const Dialogue& dialogue : dialogues) {
    for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
      const Turn& turn = dialogue.turns[i];
      if (turn.speaker != Role::tourist) continue;
      TaskExample ex;
      ex.history = history_window(dialogue, i, bundle);
      ex.tokens = utterance_ids(turn, bundle.token_vocab);
      ex.current_tags = bundle.label_vocab.multi_hot(turn.intents);
      ex.target = bundle.label_vocab.multi_hot(turn.intents);
      ex.gold = gold_indices(turn.intents, bundle.label_vocab);
      examples.push_back(std::move(ex));
    }
  }
  return examples;
}

std::vector<TaskExample> build_policy_examples(std::span<const Dialogue> dialogues,
                                               const ModelBundle& bundle) {
  std::vector<TaskExample> examples;
  for (const Dialogue& dialogue : dialogues) {
    for (std::size_t i = 0; i + 1 < dialogue.turns.size(); ++i) {
      const Turn& turn = dialogue.turns[i];
      const Turn& next = dialogue.turns[i + 1];
      if (turn.speaker != Role::tourist || next.speaker != Role::guide) continue;
      TaskExample ex;
      ex.history = history_window(dialogue, i, bundle);
      ex.tokens = utterance_ids(turn, bundle.token_vocab);
      ex.current_tags = bundle.label_vocab.multi_hot(turn.intents);
      ex.target = bundle.action_vocab.multi_hot(next.intents);
      ex.gold = gold_indices(next.intents, bundle.action_vocab);
      examples.push_back(std::move(ex));
    }
  }
  return examples;
}

}  // namespace spkdlg
