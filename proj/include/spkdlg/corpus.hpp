#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "spkdlg/layers.hpp"

namespace spkdlg {

enum class Role { tourist, guide };

std::string role_name(Role role);
Role parse_role(std::string_view name);  // throws on unknown role names

struct Turn {
  Role speaker = Role::tourist;
  std::string transcript;
  std::vector<int> tokens;            // filled by numericalization
  std::vector<std::string> intents;   // e.g. "QST_WHAT"; may be empty
};

struct Dialogue {
  std::string session_id;
  std::vector<Turn> turns;
};

// Dense bijection between label strings and output indices.
class LabelVocab {
 public:
  std::size_t add(const std::string& label);
  std::optional<std::size_t> find(const std::string& label) const;
  const std::string& name(std::size_t index) const;
  std::size_t size() const { return names_.size(); }

  std::vector<double> multi_hot(const std::vector<std::string>& labels) const;
  std::vector<std::string> from_multi_hot(const std::vector<double>& vec) const;

  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Token vocabulary with reserved entries: 0 = <pad>, 1 = <unk>.
class TokenVocab {
 public:
  TokenVocab();

  std::size_t add(const std::string& token);
  std::optional<std::size_t> find(const std::string& token) const;
  int id_or_unk(const std::string& token) const;
  const std::string& name(std::size_t index) const;
  std::size_t size() const { return names_.size(); }

  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lowercases, splits on whitespace, and breaks punctuation characters out as
// standalone tokens.
std::vector<std::string> tokenize(std::string_view text);

// One JSON record per line: {"session": ..., "speaker": "tourist"|"guide",
// "transcript": ..., "intents": [...]}. Records are grouped by session in
// order of first appearance; turn order within a session follows file order.
std::vector<Dialogue> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<Dialogue>& dialogues);

// Fills Turn::tokens from the transcripts.
void numericalize(std::vector<Dialogue>& dialogues, const TokenVocab& vocab);

// Vocabulary construction from a training split.
TokenVocab build_token_vocab(const std::vector<Dialogue>& dialogues,
                             std::size_t min_frequency = 1);
LabelVocab build_label_vocab(const std::vector<Dialogue>& dialogues);
// Labels of guide turns only (the policy task's output space).
LabelVocab build_action_vocab(const std::vector<Dialogue>& dialogues);

struct EmbeddingLoadStats {
  std::size_t hits = 0;
  std::size_t vocab_size = 0;
  double hit_rate = 0.0;
};

// Text format: one token per line, word followed by `table.dim` reals.
// Vocabulary misses keep their random initialization.
EmbeddingLoadStats load_pretrained_embeddings(const std::string& path,
                                              const TokenVocab& vocab,
                                              EmbeddingTable& table);

// ---------------------------------------------------------------------------
// Synthetic role-divergent dialogue generator.
//
// Each turn carries one intent label "<act>_<attr>". Acts are drawn uniformly
// and surface tokens are emitted from per-act word pools, so tokens reveal the
// act but never the attribute. The attribute is where history matters: with
// probability delta the speaker applies a role-specific rule to the last
// tourist act and last guide act, otherwise it echoes a session topic. The
// two role rules share marginals, so role identity is not recoverable from an
// unlabeled intent sequence.
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t sessions = 20;
  std::size_t turns_per_session = 12;
  double delta = 1.0;  // role-divergence strength in [0, 1]
  std::size_t num_acts = 4;
  std::size_t num_attrs = 3;
  std::size_t words_per_act = 6;
  std::size_t shared_words = 10;
  double act_word_prob = 0.75;  // per-token chance of an act-specific word
  double attr_noise = 0.1;      // chance the attribute rule is replaced by noise
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 6;
  std::uint64_t seed = 0;
};

struct SynthCorpus {
  std::vector<Dialogue> dialogues;
  nlohmann::json tables;  // generative tables, persisted for oracle computation
};

SynthCorpus generate_synthetic(const SynthSpec& spec);

// Writes the corpus to `path` and the tables to `path + ".tables.json"`.
void write_synthetic(const std::string& path, const SynthCorpus& corpus);

// Seeded session-level split (70/15/15 by default).
struct CorpusSplit {
  std::vector<Dialogue> train;
  std::vector<Dialogue> dev;
  std::vector<Dialogue> test;
};

CorpusSplit split_corpus(const std::vector<Dialogue>& dialogues, std::uint64_t seed,
                         double train_frac = 0.70, double dev_frac = 0.15);

}  // namespace spkdlg
