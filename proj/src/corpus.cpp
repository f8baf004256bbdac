#include "spkdlg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spkdlg {

std::string role_name(Role role) {
  return role == Role::tourist ? "tourist" : "guide";
}

Role parse_role(std::string_view name) {
  if (name == "tourist") return Role::tourist;
  if (name == "guide") return Role::guide;
  throw std::invalid_argument("unknown role '" + std::string(name) + "'");
}

std::size_t LabelVocab::add(const std::string& label) {
  auto it = index_.find(label);
  if (it != index_.end()) return it->second;
  const std::size_t id = names_.size();
  names_.push_back(label);
  index_.emplace(label, id);
  return id;
}

std::optional<std::size_t> LabelVocab::find(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelVocab::name(std::size_t index) const {
  return names_.at(index);
}

std::vector<double> LabelVocab::multi_hot(const std::vector<std::string>& labels) const {
  std::vector<double> vec(names_.size(), 0.0);
  for (const auto& label : labels) {
    if (auto id = find(label)) vec[*id] = 1.0;
  }
  return vec;
}

std::vector<std::string> LabelVocab::from_multi_hot(const std::vector<double>& vec) const {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < vec.size() && i < names_.size(); ++i) {
    if (vec[i] > 0.5) labels.push_back(names_[i]);
  }
  return labels;
}

TokenVocab::TokenVocab() {
  names_ = {"<pad>", "<unk>"};
  index_ = {{"<pad>", 0}, {"<unk>", 1}};
}

std::size_t TokenVocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const std::size_t id = names_.size();
  names_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::optional<std::size_t> TokenVocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int TokenVocab::id_or_unk(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : static_cast<int>(it->second);
}

const std::string& TokenVocab::name(std::size_t index) const {
  return names_.at(index);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

namespace {

nlohmann::json turn_record(const std::string& session, std::size_t turn_index,
                           const Turn& turn) {
  nlohmann::json record;
  record["session"] = session;
  record["turn"] = turn_index;
  record["speaker"] = role_name(turn.speaker);
  record["transcript"] = turn.transcript;
  record["intents"] = turn.intents;
  return record;
}

[[noreturn]] void corpus_error(const std::string& path, std::size_t line,
                               const std::string& what) {
  throw std::runtime_error("corpus " + path + ": line " + std::to_string(line) +
                           ": " + what);
}

}  // namespace

std::vector<Dialogue> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open " + path);

  std::vector<Dialogue> dialogues;
  std::unordered_map<std::string, std::size_t> session_index;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;

    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      corpus_error(path, line_no, std::string("malformed record: ") + e.what());
    }
    if (!record.is_object()) corpus_error(path, line_no, "record is not an object");
    for (const char* field : {"session", "speaker", "transcript", "intents"}) {
      if (!record.contains(field)) {
        corpus_error(path, line_no, std::string("missing field '") + field + "'");
      }
    }
    if (!record["session"].is_string() || !record["speaker"].is_string() ||
        !record["transcript"].is_string() || !record["intents"].is_array()) {
      corpus_error(path, line_no, "field has wrong type");
    }

    Turn turn;
    try {
      turn.speaker = parse_role(record["speaker"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      corpus_error(path, line_no, e.what());
    }
    turn.transcript = record["transcript"].get<std::string>();
    for (const auto& intent : record["intents"]) {
      if (!intent.is_string()) corpus_error(path, line_no, "intent is not a string");
      turn.intents.push_back(intent.get<std::string>());
    }

    const std::string session = record["session"].get<std::string>();
    auto it = session_index.find(session);
    if (it == session_index.end()) {
      session_index.emplace(session, dialogues.size());
      dialogues.push_back(Dialogue{session, {}});
      it = session_index.find(session);
    }
    dialogues[it->second].turns.push_back(std::move(turn));
  }
  return dialogues;
}

void save_corpus(const std::string& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("corpus: cannot write " + path);
  for (const Dialogue& dialogue : dialogues) {
    for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
      out << turn_record(dialogue.session_id, i, dialogue.turns[i]).dump() << '\n';
    }
  }
}

void numericalize(std::vector<Dialogue>& dialogues, const TokenVocab& vocab) {
  for (Dialogue& dialogue : dialogues) {
    for (Turn& turn : dialogue.turns) {
      turn.tokens.clear();
      for (const std::string& token : tokenize(turn.transcript)) {
        turn.tokens.push_back(vocab.id_or_unk(token));
      }
    }
  }
}

TokenVocab build_token_vocab(const std::vector<Dialogue>& dialogues,
                             std::size_t min_frequency) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const Dialogue& dialogue : dialogues) {
    for (const Turn& turn : dialogue.turns) {
      for (const std::string& token : tokenize(turn.transcript)) ++counts[token];
    }
  }
  TokenVocab vocab;
  for (const Dialogue& dialogue : dialogues) {
    for (const Turn& turn : dialogue.turns) {
      for (const std::string& token : tokenize(turn.transcript)) {
        if (counts[token] >= min_frequency) vocab.add(token);
      }
    }
  }
  return vocab;
}

LabelVocab build_label_vocab(const std::vector<Dialogue>& dialogues) {
  LabelVocab vocab;
  for (const Dialogue& dialogue : dialogues) {
    for (const Turn& turn : dialogue.turns) {
      for (const std::string& intent : turn.intents) vocab.add(intent);
    }
  }
  return vocab;
}

LabelVocab build_action_vocab(const std::vector<Dialogue>& dialogues) {
  LabelVocab vocab;
  for (const Dialogue& dialogue : dialogues) {
    for (const Turn& turn : dialogue.turns) {
      if (turn.speaker != Role::guide) continue;
      for (const std::string& intent : turn.intents) vocab.add(intent);
    }
  }
  return vocab;
}

EmbeddingLoadStats load_pretrained_embeddings(const std::string& path,
                                              const TokenVocab& vocab,
                                              EmbeddingTable& table) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("embeddings: cannot open " + path);

  EmbeddingLoadStats stats;
  stats.vocab_size = vocab.size();

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> row;
    row.reserve(table.dim);
    double v;
    while (fields >> v) row.push_back(v);
    if (row.size() != table.dim) {
      throw std::runtime_error("embeddings " + path + ": line " +
                               std::to_string(line_no) + ": expected " +
                               std::to_string(table.dim) + " values, got " +
                               std::to_string(row.size()));
    }
    auto id = vocab.find(word);
    if (!id) continue;
    std::copy(row.begin(), row.end(),
              table.weights.values().begin() + *id * table.dim);
    ++stats.hits;
  }
  stats.hit_rate = vocab.size() ? double(stats.hits) / double(vocab.size()) : 0.0;
  return stats;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

const char* kActPool[] = {"QST", "FOL", "ACK", "EXP", "REQ", "INI", "CFM", "RES"};
const char* kAttrPool[] = {"WHAT", "WHERE", "WHEN", "HOW", "REC", "PRICE", "LOC", "TIME"};
const char* kFillerPool[] = {"uh", "well", "yeah", "so", "right", "okay",
                             "hmm", "like", "just", "then", "um", "see"};

std::string act_label(std::size_t i) {
  if (i < std::size(kActPool)) return kActPool[i];
  return "ACT" + std::to_string(i);
}

std::string attr_label(std::size_t i) {
  if (i < std::size(kAttrPool)) return kAttrPool[i];
  return "ATTR" + std::to_string(i);
}

std::string filler_word(std::size_t i) {
  if (i < std::size(kFillerPool)) return kFillerPool[i];
  return "filler" + std::to_string(i);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthSpec& spec) {
  if (spec.num_acts == 0 || spec.num_attrs == 0 || spec.turns_per_session == 0 ||
      spec.min_tokens == 0 || spec.min_tokens > spec.max_tokens ||
      spec.delta < 0.0 || spec.delta > 1.0) {
    throw std::invalid_argument("generate_synthetic: invalid spec");
  }

  const std::size_t acts = spec.num_acts;
  const std::size_t attrs = spec.num_attrs;

  // Role rules over (last tourist act, last guide act). Both have identical
  // output marginals under uniform inputs, so attribute values alone do not
  // identify the speaker.
  std::vector<std::vector<std::size_t>> tourist_rule(acts, std::vector<std::size_t>(acts));
  std::vector<std::vector<std::size_t>> guide_rule(acts, std::vector<std::size_t>(acts));
  for (std::size_t u = 0; u < acts; ++u) {
    for (std::size_t g = 0; g < acts; ++g) {
      tourist_rule[u][g] = (u + 2 * g) % attrs;
      guide_rule[u][g] = (2 * u + g) % attrs;
    }
  }

  std::vector<std::string> act_names, attr_names;
  for (std::size_t i = 0; i < acts; ++i) act_names.push_back(act_label(i));
  for (std::size_t i = 0; i < attrs; ++i) attr_names.push_back(attr_label(i));

  std::vector<std::vector<std::string>> act_words(acts);
  for (std::size_t a = 0; a < acts; ++a) {
    for (std::size_t w = 0; w < spec.words_per_act; ++w) {
      act_words[a].push_back(lower(act_names[a]) + "word" + std::to_string(w));
    }
  }
  std::vector<std::string> shared;
  for (std::size_t w = 0; w < spec.shared_words; ++w) shared.push_back(filler_word(w));

  Rng rng(spec.seed);
  SynthCorpus corpus;

  for (std::size_t s = 0; s < spec.sessions; ++s) {
    Dialogue dialogue;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "synth-%03zu", s);
      dialogue.session_id = buf;
    }
    const std::size_t topic = rng.uniform_int(attrs);
    long last_tourist_act = -1;
    long last_guide_act = -1;

    for (std::size_t t = 0; t < spec.turns_per_session; ++t) {
      Turn turn;
      turn.speaker = rng.bernoulli(0.5) ? Role::tourist : Role::guide;

      const std::size_t act = rng.uniform_int(acts);

      std::size_t attr;
      const bool role_mechanism = rng.bernoulli(spec.delta);
      if (rng.bernoulli(spec.attr_noise)) {
        attr = rng.uniform_int(attrs);
      } else if (role_mechanism) {
        if (last_tourist_act < 0 || last_guide_act < 0) {
          attr = rng.uniform_int(attrs);
        } else if (turn.speaker == Role::tourist) {
          attr = tourist_rule[last_tourist_act][last_guide_act];
        } else {
          attr = guide_rule[last_tourist_act][last_guide_act];
        }
      } else {
        attr = topic;
      }

      turn.intents.push_back(act_names[act] + "_" + attr_names[attr]);

      const std::size_t len =
          spec.min_tokens + rng.uniform_int(spec.max_tokens - spec.min_tokens + 1);
      std::string transcript;
      for (std::size_t i = 0; i < len; ++i) {
        const std::string& word =
            rng.bernoulli(spec.act_word_prob)
                ? act_words[act][rng.uniform_int(act_words[act].size())]
                : shared[rng.uniform_int(shared.size())];
        if (!transcript.empty()) transcript += ' ';
        transcript += word;
      }
      turn.transcript = std::move(transcript);

      if (turn.speaker == Role::tourist) {
        last_tourist_act = static_cast<long>(act);
      } else {
        last_guide_act = static_cast<long>(act);
      }
      dialogue.turns.push_back(std::move(turn));
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }

  nlohmann::json tables;
  tables["acts"] = act_names;
  tables["attrs"] = attr_names;
  tables["delta"] = spec.delta;
  tables["attr_noise"] = spec.attr_noise;
  tables["act_word_prob"] = spec.act_word_prob;
  tables["tourist_rule"] = tourist_rule;
  tables["guide_rule"] = guide_rule;
  tables["act_words"] = act_words;
  tables["shared_words"] = shared;
  tables["sessions"] = spec.sessions;
  tables["turns_per_session"] = spec.turns_per_session;
  tables["seed"] = spec.seed;
  corpus.tables = std::move(tables);
  return corpus;
}

void write_synthetic(const std::string& path, const SynthCorpus& corpus) {
  save_corpus(path, corpus.dialogues);
  std::ofstream out(path + ".tables.json");
  if (!out) throw std::runtime_error("corpus: cannot write " + path + ".tables.json");
  out << corpus.tables.dump(2) << '\n';
}

CorpusSplit split_corpus(const std::vector<Dialogue>& dialogues, std::uint64_t seed,
                         double train_frac, double dev_frac) {
  std::vector<std::size_t> order(dialogues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = dialogues.size();
  std::size_t n_train = static_cast<std::size_t>(std::floor(train_frac * double(n)));
  std::size_t n_dev = static_cast<std::size_t>(std::floor(dev_frac * double(n)));
  if (n > 0 && n_train == 0) n_train = 1;
  if (n_train > n) n_train = n;
  if (n_train + n_dev > n) n_dev = n - n_train;

  CorpusSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    const Dialogue& d = dialogues[order[i]];
    if (i < n_train) {
      split.train.push_back(d);
    } else if (i < n_train + n_dev) {
      split.dev.push_back(d);
    } else {
      split.test.push_back(d);
    }
  }
  return split;
}

}  // namespace spkdlg
