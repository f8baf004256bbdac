#include "spkdlg/eval.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace spkdlg {

double utterance_f1(const std::set<std::size_t>& predicted,
                    const std::set<std::size_t>& gold) {
  if (predicted.empty() && gold.empty()) return 1.0;
  if (predicted.empty() || gold.empty()) return 0.0;
  std::size_t overlap = 0;
  for (std::size_t label : predicted) overlap += gold.count(label);
  if (overlap == 0) return 0.0;
  const double precision = double(overlap) / double(predicted.size());
  const double recall = double(overlap) / double(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

double corpus_f1(std::span<const double> scores) {
  if (scores.empty()) {
    throw std::invalid_argument("corpus_f1: empty evaluation set");
  }
  double total = 0.0;
  for (double s : scores) total += s;
  return total / double(scores.size());
}

std::size_t eval_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPKDLG_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

namespace {

// Forward one example through a task head on a private tape.
double score_example(const ModelParams& params, const TaskExample& ex, bool policy,
                     double threshold) {
  Tape tape;
  Tensor output;
  if (policy && params.config.policy_input == PolicyInput::tags) {
    output = forward_policy_tags(tape, params, ex.current_tags);
  } else {
    HistoryEncoding history = encode_history(tape, params, ex.history);
    Tensor v_cur = encode_current(tape, params, ex.tokens, history.summary);
    output = policy ? policy_output(tape, params, v_cur) : lu_output(tape, params, v_cur);
  }
  return utterance_f1(predict_labels(output.values(), threshold), ex.gold);
}

std::vector<double> score_examples(const ModelParams& params,
                                   std::span<const TaskExample> examples, bool policy,
                                   double threshold, std::size_t threads) {
  std::vector<double> scores(examples.size(), 0.0);
  if (examples.empty()) return scores;
  if (threads == 0) threads = eval_threads();
  threads = std::min(threads, examples.size());

  if (threads <= 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) {
      scores[i] = score_example(params, examples[i], policy, threshold);
    }
    return scores;
  }

  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      for (std::size_t i = t; i < examples.size(); i += threads) {
        scores[i] = score_example(params, examples[i], policy, threshold);
      }
    });
  }
  for (auto& worker : pool) worker.join();
  return scores;
}

}  // namespace

EvalResult evaluate_bundle(const ModelBundle& bundle,
                           std::span<const Dialogue> dialogues, std::size_t threads) {
  const double threshold = bundle.params.config.threshold;
  EvalResult result;

  const auto lu_examples = build_lu_examples(dialogues, bundle);
  result.lu_examples = lu_examples.size();
  if (!lu_examples.empty()) {
    const auto scores =
        score_examples(bundle.params, lu_examples, /*policy=*/false, threshold, threads);
    result.lu_f1 = corpus_f1(scores);
  }

  const auto policy_examples = build_policy_examples(dialogues, bundle);
  result.policy_examples = policy_examples.size();
  if (!policy_examples.empty()) {
    const auto scores =
        score_examples(bundle.params, policy_examples, /*policy=*/true, threshold, threads);
    result.policy_f1 = corpus_f1(scores);
  }
  return result;
}

double lu_f1_at_threshold(const ModelBundle& bundle,
                          std::span<const TaskExample> examples, double threshold,
                          std::size_t threads) {
  const auto scores =
      score_examples(bundle.params, examples, /*policy=*/false, threshold, threads);
  return corpus_f1(scores);
}

double tune_threshold(const ModelBundle& bundle, std::span<const Dialogue> dev,
                      std::size_t threads) {
  const auto examples = build_lu_examples(dev, bundle);
  if (examples.empty()) {
    throw std::invalid_argument("tune_threshold: no LU examples in dev split");
  }
  double best_theta = 0.5;
  double best_f1 = lu_f1_at_threshold(bundle, examples, 0.5, threads);
  for (int step = 1; step <= 19; ++step) {
    const double theta = 0.05 * step;
    const double f1 = lu_f1_at_threshold(bundle, examples, theta, threads);
    if (f1 > best_f1 || (f1 == best_f1 && theta < best_theta)) {
      best_f1 = f1;
      best_theta = theta;
    }
  }
  return best_theta;
}

std::string git_blob_sha1(std::string_view content) {
  std::string framed = "blob " + std::to_string(content.size());
  framed.push_back('\0');
  framed.append(content);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(framed.data(), framed.size(), digest, &digest_len, EVP_sha1(),
                 nullptr) != 1) {
    throw std::runtime_error("git_blob_sha1: digest failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string file_git_blob_sha1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return git_blob_sha1(buffer.str());
}

nlohmann::json make_run_manifest(const ModelConfig& config,
                                 const nlohmann::json& train_config,
                                 const std::string& corpus_path,
                                 const std::string& embeddings_path,
                                 std::uint64_t split_seed,
                                 const std::string& out_dir) {
  nlohmann::json manifest;
  manifest["model"] = {
      {"history_mode", history_mode_name(config.history_mode)},
      {"role_split", config.role_split},
      {"intermediate_guidance", config.intermediate_guidance},
      {"history_window", config.history_window},
      {"threshold", config.threshold},
      {"hidden_dim", config.hidden_dim},
      {"embedding_dim", config.embedding_dim},
      {"cnn_filters", config.cnn_filters},
      {"cnn_widths", config.cnn_widths},
      {"policy_input", config.policy_input == PolicyInput::tags ? "tags" : "words"},
      {"concat_history_to_inputs", config.concat_history_to_inputs},
  };
  manifest["train"] = train_config;
  manifest["corpus"] = {{"path", corpus_path},
                        {"content_sha1", file_git_blob_sha1(corpus_path)}};
  if (!embeddings_path.empty()) {
    manifest["embeddings"] = {{"path", embeddings_path},
                              {"content_sha1", file_git_blob_sha1(embeddings_path)}};
  }
  manifest["split_seed"] = split_seed;
  manifest["out_dir"] = out_dir;
  return manifest;
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << manifest.dump(2) << '\n';
}

}  // namespace spkdlg
