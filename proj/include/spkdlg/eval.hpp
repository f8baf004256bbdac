#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spkdlg/model.hpp"

namespace spkdlg {

// Per-utterance F1 between predicted and gold label sets.
// Conventions: both empty -> 1.0; exactly one empty -> 0.0.
double utterance_f1(const std::set<std::size_t>& predicted,
                    const std::set<std::size_t>& gold);

// Arithmetic mean of per-utterance scores; empty input is a contract error.
double corpus_f1(std::span<const double> scores);

// Evaluation parallelism: min(hardware, SPKDLG_THREADS when set).
std::size_t eval_threads();

struct EvalResult {
  double lu_f1 = 0.0;
  double policy_f1 = 0.0;
  std::size_t lu_examples = 0;
  std::size_t policy_examples = 0;
};

// Thresholded multi-label evaluation of both task heads over a dialogue set.
// Examples are sharded across threads with read-only parameters; the score
// reduction is index-ordered, so results do not depend on the thread count.
EvalResult evaluate_bundle(const ModelBundle& bundle,
                           std::span<const Dialogue> dialogues,
                           std::size_t threads = 0);

// Mean per-utterance F1 of the LU head at an explicit threshold.
double lu_f1_at_threshold(const ModelBundle& bundle,
                          std::span<const TaskExample> examples, double threshold,
                          std::size_t threads = 0);

// Sweeps the threshold grid on dev data and returns the best value by LU F1
// (ties resolved toward the smaller threshold). The grid includes 0.5.
double tune_threshold(const ModelBundle& bundle, std::span<const Dialogue> dev,
                      std::size_t threads = 0);

// Content hash of a byte string, computed the way git hashes a blob.
std::string git_blob_sha1(std::string_view content);
std::string file_git_blob_sha1(const std::string& path);

nlohmann::json make_run_manifest(const ModelConfig& config,
                                 const nlohmann::json& train_config,
                                 const std::string& corpus_path,
                                 const std::string& embeddings_path,
                                 std::uint64_t split_seed,
                                 const std::string& out_dir);

void write_manifest(const std::string& path, const nlohmann::json& manifest);

}  // namespace spkdlg
