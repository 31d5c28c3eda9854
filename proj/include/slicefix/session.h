/*
 * Copyright 2026 The slicefix Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SLICEFIX_SESSION_H_
#define SLICEFIX_SESSION_H_

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"
#include "slicefix/evaluation.h"
#include "slicefix/probe.h"
#include "slicefix/similarity.h"
#include "slicefix/text_encoder.h"

namespace slicefix {

// Score of a prompt at one threshold.
struct ThresholdRevision {
  double threshold = 0.0;
  double error_score = 0.0;
  double balanced_accuracy = 0.5;
  int count_above = 0;
  int count_below = 0;
};

// One submitted prompt. `score` is the automatic-threshold record and never
// changes; user thresholds append to `revisions`, the last one is in effect.
struct HistoryEntry {
  int64_t id = 0;
  PromptScore score;
  Eigen::VectorXd text_vec;
  std::vector<ThresholdRevision> revisions;

  const ThresholdRevision* user() const {
    return revisions.empty() ? nullptr : &revisions.back();
  }
  ThresholdRevision effective() const;
  nlohmann::json ToJson() const;
};

// Similarity histogram of a class's validation examples, split by whether the
// probe got them right.
struct SplitPreview {
  double low = 0.0;
  double high = 0.0;
  std::vector<double> edges;  // bins + 1
  std::vector<int> correct;
  std::vector<int> error;

  nlohmann::json ToJson() const;
};

inline constexpr int kPreviewBins = 20;
SplitPreview MakeSplitPreview(const PromptScore& score, int bins = kPreviewBins);

enum class JobState { kQueued, kRunning, kDone, kFailed };
const char* JobStateName(JobState s);
JobState ParseJobState(std::string_view name);

// queued -> running -> {done, failed}. A restored snapshot marks unfinished
// jobs failed directly, outside the state machine.
bool IsAllowedTransition(JobState from, JobState to);
inline bool IsTerminal(JobState s) {
  return s == JobState::kDone || s == JobState::kFailed;
}

struct Job {
  int64_t id = 0;
  Objective objective = Objective::kSliceBalanced;
  JobState state = JobState::kQueued;
  double progress = 0.0;
  std::string reason;
  // Before/after evaluation once done.
  nlohmann::json result;

  // Throws Error(kFailedPrecondition) on a transition the state machine
  // does not admit.
  void TransitionTo(JobState next);
  nlohmann::json ToJson() const;
};

struct SessionOptions {
  std::filesystem::path data_dir;
  std::shared_ptr<const TextEncoder> encoder;
  std::optional<std::filesystem::path> probe_checkpoint;
  std::optional<KeywordPools> keyword_pools;
  TrainConfig baseline_config;  // objective forced to erm_uniform
  TrainConfig retrain_config;   // objective chosen per job
};

enum class ProbeKind { kBaseline, kRetrained };
ProbeKind ParseProbeKind(std::string_view name);

struct SubmitResult {
  HistoryEntry entry;
  SplitPreview preview;
  bool created = false;
};

// Single-dataset annotation session: browse predictions, score prompts,
// adjust thresholds, finalize annotations and retrain the probe. Reads run
// concurrently; mutations are serialized; retraining runs on a worker thread
// and publishes its result atomically.
class Session {
 public:
  static std::unique_ptr<Session> Create(SessionOptions options);
  // Restores a snapshot. Running or queued jobs come back failed
  // ("interrupted"). Throws Error(kDataLoss) on a corrupt file or unknown
  // version.
  static std::unique_ptr<Session> Restore(
      const std::filesystem::path& snapshot,
      std::shared_ptr<const TextEncoder> encoder,
      std::optional<KeywordPools> keyword_pools = std::nullopt,
      TrainConfig retrain_config = {});

  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const EmbeddingDataset& dataset() const { return dataset_; }
  const std::filesystem::path& data_dir() const { return data_dir_; }

  nlohmann::json Classes() const;
  nlohmann::json Examples(int class_id, std::optional<bool> correct,
                          int limit) const;
  // Top suggestions from the configured keyword pool.
  nlohmann::json KeywordSuggestions(int class_id) const;

  SubmitResult SubmitPrompt(int class_id, const std::string& text);
  HistoryEntry SetThreshold(int64_t prompt_id, double threshold);
  std::vector<HistoryEntry> Prompts(std::optional<int> class_id) const;
  std::vector<ErrorAnnotation> FinalizeAnnotations();
  std::optional<std::vector<ErrorAnnotation>> Annotations() const;

  int64_t StartRetrain(Objective objective);
  Job GetJob(int64_t job_id) const;
  // Blocks until the job reaches a terminal state.
  Job WaitForJob(int64_t job_id) const;

  EvalReport Metrics(ProbeKind probe, GroupingKind grouping) const;
  LinearProbe Probe(ProbeKind probe) const;
  std::vector<uint8_t> Correctness() const;

  void Snapshot(const std::filesystem::path& path) const;

 private:
  Session(std::filesystem::path data_dir, EmbeddingDataset dataset,
          std::shared_ptr<const TextEncoder> encoder,
          std::optional<KeywordPools> pools, TrainConfig retrain_config,
          LinearProbe baseline);

  std::vector<ErrorAnnotation> FinalizeLocked();
  const HistoryEntry* FindAnnotationEntry(const ErrorAnnotation& a) const;
  std::vector<SlicePartition> AnnotationSlices(Split split) const;
  void RunJob(int64_t job_id, std::vector<ErrorAnnotation> annotations,
              std::vector<Eigen::VectorXd> text_vecs, TrainConfig config);
  void UpdateJob(int64_t job_id, JobState next, double progress,
                 const std::string& reason);

  const std::filesystem::path data_dir_;
  const EmbeddingDataset dataset_;
  const std::shared_ptr<const TextEncoder> encoder_;
  const std::optional<KeywordPools> pools_;
  const TrainConfig retrain_config_;
  const LinearProbe baseline_;
  const std::vector<uint8_t> correct_;  // baseline correctness per example
  const std::vector<int> predicted_;    // baseline label per example

  mutable std::shared_mutex mu_;
  mutable std::condition_variable_any job_cv_;
  std::vector<HistoryEntry> history_;
  std::optional<std::vector<ErrorAnnotation>> annotations_;
  bool annotations_stale_ = false;
  std::optional<LinearProbe> retrained_;
  std::map<int64_t, Job> jobs_;
  int64_t next_prompt_id_ = 1;
  int64_t next_job_id_ = 1;
  std::atomic<bool> stopping_{false};
  std::thread worker_;
};

inline constexpr char kSnapshotVersion[] = "slicefix-session/1";

}  // namespace slicefix

#endif  // SLICEFIX_SESSION_H_
