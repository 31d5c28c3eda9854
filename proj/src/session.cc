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

#include "slicefix/session.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "slicefix/errors.h"

namespace slicefix {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

json RevisionJson(const ThresholdRevision& r) {
  return {{"threshold", r.threshold},
          {"error_score", r.error_score},
          {"balanced_accuracy", r.balanced_accuracy},
          {"count_above", r.count_above},
          {"count_below", r.count_below}};
}

ThresholdRevision RevisionFromJson(const json& j) {
  return {j.at("threshold").get<double>(), j.at("error_score").get<double>(),
          j.at("balanced_accuracy").get<double>(),
          j.at("count_above").get<int>(), j.at("count_below").get<int>()};
}

ThresholdRevision Rescore(const PromptScore& score, double tau) {
  const ThresholdScore s = ScoreAtThreshold(score.CorrectSimilarities(),
                                            score.ErrorSimilarities(), tau);
  ThresholdRevision r{tau, s.error_score, s.balanced_accuracy, 0, 0};
  for (double sim : score.similarities) {
    (sim > tau ? r.count_above : r.count_below) += 1;
  }
  return r;
}

ScoredPrompt ToScoredPrompt(const HistoryEntry& e) {
  ScoredPrompt p;
  p.submission = e.id;
  p.class_id = e.score.class_id;
  p.prompt = e.score.prompt;
  p.auto_threshold = e.score.threshold;
  p.auto_error_score = e.score.error_score;
  if (const auto* u = e.user()) {
    p.user_threshold = u->threshold;
    p.user_error_score = u->error_score;
  }
  return p;
}

std::vector<int> PredictedLabels(const LinearProbe& probe,
                                 const EmbeddingDataset& ds) {
  return Predict(probe, ds.embeddings()).labels;
}

std::vector<uint8_t> CorrectFrom(const std::vector<int>& predicted,
                                 const EmbeddingDataset& ds) {
  std::vector<uint8_t> out(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    out[i] = predicted[i] == ds.labels()[i] ? 1 : 0;
  }
  return out;
}

void CheckProbeFits(const LinearProbe& probe, const EmbeddingDataset& ds) {
  if (probe.dim() != ds.dim() || probe.num_classes() != ds.num_classes()) {
    throw InvalidArgumentError("probe checkpoint shape " +
                               std::to_string(probe.num_classes()) + "x" +
                               std::to_string(probe.dim()) +
                               " does not match the dataset");
  }
}

}  // namespace

ThresholdRevision HistoryEntry::effective() const {
  if (const auto* u = user()) return *u;
  return {score.threshold, score.error_score, score.balanced_accuracy,
          score.count_above, score.count_below};
}

json HistoryEntry::ToJson() const {
  const ThresholdRevision eff = effective();
  json revs = json::array();
  for (const auto& r : revisions) revs.push_back(RevisionJson(r));
  return {{"id", id},
          {"class_id", score.class_id},
          {"prompt", score.prompt},
          {"auto",
           RevisionJson({score.threshold, score.error_score,
                         score.balanced_accuracy, score.count_above,
                         score.count_below})},
          {"revisions", revs},
          {"error_score", eff.error_score},
          {"threshold", eff.threshold},
          {"balanced_accuracy", eff.balanced_accuracy},
          {"count_above", eff.count_above},
          {"count_below", eff.count_below},
          {"source", ThresholdSourceName(revisions.empty()
                                             ? ThresholdSource::kAuto
                                             : ThresholdSource::kUser)}};
}

json SplitPreview::ToJson() const {
  return {{"low", low},
          {"high", high},
          {"edges", edges},
          {"correct", correct},
          {"error", error}};
}

SplitPreview MakeSplitPreview(const PromptScore& score, int bins) {
  SplitPreview p;
  p.correct.assign(static_cast<size_t>(bins), 0);
  p.error.assign(static_cast<size_t>(bins), 0);
  if (score.similarities.empty()) return p;
  const auto [lo, hi] =
      std::minmax_element(score.similarities.begin(), score.similarities.end());
  p.low = *lo;
  p.high = *hi;
  const double width = (p.high - p.low) / bins;
  for (int b = 0; b <= bins; ++b) {
    p.edges.push_back(b == bins ? p.high : p.low + width * b);
  }
  for (size_t i = 0; i < score.similarities.size(); ++i) {
    int b = 0;
    if (width > 0.0) {
      b = static_cast<int>((score.similarities[i] - p.low) / width);
      b = std::clamp(b, 0, bins - 1);
    }
    (score.is_error[i] ? p.error : p.correct)[static_cast<size_t>(b)] += 1;
  }
  return p;
}

const char* JobStateName(JobState s) {
  switch (s) {
    case JobState::kQueued:
      return "queued";
    case JobState::kRunning:
      return "running";
    case JobState::kDone:
      return "done";
    case JobState::kFailed:
      return "failed";
  }
  return "unknown";
}

JobState ParseJobState(std::string_view name) {
  for (JobState s : {JobState::kQueued, JobState::kRunning, JobState::kDone,
                     JobState::kFailed}) {
    if (name == JobStateName(s)) return s;
  }
  throw InvalidArgumentError("unknown job state '" + std::string(name) + "'");
}

bool IsAllowedTransition(JobState from, JobState to) {
  switch (from) {
    case JobState::kQueued:
      return to == JobState::kRunning;
    case JobState::kRunning:
      return to == JobState::kDone || to == JobState::kFailed;
    case JobState::kDone:
    case JobState::kFailed:
      return false;
  }
  return false;
}

void Job::TransitionTo(JobState next) {
  if (next == state && next == JobState::kRunning) return;  // progress tick
  if (!IsAllowedTransition(state, next)) {
    throw FailedPreconditionError(std::string("job transition ") +
                                  JobStateName(state) + " -> " +
                                  JobStateName(next) + " is not allowed");
  }
  state = next;
}

json Job::ToJson() const {
  json j = {{"id", id},
            {"objective", ObjectiveName(objective)},
            {"state", JobStateName(state)},
            {"progress", progress},
            {"reason", reason}};
  j["result"] = result.is_null() ? json(nullptr) : result;
  return j;
}

ProbeKind ParseProbeKind(std::string_view name) {
  if (name == "baseline") return ProbeKind::kBaseline;
  if (name == "retrained") return ProbeKind::kRetrained;
  throw InvalidArgumentError("probe must be baseline or retrained");
}

Session::Session(fs::path data_dir, EmbeddingDataset dataset,
                 std::shared_ptr<const TextEncoder> encoder,
                 std::optional<KeywordPools> pools, TrainConfig retrain_config,
                 LinearProbe baseline)
    : data_dir_(std::move(data_dir)),
      dataset_(std::move(dataset)),
      encoder_(std::move(encoder)),
      pools_(std::move(pools)),
      retrain_config_(retrain_config),
      baseline_(std::move(baseline)),
      correct_(CorrectFrom(PredictedLabels(baseline_, dataset_), dataset_)),
      predicted_(PredictedLabels(baseline_, dataset_)) {}

std::unique_ptr<Session> Session::Create(SessionOptions options) {
  EmbeddingDataset ds = LoadDataset(options.data_dir);
  if (options.encoder && options.encoder->dim() != ds.annotation_dim()) {
    throw InvalidArgumentError("text encoder dimension does not match the "
                               "annotation embedding space");
  }
  LinearProbe baseline;
  if (options.probe_checkpoint) {
    baseline = LoadProbe(*options.probe_checkpoint);
    CheckProbeFits(baseline, ds);
  } else {
    TrainConfig config = options.baseline_config;
    config.objective = Objective::kErmUniform;
    baseline = TrainProbe(ds, config);
  }
  return std::unique_ptr<Session>(new Session(
      fs::absolute(options.data_dir), std::move(ds), std::move(options.encoder),
      std::move(options.keyword_pools), options.retrain_config,
      std::move(baseline)));
}

Session::~Session() {
  stopping_ = true;
  if (worker_.joinable()) worker_.join();
}

json Session::Classes() const {
  json out = json::array();
  for (int c = 0; c < dataset_.num_classes(); ++c) {
    const auto train = dataset_.ClassIndices(c, Split::kTrain);
    const auto val = dataset_.ClassIndices(c, Split::kVal);
    int64_t right = 0;
    for (int i : val) right += correct_[static_cast<size_t>(i)];
    json j = {{"id", c},
              {"name", dataset_.class_names()[c]},
              {"counts", {{"train", train.size()}, {"val", val.size()}}},
              {"val_errors", static_cast<int64_t>(val.size()) - right}};
    j["val_accuracy"] = val.empty() ? json(nullptr)
                                    : json(static_cast<double>(right) /
                                           static_cast<double>(val.size()));
    out.push_back(std::move(j));
  }
  return out;
}

json Session::Examples(int class_id, std::optional<bool> correct,
                       int limit) const {
  if (class_id < 0 || class_id >= dataset_.num_classes()) {
    throw NotFoundError("unknown class " + std::to_string(class_id));
  }
  if (limit < 0) throw InvalidArgumentError("limit must be >= 0");
  json items = json::array();
  for (int i : dataset_.ClassIndices(class_id, Split::kVal)) {
    const bool ok = correct_[static_cast<size_t>(i)] != 0;
    if (correct && *correct != ok) continue;
    if (static_cast<int>(items.size()) >= limit) break;
    json item = {{"id", i},
                 {"label", dataset_.labels()[i]},
                 {"predicted", predicted_[static_cast<size_t>(i)]},
                 {"correct", ok}};
    if (dataset_.has_thumbnails() && !dataset_.thumbnails()[i].empty()) {
      item["thumbnail_url"] = "/thumbnails/" + dataset_.thumbnails()[i];
    }
    items.push_back(std::move(item));
  }
  return {{"class_id", class_id}, {"examples", items}};
}

json Session::KeywordSuggestions(int class_id) const {
  if (!pools_) throw NotFoundError("no keyword pool file configured");
  if (!encoder_) throw UnavailableError("no text encoder configured");
  auto it = pools_->pools.find(class_id);
  if (it == pools_->pools.end()) {
    return {{"class_id", class_id}, {"keywords", json::array()},
            {"skipped", json::array()}};
  }
  KeywordVectors vecs;
  for (const auto& word : it->second) {
    vecs.emplace_back(word, encoder_->Encode(word));
  }
  const KeywordRanking ranking =
      RankKeywords(dataset_, class_id, correct_, vecs);
  json keywords = json::array();
  for (size_t k = 0; k < ranking.ranked.size() && k < kSuggestedKeywords; ++k) {
    keywords.push_back({{"keyword", ranking.ranked[k].keyword},
                        {"error_score", ranking.ranked[k].score.error_score},
                        {"threshold", ranking.ranked[k].score.threshold}});
  }
  json skipped = json::array();
  for (const auto& s : ranking.skipped) {
    skipped.push_back({{"keyword", s.keyword}, {"reason", s.reason}});
  }
  return {{"class_id", class_id}, {"keywords", keywords}, {"skipped", skipped}};
}

SubmitResult Session::SubmitPrompt(int class_id, const std::string& text) {
  const std::string prompt = Trim(text);
  if (prompt.empty()) throw InvalidArgumentError("empty prompt");
  if (class_id < 0 || class_id >= dataset_.num_classes()) {
    throw NotFoundError("unknown class " + std::to_string(class_id));
  }
  {
    std::shared_lock lock(mu_);
    for (const auto& e : history_) {
      if (e.score.class_id == class_id && e.score.prompt == prompt) {
        return {e, MakeSplitPreview(e.score), false};
      }
    }
  }
  if (!encoder_) throw UnavailableError("no text encoder configured");
  Eigen::VectorXd vec;
  try {
    vec = encoder_->Encode(prompt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw;
    throw UnavailableError(std::string("text encoder failed: ") + e.what());
  }
  PromptScore score = ScorePrompt(dataset_, class_id, correct_, vec, prompt);

  std::unique_lock lock(mu_);
  // A concurrent submission of the same prompt may have landed meanwhile.
  for (const auto& e : history_) {
    if (e.score.class_id == class_id && e.score.prompt == prompt) {
      return {e, MakeSplitPreview(e.score), false};
    }
  }
  HistoryEntry entry;
  entry.id = next_prompt_id_++;
  entry.score = std::move(score);
  entry.text_vec = std::move(vec);
  history_.push_back(entry);
  annotations_stale_ = true;
  return {entry, MakeSplitPreview(entry.score), true};
}

HistoryEntry Session::SetThreshold(int64_t prompt_id, double threshold) {
  if (!std::isfinite(threshold)) {
    throw InvalidArgumentError("threshold must be finite");
  }
  std::unique_lock lock(mu_);
  auto it = std::find_if(history_.begin(), history_.end(),
                         [&](const HistoryEntry& e) { return e.id == prompt_id; });
  if (it == history_.end()) {
    throw NotFoundError("unknown prompt id " + std::to_string(prompt_id));
  }
  it->revisions.push_back(Rescore(it->score, threshold));
  annotations_stale_ = true;
  return *it;
}

std::vector<HistoryEntry> Session::Prompts(std::optional<int> class_id) const {
  std::shared_lock lock(mu_);
  std::vector<HistoryEntry> out;
  for (const auto& e : history_) {
    if (!class_id || e.score.class_id == *class_id) out.push_back(e);
  }
  return out;
}

std::vector<ErrorAnnotation> Session::FinalizeLocked() {
  std::vector<ScoredPrompt> scored;
  scored.reserve(history_.size());
  for (const auto& e : history_) scored.push_back(ToScoredPrompt(e));
  annotations_ = FinalizeBestAnnotations(scored);
  annotations_stale_ = false;
  return *annotations_;
}

std::vector<ErrorAnnotation> Session::FinalizeAnnotations() {
  std::unique_lock lock(mu_);
  return FinalizeLocked();
}

std::optional<std::vector<ErrorAnnotation>> Session::Annotations() const {
  std::shared_lock lock(mu_);
  return annotations_;
}

const HistoryEntry* Session::FindAnnotationEntry(
    const ErrorAnnotation& a) const {
  for (const auto& e : history_) {
    if (e.score.class_id == a.class_id && e.score.prompt == a.prompt) return &e;
  }
  return nullptr;
}

std::vector<SlicePartition> Session::AnnotationSlices(Split split) const {
  std::vector<SlicePartition> out;
  if (!annotations_) return out;
  for (const auto& a : *annotations_) {
    const HistoryEntry* e = FindAnnotationEntry(a);
    if (!e) continue;
    out.push_back(PartitionClass(dataset_, a, split, e->text_vec));
  }
  return out;
}

int64_t Session::StartRetrain(Objective objective) {
  if (!IsSliceObjective(objective)) {
    throw InvalidArgumentError("retraining objective must be slice_balanced "
                               "or worst_slice");
  }
  std::unique_lock lock(mu_);
  for (const auto& [id, job] : jobs_) {
    if (!IsTerminal(job.state)) {
      throw ConflictError("job " + std::to_string(id) + " is still " +
                          JobStateName(job.state));
    }
  }
  if (!annotations_ || annotations_stale_) FinalizeLocked();
  if (annotations_->empty()) {
    throw FailedPreconditionError("no annotations to retrain with");
  }
  std::vector<Eigen::VectorXd> vecs;
  for (const auto& a : *annotations_) vecs.push_back(FindAnnotationEntry(a)->text_vec);

  // The previous worker has published its terminal state and only returns.
  if (worker_.joinable()) worker_.join();
  Job job;
  job.id = next_job_id_++;
  job.objective = objective;
  jobs_[job.id] = job;
  TrainConfig config = retrain_config_;
  config.objective = objective;
  worker_ = std::thread(&Session::RunJob, this, job.id, *annotations_,
                        std::move(vecs), config);
  return job.id;
}

void Session::UpdateJob(int64_t job_id, JobState next, double progress,
                        const std::string& reason) {
  std::unique_lock lock(mu_);
  Job& job = jobs_.at(job_id);
  job.TransitionTo(next);
  job.progress = progress;
  if (!reason.empty()) job.reason = reason;
  job_cv_.notify_all();
}

void Session::RunJob(int64_t job_id, std::vector<ErrorAnnotation> annotations,
                     std::vector<Eigen::VectorXd> text_vecs,
                     TrainConfig config) {
  UpdateJob(job_id, JobState::kRunning, 0.0, {});
  try {
    std::vector<SlicePartition> slices;
    std::vector<std::string> degenerate;
    for (size_t k = 0; k < annotations.size(); ++k) {
      const auto& a = annotations[k];
      slices.push_back(PartitionClass(dataset_, a, Split::kTrain, text_vecs[k]));
      const auto& s = slices.back();
      if (s.above.empty() || s.below.empty()) {
        degenerate.push_back(
            "class " + std::to_string(a.class_id) + " ('" +
            dataset_.class_names()[a.class_id] + "', prompt '" + a.prompt +
            "', threshold " + std::to_string(a.threshold) + "): " +
            (s.above.empty() ? "above" : "below") +
            "-threshold slice is empty on the train split");
      }
    }
    if (!degenerate.empty()) {
      std::string reason = "degenerate annotation: ";
      for (size_t k = 0; k < degenerate.size(); ++k) {
        reason += (k ? "; " : "") + degenerate[k];
      }
      throw FailedPreconditionError(reason);
    }
    const LinearProbe probe = TrainProbe(
        dataset_, config, slices, [&](const TrainProgress& p) {
          if (stopping_) throw FailedPreconditionError("interrupted");
          UpdateJob(job_id, JobState::kRunning,
                    static_cast<double>(p.epoch) / p.epochs, {});
        });

    std::vector<SlicePartition> val_slices;
    for (size_t k = 0; k < annotations.size(); ++k) {
      val_slices.push_back(
          PartitionClass(dataset_, annotations[k], Split::kVal, text_vecs[k]));
    }
    const Grouping main = dataset_.has_groups() ? Grouping::OracleGroups()
                                                : Grouping::ClassesOnly();
    const Grouping by_slice = Grouping::AnnotationSlices(val_slices);
    json result = {
        {"before",
         {{GroupingName(main.kind),
           Evaluate(baseline_, dataset_, main, Split::kVal).ToJson()},
          {"annotation_slices",
           Evaluate(baseline_, dataset_, by_slice, Split::kVal).ToJson()}}},
        {"after",
         {{GroupingName(main.kind),
           Evaluate(probe, dataset_, main, Split::kVal).ToJson()},
          {"annotation_slices",
           Evaluate(probe, dataset_, by_slice, Split::kVal).ToJson()}}}};

    std::unique_lock lock(mu_);
    retrained_ = probe;
    Job& job = jobs_.at(job_id);
    job.result = std::move(result);
    job.TransitionTo(JobState::kDone);
    job.progress = 1.0;
    job_cv_.notify_all();
  } catch (const std::exception& e) {
    std::unique_lock lock(mu_);
    Job& job = jobs_.at(job_id);
    job.TransitionTo(JobState::kFailed);
    job.reason = e.what();
    job_cv_.notify_all();
  }
}

Job Session::GetJob(int64_t job_id) const {
  std::shared_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) {
    throw NotFoundError("unknown job id " + std::to_string(job_id));
  }
  return it->second;
}

Job Session::WaitForJob(int64_t job_id) const {
  std::shared_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) {
    throw NotFoundError("unknown job id " + std::to_string(job_id));
  }
  job_cv_.wait(lock, [&] { return IsTerminal(it->second.state); });
  return it->second;
}

LinearProbe Session::Probe(ProbeKind kind) const {
  if (kind == ProbeKind::kBaseline) return baseline_;
  std::shared_lock lock(mu_);
  if (!retrained_) throw NotFoundError("no retrained probe yet");
  return *retrained_;
}

std::vector<uint8_t> Session::Correctness() const { return correct_; }

EvalReport Session::Metrics(ProbeKind kind, GroupingKind grouping) const {
  const LinearProbe probe = Probe(kind);
  Grouping g;
  g.kind = grouping;
  if (grouping == GroupingKind::kAnnotationSlices) {
    std::shared_lock lock(mu_);
    if (!annotations_ || annotations_->empty()) {
      throw FailedPreconditionError("no finalized annotations");
    }
    g.slices = AnnotationSlices(Split::kVal);
  }
  return Evaluate(probe, dataset_, g, Split::kVal);
}

void Session::Snapshot(const fs::path& path) const {
  std::shared_lock lock(mu_);
  const fs::path baseline_file = path.filename().string() + ".baseline.probe";
  const fs::path retrained_file = path.filename().string() + ".retrained.probe";
  SaveProbe(baseline_, path.parent_path() / baseline_file);
  json j;
  j["version"] = kSnapshotVersion;
  j["dataset"] = data_dir_.string();
  j["baseline_probe"] = baseline_file.string();
  if (retrained_) {
    SaveProbe(*retrained_, path.parent_path() / retrained_file);
    j["retrained_probe"] = retrained_file.string();
  } else {
    j["retrained_probe"] = nullptr;
  }
  json history = json::array();
  for (const auto& e : history_) {
    json revs = json::array();
    for (const auto& r : e.revisions) revs.push_back(RevisionJson(r));
    history.push_back(
        {{"id", e.id},
         {"class_id", e.score.class_id},
         {"prompt", e.score.prompt},
         {"text_vec", std::vector<double>(e.text_vec.data(),
                                          e.text_vec.data() + e.text_vec.size())},
         {"auto", RevisionJson({e.score.threshold, e.score.error_score,
                                e.score.balanced_accuracy, e.score.count_above,
                                e.score.count_below})},
         {"example_ids", e.score.example_ids},
         {"similarities", e.score.similarities},
         {"is_error", e.score.is_error},
         {"revisions", revs}});
  }
  j["history"] = history;
  if (annotations_) {
    json anns = json::array();
    for (const auto& a : *annotations_) anns.push_back(AnnotationToJson(a));
    j["annotations"] = anns;
  } else {
    j["annotations"] = nullptr;
  }
  j["annotations_stale"] = annotations_stale_;
  json jobs = json::array();
  for (const auto& [id, job] : jobs_) {
    Job copy = job;
    if (!IsTerminal(copy.state)) {
      copy.state = JobState::kFailed;
      copy.reason = "interrupted";
    }
    jobs.push_back(copy.ToJson());
  }
  j["jobs"] = jobs;
  j["next_prompt_id"] = next_prompt_id_;
  j["next_job_id"] = next_job_id_;

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write snapshot " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

std::unique_ptr<Session> Session::Restore(
    const fs::path& snapshot, std::shared_ptr<const TextEncoder> encoder,
    std::optional<KeywordPools> keyword_pools, TrainConfig retrain_config) {
  std::ifstream in(snapshot);
  if (!in) throw NotFoundError("missing snapshot " + snapshot.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataLossError("corrupt snapshot: " + std::string(e.what()));
  }
  if (!j.is_object() || j.value("version", std::string()) != kSnapshotVersion) {
    throw DataLossError("unsupported snapshot version (expected " +
                        std::string(kSnapshotVersion) + ")");
  }
  try {
    const fs::path dir = snapshot.parent_path();
    EmbeddingDataset ds = LoadDataset(j.at("dataset").get<std::string>());
    if (encoder && encoder->dim() != ds.annotation_dim()) {
      throw InvalidArgumentError("text encoder dimension does not match the "
                                 "annotation embedding space");
    }
    LinearProbe baseline =
        LoadProbe(dir / j.at("baseline_probe").get<std::string>());
    CheckProbeFits(baseline, ds);
    auto session = std::unique_ptr<Session>(new Session(
        j.at("dataset").get<std::string>(), std::move(ds), std::move(encoder),
        std::move(keyword_pools), retrain_config, std::move(baseline)));
    if (j.at("retrained_probe").is_string()) {
      session->retrained_ =
          LoadProbe(dir / j["retrained_probe"].get<std::string>());
      CheckProbeFits(*session->retrained_, session->dataset_);
    }
    for (const auto& h : j.at("history")) {
      HistoryEntry e;
      e.id = h.at("id").get<int64_t>();
      e.score.class_id = h.at("class_id").get<int>();
      e.score.prompt = h.at("prompt").get<std::string>();
      const auto vec = h.at("text_vec").get<std::vector<double>>();
      e.text_vec = Eigen::Map<const Eigen::VectorXd>(
          vec.data(), static_cast<Eigen::Index>(vec.size()));
      const ThresholdRevision a = RevisionFromJson(h.at("auto"));
      e.score.threshold = a.threshold;
      e.score.error_score = a.error_score;
      e.score.balanced_accuracy = a.balanced_accuracy;
      e.score.count_above = a.count_above;
      e.score.count_below = a.count_below;
      e.score.example_ids = h.at("example_ids").get<std::vector<int>>();
      e.score.similarities = h.at("similarities").get<std::vector<double>>();
      e.score.is_error = h.at("is_error").get<std::vector<uint8_t>>();
      for (const auto& r : h.at("revisions")) {
        e.revisions.push_back(RevisionFromJson(r));
      }
      session->history_.push_back(std::move(e));
    }
    if (j.at("annotations").is_array()) {
      std::vector<ErrorAnnotation> anns;
      for (const auto& a : j["annotations"]) anns.push_back(AnnotationFromJson(a));
      session->annotations_ = std::move(anns);
    }
    session->annotations_stale_ = j.value("annotations_stale", false);
    for (const auto& jj : j.at("jobs")) {
      Job job;
      job.id = jj.at("id").get<int64_t>();
      job.objective = ParseObjective(jj.at("objective").get<std::string>());
      job.state = ParseJobState(jj.at("state").get<std::string>());
      job.progress = jj.at("progress").get<double>();
      job.reason = jj.at("reason").get<std::string>();
      job.result = jj.value("result", json(nullptr));
      if (!IsTerminal(job.state)) {
        job.state = JobState::kFailed;
        job.reason = "interrupted";
      }
      session->jobs_[job.id] = std::move(job);
    }
    session->next_prompt_id_ = j.at("next_prompt_id").get<int64_t>();
    session->next_job_id_ = j.at("next_job_id").get<int64_t>();
    return session;
  } catch (const json::exception& e) {
    throw DataLossError("corrupt snapshot: " + std::string(e.what()));
  }
}

}  // namespace slicefix
