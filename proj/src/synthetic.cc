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

#include "slicefix/synthetic.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/QR>

#include "slicefix/errors.h"
#include "slicefix/rng.h"

namespace slicefix {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Spurious value of each example of one class, majority first.
std::vector<int> SpuriousAssignment(const SyntheticConfig& c, int label) {
  const int n = c.per_class_per_split;
  const int majority_value = label % c.num_spurious;
  const int majority = MajorityCount(c.correlation, n);
  std::vector<int> others;
  for (int s = 0; s < c.num_spurious; ++s) {
    if (s != majority_value) others.push_back(s);
  }
  std::vector<int> out(static_cast<size_t>(n), majority_value);
  for (int i = majority; i < n; ++i) {
    out[static_cast<size_t>(i)] =
        others[static_cast<size_t>(i - majority) % others.size()];
  }
  return out;
}

struct MinorityCell {
  int class_id = -1;
  int value = -1;
  int count = 0;
};

MinorityCell SmallestMinority(const SyntheticConfig& c) {
  MinorityCell best;
  for (int y = 0; y < c.num_classes; ++y) {
    std::vector<int> counts(static_cast<size_t>(c.num_spurious), 0);
    for (int s : SpuriousAssignment(c, y)) counts[static_cast<size_t>(s)] += 1;
    for (int s = 0; s < c.num_spurious; ++s) {
      const int n = counts[static_cast<size_t>(s)];
      if (s == y % c.num_spurious || n == 0) continue;
      if (best.class_id < 0 || n < best.count) best = {y, s, n};
    }
  }
  return best;
}

ErrorAnnotation OracleAnnotation(const SyntheticConfig& c,
                                 const EmbeddingDataset& ds,
                                 const Vocab& vocab, const MinorityCell& cell) {
  ErrorAnnotation ann;
  ann.class_id = cell.class_id;
  ann.prompt = "spur_" + std::to_string(cell.value);
  ann.source = ThresholdSource::kAuto;
  const Eigen::VectorXd text = FixtureEncodeText(vocab, ann.prompt);

  TrainConfig erm;
  erm.seed = c.seed;
  const LinearProbe baseline = TrainProbe(ds, erm);
  const auto correct = CorrectnessFlags(baseline, ds);
  try {
    const PromptScore score = ScorePrompt(ds, cell.class_id, correct, text);
    ann.threshold = score.threshold;
    ann.error_score = score.error_score;
    return ann;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFailedPrecondition) throw;
  }
  // The baseline makes no (or only) errors on the class: separate the
  // minority cell itself instead.
  const auto ids = ds.ClassIndices(cell.class_id, Split::kVal);
  const auto sims = Similarities(ds.annotation_embeddings(), ids, text);
  std::vector<double> s_minor, s_major;
  for (size_t i = 0; i < ids.size(); ++i) {
    (ds.groups()[ids[i]] == cell.value ? s_minor : s_major).push_back(sims[i]);
  }
  const ThresholdSearch search = SearchThreshold(s_major, s_minor);
  ann.threshold = search.threshold;
  ann.error_score = search.error_score;
  return ann;
}

}  // namespace

void SyntheticConfig::Validate() const {
  if (num_classes < 2) throw InvalidArgumentError("need at least 2 classes");
  if (num_spurious < 1) throw InvalidArgumentError("need at least 1 spurious value");
  if (dim < num_classes + num_spurious) {
    throw InvalidArgumentError("dim must be at least classes + spurious values");
  }
  if (!(correlation >= 0.5 && correlation < 1.0)) {
    throw InvalidArgumentError("correlation must lie in [0.5, 1)");
  }
  if (!(class_signal >= 0.0) || !(spurious_signal >= 0.0) || !(noise >= 0.0) ||
      !std::isfinite(class_signal) || !std::isfinite(spurious_signal) ||
      !std::isfinite(noise)) {
    throw InvalidArgumentError("signals and noise must be finite and >= 0");
  }
  if (per_class_per_split < 1) {
    throw InvalidArgumentError("need at least one example per class and split");
  }
}

json SyntheticConfig::ToJson() const {
  return {{"dim", dim},
          {"num_classes", num_classes},
          {"num_spurious", num_spurious},
          {"correlation", correlation},
          {"class_signal", class_signal},
          {"spurious_signal", spurious_signal},
          {"noise", noise},
          {"per_class_per_split", per_class_per_split},
          {"seed", seed}};
}

SyntheticConfig SyntheticConfig::FromJson(const json& j) {
  if (!j.is_object()) throw InvalidArgumentError("config must be a JSON object");
  static const char* kKnown[] = {"dim",           "num_classes",
                                 "num_spurious",  "correlation",
                                 "class_signal",  "spurious_signal",
                                 "noise",         "per_class_per_split",
                                 "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown),
                     [&](const char* k) { return key == k; }) ==
        std::end(kKnown)) {
      throw InvalidArgumentError("unknown synthetic config key '" + key + "'");
    }
  }
  SyntheticConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.num_spurious = j.value("num_spurious", c.num_spurious);
    c.correlation = j.value("correlation", c.correlation);
    c.class_signal = j.value("class_signal", c.class_signal);
    c.spurious_signal = j.value("spurious_signal", c.spurious_signal);
    c.noise = j.value("noise", c.noise);
    c.per_class_per_split = j.value("per_class_per_split", c.per_class_per_split);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw InvalidArgumentError("bad synthetic config: " + std::string(e.what()));
  }
  c.Validate();
  return c;
}

int MajorityCount(double correlation, int n) {
  // nearbyint under the default rounding mode rounds halves to even.
  return static_cast<int>(std::nearbyint(correlation * n));
}

SyntheticDataset GenerateSynthetic(const SyntheticConfig& config) {
  config.Validate();
  const int d = config.dim;
  const int num_dirs = config.num_classes + config.num_spurious;
  SplitMix64 rng(config.seed);

  Eigen::MatrixXd gaussian(d, num_dirs);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < num_dirs; ++c) gaussian(r, c) = rng.Normal();
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(d, num_dirs);

  const int n = config.per_class_per_split;
  const int total = 2 * config.num_classes * n;
  DatasetContents c;
  c.name = "synthetic-seed" + std::to_string(config.seed);
  for (int y = 0; y < config.num_classes; ++y) {
    c.class_names.push_back("class_" + std::to_string(y));
  }
  c.embeddings.resize(total, d);
  c.num_groups = config.num_spurious;
  Eigen::VectorXd x(d);
  int row = 0;
  for (Split split : {Split::kTrain, Split::kVal}) {
    for (int y = 0; y < config.num_classes; ++y) {
      for (int s : SpuriousAssignment(config, y)) {
        for (int k = 0; k < d; ++k) x[k] = rng.Normal();
        x = config.class_signal * q.col(y) +
            config.spurious_signal * q.col(config.num_classes + s) +
            config.noise * x;
        const double norm = x.norm();
        if (norm < kMinRowNorm) {
          throw InvalidArgumentError(
              "configuration produces zero embeddings (all signals and noise "
              "are zero)");
        }
        c.embeddings.row(row) = (x / norm).cast<float>().transpose();
        c.labels.push_back(y);
        c.split.push_back(split);
        c.groups.push_back(s);
        ++row;
      }
    }
  }

  SyntheticDataset out{EmbeddingDataset::Create(std::move(c)), {}, std::nullopt,
                       config};
  for (int y = 0; y < config.num_classes; ++y) {
    out.vocab["class_" + std::to_string(y)] = q.col(y);
  }
  for (int s = 0; s < config.num_spurious; ++s) {
    out.vocab["spur_" + std::to_string(s)] = q.col(config.num_classes + s);
  }
  const MinorityCell cell = SmallestMinority(config);
  if (cell.class_id >= 0) {
    out.oracle_annotation =
        OracleAnnotation(config, out.dataset, out.vocab, cell);
  }
  return out;
}

void WriteSynthetic(const SyntheticDataset& synthetic, const fs::path& dir) {
  WriteDataset(synthetic.dataset, dir, "vocab.json");
  WriteVocab(synthetic.vocab, dir / "vocab.json");
  std::vector<ErrorAnnotation> anns;
  if (synthetic.oracle_annotation) anns.push_back(*synthetic.oracle_annotation);
  WriteAnnotations(anns, dir / kOracleAnnotationFile);
  std::ofstream out(dir / "synthetic_config.json", std::ios::trunc);
  if (!out) throw IoError("cannot write synthetic_config.json");
  out << synthetic.config.ToJson().dump(2) << '\n';
}

OracleScore OracleErrorScore(std::span<const double> s_correct,
                             std::span<const double> s_error) {
  if (s_correct.empty() || s_error.empty()) {
    throw InvalidArgumentError("oracle needs nonempty correct and error sets");
  }
  if (s_correct.size() + s_error.size() > 10000) {
    throw InvalidArgumentError("oracle is limited to 10^4 points");
  }
  std::vector<double> values(s_correct.begin(), s_correct.end());
  values.insert(values.end(), s_error.begin(), s_error.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> candidates{values.front() - 1.0};
  for (size_t k = 0; k + 1 < values.size(); ++k) {
    double mid = 0.5 * (values[k] + values[k + 1]);
    if (!(mid < values[k + 1])) mid = values[k];
    candidates.push_back(mid);
  }
  candidates.push_back(values.back() + 1.0);

  const auto n_error = static_cast<double>(s_error.size());
  const auto n_correct = static_cast<double>(s_correct.size());
  OracleScore best{-std::numeric_limits<double>::infinity(), 0.0};
  for (double tau : candidates) {
    int64_t tp = 0, tn = 0;
    for (double s : s_error) tp += s > tau ? 1 : 0;
    for (double s : s_correct) tn += s <= tau ? 1 : 0;
    const double acc = 0.5 * (static_cast<double>(tp) / n_error +
                              static_cast<double>(tn) / n_correct);
    const double score = 2.0 * (acc - 0.5);
    if (score > best.error_score) best = {score, tau};
  }
  best.error_score = std::max(0.0, best.error_score);
  return best;
}

json BenchReport::ToJson(bool include_wall_clock) const {
  json runs_json = json::array();
  for (const auto& r : runs) {
    json j = {{"objective", r.objective},
              {"seed", r.seed},
              {"config_fingerprint", r.config_fingerprint},
              {"report", r.report.ToJson()}};
    if (include_wall_clock) j["wall_clock_seconds"] = r.wall_clock_seconds;
    runs_json.push_back(std::move(j));
  }
  return {{"config", config}, {"runs", runs_json}};
}

BenchReport RunBenchmark(const fs::path& data_dir,
                         std::span<const Objective> objectives,
                         const std::string& annotations,
                         const TrainConfig& base) {
  const EmbeddingDataset ds = LoadDataset(data_dir);
  if (!ds.has_groups()) {
    throw InvalidArgumentError("benchmark needs the oracle group column");
  }
  if (objectives.empty()) throw InvalidArgumentError("no objectives given");

  BenchReport report;
  report.config["dataset"] = ds.name();
  report.config["train"] = base.ToJson();
  report.config["annotations"] = annotations;
  json objective_names = json::array();
  for (Objective o : objectives) objective_names.push_back(ObjectiveName(o));
  report.config["objectives"] = objective_names;
  if (std::ifstream sc(data_dir / "synthetic_config.json"); sc) {
    report.config["synthetic"] = json::parse(sc);
  }

  const bool needs_slices = std::any_of(objectives.begin(), objectives.end(),
                                        IsSliceObjective);
  std::vector<SlicePartition> slices;
  if (needs_slices) {
    const fs::path ann_path = annotations == "oracle"
                                  ? data_dir / kOracleAnnotationFile
                                  : fs::path(annotations);
    const auto anns = LoadAnnotations(ann_path);
    if (anns.empty()) throw InvalidArgumentError("annotation set is empty");
    const auto vocab_path = DatasetVocabPath(data_dir);
    if (!vocab_path) {
      throw InvalidArgumentError("dataset has no vocab for the fixture encoder");
    }
    const FixtureTextEncoder encoder(LoadVocab(*vocab_path));
    json anns_json = json::array();
    for (const auto& a : anns) {
      slices.push_back(
          PartitionClass(ds, a, Split::kTrain, encoder.Encode(a.prompt)));
      anns_json.push_back(AnnotationToJson(a));
    }
    report.config["annotation_set"] = anns_json;
  }

  for (Objective o : objectives) {
    TrainConfig config = base;
    config.objective = o;
    const auto start = std::chrono::steady_clock::now();
    const LinearProbe probe =
        IsSliceObjective(o)
            ? TrainProbe(ds, config, slices)
            : TrainProbe(ds, config);
    BenchRun run;
    run.objective = ObjectiveName(o);
    run.seed = config.seed;
    run.config_fingerprint = probe.config_fingerprint;
    run.report = Evaluate(probe, ds, Grouping::OracleGroups(), Split::kVal);
    run.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    report.runs.push_back(std::move(run));
  }
  return report;
}

}  // namespace slicefix
