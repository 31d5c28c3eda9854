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

#ifndef SLICEFIX_SYNTHETIC_H_
#define SLICEFIX_SYNTHETIC_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"
#include "slicefix/evaluation.h"
#include "slicefix/probe.h"
#include "slicefix/similarity.h"
#include "slicefix/text_encoder.h"

namespace slicefix {

// Embeddings normalize(alpha u_y + beta v_s + sigma g) with orthonormal class
// directions u, spurious directions v and standard normal noise g.
struct SyntheticConfig {
  int dim = 64;
  int num_classes = 2;
  int num_spurious = 2;
  double correlation = 0.95;  // share of each class carrying s = y mod S
  double class_signal = 1.0;
  double spurious_signal = 1.0;
  double noise = 0.35;
  int per_class_per_split = 500;
  uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  static SyntheticConfig FromJson(const nlohmann::json& j);
};

// round(correlation * n), halves to even.
int MajorityCount(double correlation, int n);

struct SyntheticDataset {
  EmbeddingDataset dataset;
  Vocab vocab;  // "class_k" -> u_k, "spur_j" -> v_j
  std::optional<ErrorAnnotation> oracle_annotation;
  SyntheticConfig config;
};

// The oracle annotation targets the class with the smallest minority cell
// (lowest id on ties), prompts with that cell's "spur_j" token and takes the
// automatic threshold against a default ERM probe's validation errors.
SyntheticDataset GenerateSynthetic(const SyntheticConfig& config);

// Writes the dataset plus vocab.json, oracle_annotation.json and
// synthetic_config.json.
void WriteSynthetic(const SyntheticDataset& synthetic,
                    const std::filesystem::path& dir);

inline constexpr char kOracleAnnotationFile[] = "oracle_annotation.json";

struct OracleScore {
  double error_score = 0.0;
  double threshold = 0.0;
};

// Reference error score: evaluates every candidate threshold by direct
// counting. Limited to 10^4 points.
OracleScore OracleErrorScore(std::span<const double> s_correct,
                             std::span<const double> s_error);

struct BenchRun {
  std::string objective;
  uint64_t seed = 0;
  std::string config_fingerprint;
  EvalReport report;
  double wall_clock_seconds = 0.0;
};

struct BenchReport {
  nlohmann::json config;
  std::vector<BenchRun> runs;

  nlohmann::json ToJson(bool include_wall_clock = true) const;
};

// `annotations` is "oracle" (the dataset's oracle_annotation.json) or a path
// to an annotation file. Every objective shares `base`'s seed and
// hyperparameters. Throws Error(kDivergence) if a run diverges.
BenchReport RunBenchmark(const std::filesystem::path& data_dir,
                         std::span<const Objective> objectives,
                         const std::string& annotations,
                         const TrainConfig& base = {});

}  // namespace slicefix

#endif  // SLICEFIX_SYNTHETIC_H_
