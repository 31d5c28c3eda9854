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

#ifndef SLICEFIX_PROBE_H_
#define SLICEFIX_PROBE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"
#include "slicefix/similarity.h"

namespace slicefix {

enum class Objective {
  kErmUniform,
  kClassBalanced,
  kWorstClass,
  kSliceBalanced,
  kWorstSlice,
  kGroupDroOracle,
};

const char* ObjectiveName(Objective objective);
Objective ParseObjective(std::string_view name);
bool IsSliceObjective(Objective objective);

// Softmax cross-entropy is the only loss; SGD with heavy-ball momentum
// (v <- momentum * v + g; theta <- theta - lr * v), zero initialization.
struct TrainConfig {
  Objective objective = Objective::kErmUniform;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 256;
  uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
  // FNV-1a 64 of the canonical JSON, as 16 hex digits.
  std::string Fingerprint() const;
};

// Linear classifier logits = W x + b over frozen embeddings.
struct LinearProbe {
  Eigen::MatrixXf weights;  // C x d
  Eigen::VectorXf bias;     // C
  uint64_t seed = 0;
  std::string config_fingerprint;

  int num_classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }

  friend bool operator==(const LinearProbe& a, const LinearProbe& b);
};

struct Predictions {
  Eigen::MatrixXd logits;  // M x C
  std::vector<int> labels;
};

// Argmax ties resolve to the lowest class id.
Predictions Predict(const LinearProbe& probe, const RowMatrixF& embeddings);

// Per-example correctness flags for every row of the dataset.
std::vector<uint8_t> CorrectnessFlags(const LinearProbe& probe,
                                      const EmbeddingDataset& ds);

// Loss pieces in double precision. `features` rows are examples.
struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;  // C x d
  Eigen::VectorXd grad_bias;     // C
};

std::vector<double> PerExampleLoss(const Eigen::MatrixXd& weights,
                                   const Eigen::VectorXd& bias,
                                   const Eigen::MatrixXd& features,
                                   std::span<const int> labels);

// (1/n) sum_i w_i * CE_i, and its gradient. Empty `weights` means all ones.
LossAndGradient WeightedCrossEntropy(const Eigen::MatrixXd& weights,
                                     const Eigen::VectorXd& bias,
                                     const Eigen::MatrixXd& features,
                                     std::span<const int> labels,
                                     std::span<const double> example_weights);

double MeanLoss(std::span<const double> losses);

struct WorstGroup {
  int group = -1;
  double loss = 0.0;
};

// Max over groups of the group's mean loss; ties go to the lowest group id.
// Groups without members are ignored.
WorstGroup WorstGroupLoss(std::span<const double> losses,
                          std::span<const int> group_of, int num_groups);

// Per-example weights over the train split for the reweighting objectives,
// indexed like ds.Indices(kTrain). Totals sum to the number of examples.
std::vector<double> ClassBalancedWeights(const EmbeddingDataset& ds);
std::vector<double> SliceBalancedWeights(
    const EmbeddingDataset& ds, std::span<const SlicePartition> slices);

struct TrainProgress {
  int epoch = 0;
  int epochs = 0;
  double last_loss = 0.0;
};
using ProgressCallback = std::function<void(const TrainProgress&)>;

// Minibatch SGD over the train split. Slice objectives need one partition of
// the train split per annotated class, each side nonempty. Throws
// Error(kDivergence) when the loss stops being finite.
LinearProbe TrainProbe(const EmbeddingDataset& ds, const TrainConfig& config,
                       std::span<const SlicePartition> slices = {},
                       const ProgressCallback& progress = {});

// Checkpoint: "SFPROBE1", u32 LE manifest length, manifest JSON
// {classes, dim, seed, config_fingerprint}, then float32 LE W (row-major)
// followed by b.
void SaveProbe(const LinearProbe& probe, const std::filesystem::path& path);
LinearProbe LoadProbe(const std::filesystem::path& path);

}  // namespace slicefix

#endif  // SLICEFIX_PROBE_H_
