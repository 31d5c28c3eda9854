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

#ifndef SLICEFIX_SIMILARITY_H_
#define SLICEFIX_SIMILARITY_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"

namespace slicefix {

// u.v / (|u||v|). Throws on dimension mismatch or a zero vector.
double CosineSim(std::span<const double> u, std::span<const double> v);

// Similarity of each listed row of `embeddings` with `text`, accumulated in
// double in column order.
std::vector<double> Similarities(const RowMatrixF& embeddings,
                                 std::span<const int> rows,
                                 const Eigen::VectorXd& text);

struct ThresholdScore {
  double balanced_accuracy = 0.5;
  double error_score = 0.0;
};

struct ThresholdSearch {
  double threshold = 0.0;
  double balanced_accuracy = 0.5;
  double error_score = 0.0;
};

// Balanced accuracy of the detector "similarity > tau predicts a model error"
// and the error score max(0, 2 (acc - 0.5)). Both multisets must be nonempty.
ThresholdScore ScoreAtThreshold(std::span<const double> s_correct,
                                std::span<const double> s_error, double tau);

// Best threshold over the candidates {min - 1, midpoints of consecutive
// distinct values, max + 1}. Among optimal candidates the lowest one wins, so
// the choice depends only on the rank order of the similarities.
ThresholdSearch SearchThreshold(std::span<const double> s_correct,
                                std::span<const double> s_error);

// Scoring of one prompt over a class's validation examples.
struct PromptScore {
  int class_id = 0;
  std::string prompt;
  double error_score = 0.0;
  double threshold = 0.0;
  double balanced_accuracy = 0.5;
  std::vector<int> example_ids;       // val examples of the class
  std::vector<double> similarities;   // aligned with example_ids
  std::vector<uint8_t> is_error;      // aligned with example_ids
  int count_above = 0;
  int count_below = 0;

  std::vector<double> CorrectSimilarities() const;
  std::vector<double> ErrorSimilarities() const;
};

// `correct` holds one flag per dataset example (1 = probe prediction right);
// only validation entries are read. Throws Error(kFailedPrecondition) when
// the class has no errors ("no errors to explain") or no correct predictions
// on the validation split.
PromptScore ScorePrompt(const EmbeddingDataset& ds, int class_id,
                        std::span<const uint8_t> correct,
                        const Eigen::VectorXd& text_vec,
                        std::string prompt = {});

enum class ThresholdSource { kAuto, kUser };
const char* ThresholdSourceName(ThresholdSource s);
ThresholdSource ParseThresholdSource(std::string_view name);

// (class, prompt, threshold) identifying a described failure mode.
struct ErrorAnnotation {
  int class_id = 0;
  std::string prompt;
  double threshold = 0.0;
  double error_score = 0.0;
  ThresholdSource source = ThresholdSource::kAuto;

  friend bool operator==(const ErrorAnnotation&,
                         const ErrorAnnotation&) = default;
};

nlohmann::json AnnotationToJson(const ErrorAnnotation& a);
ErrorAnnotation AnnotationFromJson(const nlohmann::json& j);
// Accepts a single annotation object or an array of them.
std::vector<ErrorAnnotation> LoadAnnotations(const std::filesystem::path& path);
void WriteAnnotations(std::span<const ErrorAnnotation> annotations,
                      const std::filesystem::path& path);

// Examples of the class in `split`: above = sim > tau, below = sim <= tau.
struct SlicePartition {
  int class_id = 0;
  Split split = Split::kTrain;
  std::vector<int> above;
  std::vector<int> below;
};

SlicePartition PartitionClass(const EmbeddingDataset& ds,
                              const ErrorAnnotation& annotation, Split split,
                              const Eigen::VectorXd& text_vec);

struct RankedKeyword {
  std::string keyword;
  PromptScore score;
};

struct SkippedKeyword {
  std::string keyword;
  std::string reason;
};

struct KeywordRanking {
  std::vector<RankedKeyword> ranked;
  std::vector<SkippedKeyword> skipped;
};

using KeywordVectors = std::vector<std::pair<std::string, Eigen::VectorXd>>;

// Scores every keyword on the class; descending error score, ties by keyword.
KeywordRanking RankKeywords(const EmbeddingDataset& ds, int class_id,
                            std::span<const uint8_t> correct,
                            const KeywordVectors& keywords);

// Classes whose accuracy lies in [low, high], ascending by id.
std::vector<int> SelectCandidateClasses(
    const std::map<int, double>& per_class_accuracy, double low = 0.2,
    double high = 0.8);

struct RankedClass {
  int class_id = 0;
  double best_error_score = 0.0;
  std::string best_keyword;
};

struct ClassRanking {
  std::vector<RankedClass> ranked;
  std::vector<std::pair<int, std::string>> dropped;  // class id, reason
};

// Orders candidates by the best keyword error score in their pool
// (descending, ties by class id) and keeps the first `top_k`.
ClassRanking RankClasses(std::span<const int> candidates,
                         const std::map<int, KeywordVectors>& pools,
                         const EmbeddingDataset& ds,
                         std::span<const uint8_t> correct, int top_k = 100);

// One scored prompt from an annotation session.
struct ScoredPrompt {
  int64_t submission = 0;
  int class_id = 0;
  std::string prompt;
  double auto_threshold = 0.0;
  double auto_error_score = 0.0;
  std::optional<double> user_threshold;
  std::optional<double> user_error_score;

  double effective_score() const {
    return user_error_score.value_or(auto_error_score);
  }
};

// Keeps, per class, the prompt with the highest effective error score
// (earliest submission on ties). A user threshold replaces the automatic one.
// Output is sorted by class id.
std::vector<ErrorAnnotation> FinalizeBestAnnotations(
    std::span<const ScoredPrompt> history);

// At most this many keywords per class are read from a pool file.
inline constexpr size_t kMaxKeywordsPerClass = 50;
// Number of keyword suggestions surfaced to the annotator.
inline constexpr size_t kSuggestedKeywords = 10;

struct KeywordPools {
  std::map<int, std::vector<std::string>> pools;
  std::vector<std::string> warnings;
};

// JSON map "class id" -> [keyword, ...]; entries past the 50th are dropped
// with a warning.
KeywordPools LoadKeywordPools(const std::filesystem::path& path);

}  // namespace slicefix

#endif  // SLICEFIX_SIMILARITY_H_
