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

#ifndef SLICEFIX_EVALUATION_H_
#define SLICEFIX_EVALUATION_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"
#include "slicefix/probe.h"
#include "slicefix/similarity.h"

namespace slicefix {

enum class GroupingKind { kOracleGroups, kAnnotationSlices, kClassesOnly };

const char* GroupingName(GroupingKind kind);
GroupingKind ParseGrouping(std::string_view name);

// How examples of the evaluated split are bucketed. Annotation slices must be
// partitions of the evaluated split.
struct Grouping {
  GroupingKind kind = GroupingKind::kClassesOnly;
  std::vector<SlicePartition> slices;

  static Grouping OracleGroups() { return {GroupingKind::kOracleGroups, {}}; }
  static Grouping ClassesOnly() { return {GroupingKind::kClassesOnly, {}}; }
  static Grouping AnnotationSlices(std::vector<SlicePartition> slices) {
    return {GroupingKind::kAnnotationSlices, std::move(slices)};
  }
};

struct GroupAccuracy {
  std::string name;
  int class_id = 0;
  int64_t count = 0;
  int64_t correct = 0;
  double accuracy = 0.0;
};

// Minority is the smaller slice of an annotated class; on a tie the
// above-threshold slice is the minority.
struct ClassSplitAccuracy {
  int class_id = 0;
  std::string minority_side;
  int64_t minority_count = 0;
  double minority_accuracy = 0.0;
  int64_t majority_count = 0;
  double majority_accuracy = 0.0;
};

struct EvalReport {
  std::string grouping;
  std::string split;
  int64_t count = 0;
  double average = 0.0;
  std::vector<GroupAccuracy> groups;  // nonempty groups only
  double worst_group = 0.0;
  std::string worst_group_name;
  double gap = 0.0;  // average - worst_group
  std::vector<ClassSplitAccuracy> class_splits;
  std::optional<double> mean_minority;
  std::optional<double> mean_majority;
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
};

// Input to the report: one entry per evaluated example.
struct GroupedOutcome {
  std::vector<uint8_t> correct;
  std::vector<int> group_of;
  std::vector<std::string> group_names;
  std::vector<int> group_class;  // class id of each group
};

// Average, per-group accuracies, worst group and gap. Groups without
// examples are left out with a warning.
EvalReport SummarizeGroups(const GroupedOutcome& outcome);

// `predicted` has one label per dataset example; only `split` is read.
EvalReport EvaluateLabels(const EmbeddingDataset& ds,
                          std::span<const int> predicted,
                          const Grouping& grouping, Split split);

EvalReport Evaluate(const LinearProbe& probe, const EmbeddingDataset& ds,
                    const Grouping& grouping, Split split);

// Zero-shot baseline: each example takes the class whose prompt vector is
// most cosine-similar in the annotation space (lowest id on ties). Reported
// with oracle groups when the dataset has them, classes otherwise.
EvalReport ZeroShotClassify(const EmbeddingDataset& ds,
                            std::span<const Eigen::VectorXd> class_text_vecs,
                            Split split);

}  // namespace slicefix

#endif  // SLICEFIX_EVALUATION_H_
