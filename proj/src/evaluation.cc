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

#include "slicefix/evaluation.h"

#include <algorithm>
#include <map>
#include <set>

#include "slicefix/errors.h"

namespace slicefix {

using json = nlohmann::json;

const char* GroupingName(GroupingKind kind) {
  switch (kind) {
    case GroupingKind::kOracleGroups:
      return "oracle";
    case GroupingKind::kAnnotationSlices:
      return "annotation_slices";
    case GroupingKind::kClassesOnly:
      return "classes_only";
  }
  return "unknown";
}

GroupingKind ParseGrouping(std::string_view name) {
  if (name == "oracle" || name == "oracle_groups") {
    return GroupingKind::kOracleGroups;
  }
  if (name == "annotation_slices") return GroupingKind::kAnnotationSlices;
  if (name == "classes_only") return GroupingKind::kClassesOnly;
  throw InvalidArgumentError("unknown grouping '" + std::string(name) + "'");
}

json EvalReport::ToJson() const {
  json g = json::array();
  for (const auto& a : groups) {
    g.push_back({{"name", a.name},
                 {"class_id", a.class_id},
                 {"count", a.count},
                 {"correct", a.correct},
                 {"accuracy", a.accuracy}});
  }
  json splits = json::array();
  for (const auto& s : class_splits) {
    splits.push_back({{"class_id", s.class_id},
                      {"minority_side", s.minority_side},
                      {"minority_count", s.minority_count},
                      {"minority_accuracy", s.minority_accuracy},
                      {"majority_count", s.majority_count},
                      {"majority_accuracy", s.majority_accuracy}});
  }
  json j = {{"grouping", grouping},
            {"split", split},
            {"count", count},
            {"average", average},
            {"groups", g},
            {"worst_group", worst_group},
            {"worst_group_name", worst_group_name},
            {"gap", gap},
            {"class_splits", splits},
            {"warnings", warnings}};
  j["mean_minority"] = mean_minority ? json(*mean_minority) : json(nullptr);
  j["mean_majority"] = mean_majority ? json(*mean_majority) : json(nullptr);
  return j;
}

EvalReport SummarizeGroups(const GroupedOutcome& outcome) {
  const size_t n = outcome.correct.size();
  if (outcome.group_of.size() != n) {
    throw InvalidArgumentError("group assignment length mismatch");
  }
  if (n == 0) throw InvalidArgumentError("nothing to evaluate");
  const size_t k = outcome.group_names.size();
  std::vector<int64_t> count(k, 0), correct(k, 0);
  int64_t total_correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const int g = outcome.group_of[i];
    if (g < 0 || static_cast<size_t>(g) >= k) {
      throw InvalidArgumentError("group id out of range");
    }
    count[static_cast<size_t>(g)] += 1;
    correct[static_cast<size_t>(g)] += outcome.correct[i] ? 1 : 0;
    total_correct += outcome.correct[i] ? 1 : 0;
  }
  EvalReport r;
  r.count = static_cast<int64_t>(n);
  r.average = static_cast<double>(total_correct) / static_cast<double>(n);
  bool have_worst = false;
  for (size_t g = 0; g < k; ++g) {
    if (count[g] == 0) {
      r.warnings.push_back("group '" + outcome.group_names[g] +
                           "' is empty and excluded from worst-group");
      continue;
    }
    GroupAccuracy a;
    a.name = outcome.group_names[g];
    a.class_id = outcome.group_class.empty() ? 0 : outcome.group_class[g];
    a.count = count[g];
    a.correct = correct[g];
    a.accuracy = static_cast<double>(correct[g]) / static_cast<double>(count[g]);
    if (!have_worst || a.accuracy < r.worst_group) {
      r.worst_group = a.accuracy;
      r.worst_group_name = a.name;
      have_worst = true;
    }
    r.groups.push_back(std::move(a));
  }
  r.gap = r.average - r.worst_group;
  return r;
}

EvalReport EvaluateLabels(const EmbeddingDataset& ds,
                          std::span<const int> predicted,
                          const Grouping& grouping, Split split) {
  if (predicted.size() != static_cast<size_t>(ds.count())) {
    throw InvalidArgumentError("one predicted label per example is required");
  }
  const auto ids = ds.Indices(split);
  const int num_classes = ds.num_classes();
  GroupedOutcome out;
  std::vector<int> group_of_example(static_cast<size_t>(ds.count()), -1);

  // Annotated classes: slot index of the above/below groups.
  std::map<int, std::pair<int, int>> slice_groups;
  switch (grouping.kind) {
    case GroupingKind::kOracleGroups: {
      if (!ds.has_groups()) {
        throw FailedPreconditionError("oracle grouping needs the group column");
      }
      for (int c = 0; c < num_classes; ++c) {
        for (int g = 0; g < ds.num_groups(); ++g) {
          out.group_names.push_back(ds.class_names()[c] + "/g" +
                                    std::to_string(g));
          out.group_class.push_back(c);
        }
      }
      for (int i : ids) {
        group_of_example[static_cast<size_t>(i)] =
            ds.labels()[i] * ds.num_groups() + ds.groups()[i];
      }
      break;
    }
    case GroupingKind::kClassesOnly: {
      for (int c = 0; c < num_classes; ++c) {
        out.group_names.push_back(ds.class_names()[c]);
        out.group_class.push_back(c);
      }
      for (int i : ids) group_of_example[static_cast<size_t>(i)] = ds.labels()[i];
      break;
    }
    case GroupingKind::kAnnotationSlices: {
      if (grouping.slices.empty()) {
        throw FailedPreconditionError(
            "annotation_slices grouping needs at least one annotation");
      }
      std::set<int> seen;
      for (const auto& s : grouping.slices) {
        if (s.split != split) {
          throw InvalidArgumentError("annotation slices were computed on a "
                                     "different split");
        }
        if (s.class_id < 0 || s.class_id >= num_classes) {
          throw InvalidArgumentError("slice references unknown class");
        }
        if (!seen.insert(s.class_id).second) {
          throw InvalidArgumentError("two slice partitions for one class");
        }
      }
      for (int c = 0; c < num_classes; ++c) {
        auto it = std::find_if(
            grouping.slices.begin(), grouping.slices.end(),
            [c](const SlicePartition& s) { return s.class_id == c; });
        if (it == grouping.slices.end()) {
          out.group_names.push_back(ds.class_names()[c]);
          out.group_class.push_back(c);
          for (int i : ids) {
            if (ds.labels()[i] == c) group_of_example[static_cast<size_t>(i)] =
                static_cast<int>(out.group_names.size()) - 1;
          }
          continue;
        }
        const int above = static_cast<int>(out.group_names.size());
        out.group_names.push_back(ds.class_names()[c] + "/above");
        out.group_class.push_back(c);
        out.group_names.push_back(ds.class_names()[c] + "/below");
        out.group_class.push_back(c);
        slice_groups[c] = {above, above + 1};
        for (int i : it->above) group_of_example[static_cast<size_t>(i)] = above;
        for (int i : it->below) {
          group_of_example[static_cast<size_t>(i)] = above + 1;
        }
      }
      break;
    }
  }

  for (int i : ids) {
    const int g = group_of_example[static_cast<size_t>(i)];
    if (g < 0) {
      throw InvalidArgumentError("example " + std::to_string(i) +
                                 " is not covered by the grouping");
    }
    out.group_of.push_back(g);
    out.correct.push_back(predicted[static_cast<size_t>(i)] == ds.labels()[i]);
  }
  EvalReport r = SummarizeGroups(out);
  r.grouping = GroupingName(grouping.kind);
  r.split = SplitName(split);

  if (!slice_groups.empty()) {
    std::map<std::string, const GroupAccuracy*> by_name;
    for (const auto& g : r.groups) by_name[g.name] = &g;
    double minority_sum = 0.0, majority_sum = 0.0;
    int used = 0;
    for (const auto& [c, pair] : slice_groups) {
      auto above = by_name.find(out.group_names[static_cast<size_t>(pair.first)]);
      auto below = by_name.find(out.group_names[static_cast<size_t>(pair.second)]);
      if (above == by_name.end() || below == by_name.end()) {
        r.warnings.push_back("class " + std::to_string(c) +
                             " has an empty slice on " + r.split +
                             "; minority/majority split skipped");
        continue;
      }
      const bool above_minor = above->second->count <= below->second->count;
      const GroupAccuracy& minor = *(above_minor ? above : below)->second;
      const GroupAccuracy& major = *(above_minor ? below : above)->second;
      r.class_splits.push_back({c, above_minor ? "above" : "below", minor.count,
                                minor.accuracy, major.count, major.accuracy});
      minority_sum += minor.accuracy;
      majority_sum += major.accuracy;
      ++used;
    }
    if (used > 0) {
      r.mean_minority = minority_sum / used;
      r.mean_majority = majority_sum / used;
    }
  }
  return r;
}

EvalReport Evaluate(const LinearProbe& probe, const EmbeddingDataset& ds,
                    const Grouping& grouping, Split split) {
  if (probe.num_classes() != ds.num_classes()) {
    throw InvalidArgumentError("probe has " +
                               std::to_string(probe.num_classes()) +
                               " classes, dataset has " +
                               std::to_string(ds.num_classes()));
  }
  const Predictions pred = Predict(probe, ds.embeddings());
  return EvaluateLabels(ds, pred.labels, grouping, split);
}

EvalReport ZeroShotClassify(const EmbeddingDataset& ds,
                            std::span<const Eigen::VectorXd> class_text_vecs,
                            Split split) {
  if (class_text_vecs.size() != static_cast<size_t>(ds.num_classes())) {
    throw InvalidArgumentError("need one prompt vector per class");
  }
  const RowMatrixF& x = ds.annotation_embeddings();
  std::vector<int> all(static_cast<size_t>(ds.count()));
  for (int i = 0; i < ds.count(); ++i) all[static_cast<size_t>(i)] = i;
  std::vector<std::vector<double>> sims;
  for (const auto& t : class_text_vecs) sims.push_back(Similarities(x, all, t));
  std::vector<int> predicted(static_cast<size_t>(ds.count()), 0);
  for (size_t i = 0; i < predicted.size(); ++i) {
    int best = 0;
    for (size_t c = 1; c < sims.size(); ++c) {
      if (sims[c][i] > sims[static_cast<size_t>(best)][i]) best = static_cast<int>(c);
    }
    predicted[i] = best;
  }
  return EvaluateLabels(ds, predicted,
                        ds.has_groups() ? Grouping::OracleGroups()
                                        : Grouping::ClassesOnly(),
                        split);
}

}  // namespace slicefix
