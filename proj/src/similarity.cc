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

#include "slicefix/similarity.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "slicefix/errors.h"

namespace slicefix {
namespace {

double BalancedAccuracy(int64_t true_pos, int64_t n_error, int64_t true_neg,
                        int64_t n_correct) {
  return 0.5 * (static_cast<double>(true_pos) / static_cast<double>(n_error) +
                static_cast<double>(true_neg) / static_cast<double>(n_correct));
}

void RequireNonEmpty(std::span<const double> s_correct,
                     std::span<const double> s_error) {
  if (s_correct.empty() || s_error.empty()) {
    throw InvalidArgumentError(
        "threshold scoring needs nonempty correct and error similarity sets");
  }
}

}  // namespace

double CosineSim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw InvalidArgumentError("cosine similarity of vectors with dimensions " +
                               std::to_string(u.size()) + " and " +
                               std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0.0 || vv == 0.0) {
    throw InvalidArgumentError("cosine similarity with a zero vector");
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::vector<double> Similarities(const RowMatrixF& embeddings,
                                 std::span<const int> rows,
                                 const Eigen::VectorXd& text) {
  if (text.size() != embeddings.cols()) {
    throw InvalidArgumentError(
        "text vector dimension " + std::to_string(text.size()) +
        " does not match embedding dimension " +
        std::to_string(embeddings.cols()));
  }
  std::vector<double> row(static_cast<size_t>(embeddings.cols()));
  std::vector<double> out;
  out.reserve(rows.size());
  for (int r : rows) {
    for (Eigen::Index k = 0; k < embeddings.cols(); ++k) {
      row[static_cast<size_t>(k)] = embeddings(r, k);
    }
    out.push_back(CosineSim(row, std::span<const double>(text.data(),
                                                         text.size())));
  }
  return out;
}

ThresholdScore ScoreAtThreshold(std::span<const double> s_correct,
                                std::span<const double> s_error, double tau) {
  RequireNonEmpty(s_correct, s_error);
  const auto tp = std::count_if(s_error.begin(), s_error.end(),
                                [tau](double s) { return s > tau; });
  const auto tn = std::count_if(s_correct.begin(), s_correct.end(),
                                [tau](double s) { return s <= tau; });
  ThresholdScore out;
  out.balanced_accuracy =
      BalancedAccuracy(tp, static_cast<int64_t>(s_error.size()), tn,
                       static_cast<int64_t>(s_correct.size()));
  out.error_score = std::max(0.0, 2.0 * (out.balanced_accuracy - 0.5));
  return out;
}

ThresholdSearch SearchThreshold(std::span<const double> s_correct,
                                std::span<const double> s_error) {
  RequireNonEmpty(s_correct, s_error);
  const auto n_correct = static_cast<int64_t>(s_correct.size());
  const auto n_error = static_cast<int64_t>(s_error.size());

  // (similarity, is_error), ascending.
  std::vector<std::pair<double, bool>> points;
  points.reserve(s_correct.size() + s_error.size());
  for (double s : s_correct) points.emplace_back(s, false);
  for (double s : s_error) points.emplace_back(s, true);
  std::sort(points.begin(), points.end());

  // Lower sentinel: every point is above tau.
  int64_t tp = n_error;
  int64_t fp = n_correct;
  ThresholdSearch best;
  best.threshold = points.front().first - 1.0;
  best.balanced_accuracy = BalancedAccuracy(tp, n_error, n_correct - fp,
                                            n_correct);
  best.error_score = 2.0 * (best.balanced_accuracy - 0.5);

  size_t i = 0;
  while (i < points.size()) {
    const double value = points[i].first;
    while (i < points.size() && points[i].first == value) {
      (points[i].second ? tp : fp) -= 1;
      ++i;
    }
    double tau;
    if (i == points.size()) {
      tau = value + 1.0;
    } else {
      const double next = points[i].first;
      tau = 0.5 * (value + next);
      if (!(tau < next)) tau = value;
    }
    const double acc = BalancedAccuracy(tp, n_error, n_correct - fp, n_correct);
    const double score = 2.0 * (acc - 0.5);
    if (score > best.error_score) {
      best = {tau, acc, score};
    }
  }
  best.error_score = std::max(0.0, best.error_score);
  return best;
}

std::vector<double> PromptScore::CorrectSimilarities() const {
  std::vector<double> out;
  for (size_t i = 0; i < similarities.size(); ++i) {
    if (!is_error[i]) out.push_back(similarities[i]);
  }
  return out;
}

std::vector<double> PromptScore::ErrorSimilarities() const {
  std::vector<double> out;
  for (size_t i = 0; i < similarities.size(); ++i) {
    if (is_error[i]) out.push_back(similarities[i]);
  }
  return out;
}

PromptScore ScorePrompt(const EmbeddingDataset& ds, int class_id,
                        std::span<const uint8_t> correct,
                        const Eigen::VectorXd& text_vec, std::string prompt) {
  if (class_id < 0 || class_id >= ds.num_classes()) {
    throw NotFoundError("unknown class " + std::to_string(class_id));
  }
  if (correct.size() != static_cast<size_t>(ds.count())) {
    throw InvalidArgumentError("correctness flags must cover every example");
  }
  PromptScore out;
  out.class_id = class_id;
  out.prompt = std::move(prompt);
  out.example_ids = ds.ClassIndices(class_id, Split::kVal);
  out.similarities =
      Similarities(ds.annotation_embeddings(), out.example_ids, text_vec);
  std::vector<double> s_correct, s_error;
  for (size_t i = 0; i < out.example_ids.size(); ++i) {
    const bool err = correct[static_cast<size_t>(out.example_ids[i])] == 0;
    out.is_error.push_back(err ? 1 : 0);
    (err ? s_error : s_correct).push_back(out.similarities[i]);
  }
  if (s_error.empty()) {
    throw FailedPreconditionError("no errors to explain in class " +
                                  std::to_string(class_id));
  }
  if (s_correct.empty()) {
    throw FailedPreconditionError("no correct predictions in class " +
                                  std::to_string(class_id));
  }
  const ThresholdSearch search = SearchThreshold(s_correct, s_error);
  out.threshold = search.threshold;
  out.balanced_accuracy = search.balanced_accuracy;
  out.error_score = search.error_score;
  for (double s : out.similarities) {
    (s > out.threshold ? out.count_above : out.count_below) += 1;
  }
  return out;
}

const char* ThresholdSourceName(ThresholdSource s) {
  return s == ThresholdSource::kAuto ? "auto-threshold" : "user-threshold";
}

ThresholdSource ParseThresholdSource(std::string_view name) {
  if (name == "auto-threshold") return ThresholdSource::kAuto;
  if (name == "user-threshold") return ThresholdSource::kUser;
  throw InvalidArgumentError("unknown threshold source '" + std::string(name) +
                             "'");
}

nlohmann::json AnnotationToJson(const ErrorAnnotation& a) {
  return {{"class_id", a.class_id},
          {"prompt", a.prompt},
          {"threshold", a.threshold},
          {"error_score", a.error_score},
          {"source", ThresholdSourceName(a.source)}};
}

ErrorAnnotation AnnotationFromJson(const nlohmann::json& j) {
  ErrorAnnotation a;
  try {
    a.class_id = j.at("class_id").get<int>();
    a.prompt = j.at("prompt").get<std::string>();
    a.threshold = j.at("threshold").get<double>();
    a.error_score = j.value("error_score", 0.0);
    a.source = ParseThresholdSource(j.value("source", "auto-threshold"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError("bad annotation: " + std::string(e.what()));
  }
  if (!std::isfinite(a.threshold)) {
    throw InvalidArgumentError("annotation threshold must be finite");
  }
  if (!(a.error_score >= 0.0 && a.error_score <= 1.0)) {
    throw InvalidArgumentError("annotation error score must lie in [0, 1]");
  }
  return a;
}

std::vector<ErrorAnnotation> LoadAnnotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing annotation file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError("unparsable annotations: " +
                               std::string(e.what()));
  }
  std::vector<ErrorAnnotation> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(AnnotationFromJson(item));
  } else {
    out.push_back(AnnotationFromJson(j));
  }
  return out;
}

void WriteAnnotations(std::span<const ErrorAnnotation> annotations,
                      const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : annotations) j.push_back(AnnotationToJson(a));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SlicePartition PartitionClass(const EmbeddingDataset& ds,
                              const ErrorAnnotation& annotation, Split split,
                              const Eigen::VectorXd& text_vec) {
  if (!std::isfinite(annotation.threshold)) {
    throw InvalidArgumentError("annotation threshold must be finite");
  }
  SlicePartition out;
  out.class_id = annotation.class_id;
  out.split = split;
  const auto ids = ds.ClassIndices(annotation.class_id, split);
  const auto sims = Similarities(ds.annotation_embeddings(), ids, text_vec);
  for (size_t i = 0; i < ids.size(); ++i) {
    (sims[i] > annotation.threshold ? out.above : out.below).push_back(ids[i]);
  }
  return out;
}

KeywordRanking RankKeywords(const EmbeddingDataset& ds, int class_id,
                            std::span<const uint8_t> correct,
                            const KeywordVectors& keywords) {
  KeywordRanking out;
  for (const auto& [keyword, vec] : keywords) {
    try {
      out.ranked.push_back(
          {keyword, ScorePrompt(ds, class_id, correct, vec, keyword)});
    } catch (const Error& e) {
      out.skipped.push_back({keyword, e.what()});
    }
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const RankedKeyword& a, const RankedKeyword& b) {
                     if (a.score.error_score != b.score.error_score) {
                       return a.score.error_score > b.score.error_score;
                     }
                     return a.keyword < b.keyword;
                   });
  return out;
}

std::vector<int> SelectCandidateClasses(
    const std::map<int, double>& per_class_accuracy, double low, double high) {
  std::vector<int> out;
  for (const auto& [class_id, acc] : per_class_accuracy) {
    if (acc >= low && acc <= high) out.push_back(class_id);
  }
  return out;
}

ClassRanking RankClasses(std::span<const int> candidates,
                         const std::map<int, KeywordVectors>& pools,
                         const EmbeddingDataset& ds,
                         std::span<const uint8_t> correct, int top_k) {
  ClassRanking out;
  for (int class_id : candidates) {
    auto it = pools.find(class_id);
    if (it == pools.end() || it->second.empty()) {
      out.dropped.emplace_back(class_id, "empty keyword pool");
      continue;
    }
    const KeywordRanking ranking =
        RankKeywords(ds, class_id, correct, it->second);
    if (ranking.ranked.empty()) {
      out.dropped.emplace_back(class_id, ranking.skipped.empty()
                                             ? "no scoreable keyword"
                                             : ranking.skipped.front().reason);
      continue;
    }
    out.ranked.push_back({class_id, ranking.ranked.front().score.error_score,
                          ranking.ranked.front().keyword});
  }
  std::sort(out.ranked.begin(), out.ranked.end(),
            [](const RankedClass& a, const RankedClass& b) {
              if (a.best_error_score != b.best_error_score) {
                return a.best_error_score > b.best_error_score;
              }
              return a.class_id < b.class_id;
            });
  if (top_k >= 0 && out.ranked.size() > static_cast<size_t>(top_k)) {
    out.ranked.resize(static_cast<size_t>(top_k));
  }
  return out;
}

std::vector<ErrorAnnotation> FinalizeBestAnnotations(
    std::span<const ScoredPrompt> history) {
  std::map<int, const ScoredPrompt*> best;
  for (const ScoredPrompt& p : history) {
    auto [it, inserted] = best.try_emplace(p.class_id, &p);
    if (inserted) continue;
    const ScoredPrompt& cur = *it->second;
    const double a = p.effective_score(), b = cur.effective_score();
    if (a > b || (a == b && p.submission < cur.submission)) it->second = &p;
  }
  std::vector<ErrorAnnotation> out;
  for (const auto& [class_id, p] : best) {
    ErrorAnnotation ann;
    ann.class_id = class_id;
    ann.prompt = p->prompt;
    ann.error_score = p->effective_score();
    if (p->user_threshold) {
      ann.threshold = *p->user_threshold;
      ann.source = ThresholdSource::kUser;
    } else {
      ann.threshold = p->auto_threshold;
      ann.source = ThresholdSource::kAuto;
    }
    out.push_back(std::move(ann));
  }
  return out;
}

KeywordPools LoadKeywordPools(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing keyword pool file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError("unparsable keyword pools: " +
                               std::string(e.what()));
  }
  if (!j.is_object()) {
    throw InvalidArgumentError("keyword pools must map class id to a list");
  }
  KeywordPools out;
  for (const auto& [key, list] : j.items()) {
    int class_id;
    try {
      class_id = std::stoi(key);
    } catch (const std::exception&) {
      throw InvalidArgumentError("keyword pool key '" + key +
                                 "' is not a class id");
    }
    auto words = list.get<std::vector<std::string>>();
    if (words.size() > kMaxKeywordsPerClass) {
      out.warnings.push_back("class " + key + ": " +
                             std::to_string(words.size()) +
                             " keywords, keeping the first " +
                             std::to_string(kMaxKeywordsPerClass));
      words.resize(kMaxKeywordsPerClass);
    }
    out.pools[class_id] = std::move(words);
  }
  return out;
}

}  // namespace slicefix
