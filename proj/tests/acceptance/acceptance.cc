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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   acceptance                       run every criterion
//   acceptance --criterion <name>    run one criterion
//   acceptance --list                list criterion names

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "slicefix/dataset.h"
#include "slicefix/errors.h"
#include "slicefix/evaluation.h"
#include "slicefix/probe.h"
#include "slicefix/rng.h"
#include "slicefix/similarity.h"
#include "slicefix/synthetic.h"
#include "slicefix/text_encoder.h"
#include "unit/test_util.h"

namespace slicefix {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

class ScratchDir {
 public:
  ScratchDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("slicefix_acceptance_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Random similarity instance with 2..12 points, at least one per side. Half
// the instances draw from a coarse grid so ties are common.
struct Instance {
  std::vector<double> correct;
  std::vector<double> error;
};

Instance RandomInstance(SplitMix64& rng) {
  const int total = 2 + static_cast<int>(rng.Below(11));
  const int ne = 1 + static_cast<int>(rng.Below(static_cast<uint64_t>(total - 1)));
  Instance in;
  const bool coarse = rng.Below(2) == 0;
  for (int i = 0; i < total; ++i) {
    const double s = coarse ? static_cast<double>(rng.Below(9)) / 8.0 * 1.6 - 0.8
                            : 1.6 * rng.Uniform() - 0.8;
    (i < ne ? in.error : in.correct).push_back(s);
  }
  return in;
}

Outcome OracleEquivalence() {
  const auto start = Clock::now();
  SplitMix64 rng(1000);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const Instance in = RandomInstance(rng);
    const testing::SimFixture f = testing::MakeSimFixture(in.correct, in.error);
    const PromptScore fast = ScorePrompt(f.dataset, 0, f.correct, f.text);
    const OracleScore oracle =
        OracleErrorScore(fast.CorrectSimilarities(), fast.ErrorSimilarities());
    if (fast.error_score != oracle.error_score ||
        fast.threshold != oracle.threshold) {
      ++mismatches;
    }
  }
  const double secs = Seconds(start);
  return {mismatches == 0 && secs < 10.0,
          "1000 instances, " + std::to_string(mismatches) + " mismatches, " +
              Fmt(secs, 3) + " s"};
}

// Strictly increasing maps of [-1, 1].
double Monotone(int kind, double a, double b, double x) {
  switch (kind) {
    case 0:
      return a * x + b;
    case 1:
      return std::exp(a * x);
    case 2:
      return std::atan(a * x + b);
    case 3:
      return x + a * x * x * x;
    case 4:
      return 1.0 / (1.0 + std::exp(-a * x));
    default:
      return std::cbrt(x) * a + b;
  }
}

// Number of values strictly below tau, over the sorted distinct values.
int Position(const std::vector<double>& values, double tau) {
  return static_cast<int>(
      std::count_if(values.begin(), values.end(), [&](double v) { return v < tau; }));
}

Outcome RankInvariance() {
  SplitMix64 rng(2000);
  int instances = 0, maps = 0, failures = 0;
  while (instances < 100) {
    const Instance in = RandomInstance(rng);
    const ThresholdSearch base = SearchThreshold(in.correct, in.error);
    std::vector<double> all = in.correct;
    all.insert(all.end(), in.error.begin(), in.error.end());
    ++instances;
    int applied = 0;
    while (applied < 200) {
      const int kind = static_cast<int>(rng.Below(6));
      const double a = 0.25 + 3.0 * rng.Uniform();
      const double b = 2.0 * rng.Uniform() - 1.0;
      auto f = [&](double x) { return Monotone(kind, a, b, x); };
      // Skip draws that are not strictly increasing in floating point on
      // this instance.
      bool strict = true;
      for (double u : all) {
        for (double v : all) {
          if (u < v && !(f(u) < f(v))) strict = false;
        }
      }
      if (!strict) continue;
      Instance mapped;
      for (double s : in.correct) mapped.correct.push_back(f(s));
      for (double s : in.error) mapped.error.push_back(f(s));
      const ThresholdSearch m = SearchThreshold(mapped.correct, mapped.error);
      std::vector<double> mapped_all;
      for (double s : all) mapped_all.push_back(f(s));
      if (m.error_score != base.error_score ||
          Position(mapped_all, m.threshold) != Position(all, base.threshold)) {
        ++failures;
      }
      ++applied;
      ++maps;
    }
  }
  return {failures == 0, std::to_string(instances) + " instances x 200 maps, " +
                             std::to_string(failures) + " changed scores"};
}

// Two groups with exact accuracies wg and avg (per mille); see the
// evaluation unit tests.
GroupedOutcome PaperRow(int wg_permille, int avg_permille) {
  for (int m = 1000; m < 1000000; ++m) {
    const int64_t total = 1000 + m;
    if ((total * avg_permille) % 1000 != 0) continue;
    const int64_t k = total * avg_permille / 1000 - wg_permille;
    if (k < 0 || k > m || k * 1000 < static_cast<int64_t>(wg_permille) * m) continue;
    GroupedOutcome out;
    out.group_names = {"worst", "rest"};
    out.group_class = {0, 0};
    for (int i = 0; i < 1000; ++i) {
      out.group_of.push_back(0);
      out.correct.push_back(i < wg_permille ? 1 : 0);
    }
    for (int i = 0; i < m; ++i) {
      out.group_of.push_back(1);
      out.correct.push_back(i < k ? 1 : 0);
    }
    return out;
  }
  throw std::logic_error("no group sizes found");
}

Outcome GapArithmetic() {
  struct Row {
    int avg, wg;
    double gap;
  };
  const std::vector<Row> rows = {{960, 634, 32.6}, {954, 311, 64.3}, {921, 891, 3.0}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    const EvalReport rep = SummarizeGroups(PaperRow(r.wg, r.avg));
    const double gap = 100.0 * rep.gap;
    const bool row_ok = std::abs(gap - r.gap) <= 0.05 &&
                        std::abs(100.0 * rep.average - r.avg / 10.0) <= 0.05 &&
                        std::abs(100.0 * rep.worst_group - r.wg / 10.0) <= 0.05;
    ok = ok && row_ok;
    detail += (detail.empty() ? "" : ", ") + Fmt(r.avg / 10.0, 1) + "/" +
              Fmt(r.wg / 10.0, 1) + " -> " + Fmt(gap, 2);
  }
  return {ok, detail};
}

Outcome SyntheticRobustness() {
  const auto start = Clock::now();
  ScratchDir dir;
  WriteSynthetic(GenerateSynthetic(SyntheticConfig{}), dir.path());
  const std::vector<Objective> objectives{Objective::kErmUniform,
                                          Objective::kWorstSlice};
  const BenchReport r = RunBenchmark(dir.path(), objectives, "oracle");
  const EvalReport& erm = r.runs[0].report;
  const EvalReport& ws = r.runs[1].report;
  const double secs = Seconds(start);
  const double reduction = 1.0 - ws.gap / erm.gap;
  const bool erm_gap = erm.average - erm.worst_group >= 0.20;
  const bool wg_up = ws.worst_group > erm.worst_group;
  const bool halved = reduction >= 0.5;
  return {erm_gap && wg_up && halved && secs < 60.0,
          "erm avg " + Fmt(erm.average) + " wg " + Fmt(erm.worst_group) +
              " gap " + Fmt(erm.gap) + "; worst_slice avg " + Fmt(ws.average) +
              " wg " + Fmt(ws.worst_group) + " gap " + Fmt(ws.gap) +
              "; gap reduction " + Fmt(100 * reduction, 1) +
              "% (need >= 50%); " + Fmt(secs, 2) + " s"};
}

Outcome PartitionFidelity() {
  const SyntheticDataset s = GenerateSynthetic(SyntheticConfig{});
  const ErrorAnnotation& ann = *s.oracle_annotation;
  const int minority = std::stoi(ann.prompt.substr(ann.prompt.find('_') + 1));
  const SlicePartition p = PartitionClass(
      s.dataset, ann, Split::kTrain, FixtureEncodeText(s.vocab, ann.prompt));
  int agree = 0;
  for (int i : p.above) agree += s.dataset.groups()[i] == minority;
  for (int i : p.below) agree += s.dataset.groups()[i] != minority;
  const int total = static_cast<int>(p.above.size() + p.below.size());
  const double rate = static_cast<double>(agree) / total;
  return {rate >= 0.95,
          "class " + std::to_string(ann.class_id) + " prompt '" + ann.prompt +
              "' tau " + Fmt(ann.threshold) + ": " + std::to_string(agree) +
              "/" + std::to_string(total) + " = " + Fmt(100 * rate, 1) +
              "% agree (need >= 95%)"};
}

Outcome GradientCheck() {
  SplitMix64 rng(3000);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + static_cast<int>(rng.Below(8));
    const int c = 2 + static_cast<int>(rng.Below(3));
    const int n = 1 + static_cast<int>(rng.Below(32));
    Eigen::MatrixXd w(c, d), x(n, d);
    Eigen::VectorXd b(c);
    std::vector<int> y(static_cast<size_t>(n));
    for (int i = 0; i < c; ++i) {
      b(i) = rng.Normal();
      for (int j = 0; j < d; ++j) w(i, j) = rng.Normal();
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = rng.Normal();
      y[static_cast<size_t>(i)] = static_cast<int>(rng.Below(static_cast<uint64_t>(c)));
    }
    const LossAndGradient g = WeightedCrossEntropy(w, b, x, y, {});
    const double h = 1e-5;
    Eigen::MatrixXd fw(c, d);
    Eigen::VectorXd fb(c);
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < d; ++j) {
        Eigen::MatrixXd wp = w, wm = w;
        wp(i, j) += h;
        wm(i, j) -= h;
        fw(i, j) = (WeightedCrossEntropy(wp, b, x, y, {}).loss -
                    WeightedCrossEntropy(wm, b, x, y, {}).loss) /
                   (2 * h);
      }
      Eigen::VectorXd bp = b, bm = b;
      bp(i) += h;
      bm(i) -= h;
      fb(i) = (WeightedCrossEntropy(w, bp, x, y, {}).loss -
               WeightedCrossEntropy(w, bm, x, y, {}).loss) /
              (2 * h);
    }
    const double diff = std::sqrt((g.grad_weights - fw).squaredNorm() +
                                  (g.grad_bias - fb).squaredNorm());
    const double scale = std::max(
        {std::sqrt(g.grad_weights.squaredNorm() + g.grad_bias.squaredNorm()),
         std::sqrt(fw.squaredNorm() + fb.squaredNorm()), 1e-12});
    worst = std::max(worst, diff / scale);
  }
  std::ostringstream os;
  os << "100 instances, max relative error " << std::scientific
     << std::setprecision(2) << worst << " (need <= 1e-4)";
  return {worst <= 1e-4, os.str()};
}

Outcome Determinism() {
  ScratchDir dir;
  WriteSynthetic(GenerateSynthetic(SyntheticConfig{}), dir.path());
  const std::vector<Objective> objectives{
      Objective::kErmUniform,    Objective::kClassBalanced,
      Objective::kWorstClass,    Objective::kSliceBalanced,
      Objective::kWorstSlice,    Objective::kGroupDroOracle};
  const std::string a =
      RunBenchmark(dir.path(), objectives, "oracle").ToJson(false).dump(2);
  const std::string b =
      RunBenchmark(dir.path(), objectives, "oracle").ToJson(false).dump(2);
  return {a == b, "6 objectives, reports " + std::to_string(a.size()) +
                      " bytes, " + (a == b ? "identical" : "different")};
}

Outcome DroDominance() {
  SplitMix64 rng(4000);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const int d = 2 + static_cast<int>(rng.Below(7));
    const int c = 2 + static_cast<int>(rng.Below(3));
    const int n = 2 + static_cast<int>(rng.Below(63));
    const int k = 1 + static_cast<int>(rng.Below(6));
    Eigen::MatrixXd w(c, d), x(n, d);
    Eigen::VectorXd b(c);
    std::vector<int> y(static_cast<size_t>(n)), slice(static_cast<size_t>(n));
    for (int i = 0; i < c; ++i) {
      b(i) = rng.Normal();
      for (int j = 0; j < d; ++j) w(i, j) = 2 * rng.Normal();
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = rng.Normal();
      y[static_cast<size_t>(i)] = static_cast<int>(rng.Below(static_cast<uint64_t>(c)));
      slice[static_cast<size_t>(i)] = static_cast<int>(rng.Below(static_cast<uint64_t>(k)));
    }
    const std::vector<double> losses = PerExampleLoss(w, b, x, y);
    if (WorstGroupLoss(losses, slice, k).loss < MeanLoss(losses)) ++violations;
  }
  return {violations == 0,
          "1000 batches, " + std::to_string(violations) + " violations"};
}

Outcome ClassPruning() {
  const std::map<int, double> acc = {{0, 0.1}, {1, 0.2}, {2, 0.8}, {3, 0.81}};
  const std::vector<int> kept = SelectCandidateClasses(acc);
  const bool ok = kept == std::vector<int>{1, 2};
  return {ok, std::string("0.1 ") +
                  (std::count(kept.begin(), kept.end(), 0) ? "in" : "out") +
                  ", 0.2 " + (std::count(kept.begin(), kept.end(), 1) ? "in" : "out") +
                  ", 0.8 " + (std::count(kept.begin(), kept.end(), 2) ? "in" : "out") +
                  ", 0.81 " + (std::count(kept.begin(), kept.end(), 3) ? "in" : "out")};
}

// Annotation loop on synthetic data with the fixture encoder read from disk:
// no remote encoder, adapter or UI involved.
Outcome NoSecondary() {
  ScratchDir dir;
  WriteSynthetic(GenerateSynthetic(SyntheticConfig{}), dir.path());
  const EmbeddingDataset ds = LoadDataset(dir.path());
  const auto encoder =
      FixtureTextEncoder::FromFile(*DatasetVocabPath(dir.path()));
  const LinearProbe baseline = TrainProbe(ds, TrainConfig{});
  const std::vector<uint8_t> correct = CorrectnessFlags(baseline, ds);
  const ErrorAnnotation oracle =
      LoadAnnotations(dir.path() / kOracleAnnotationFile).at(0);
  const Eigen::VectorXd text = encoder->Encode(oracle.prompt);
  const PromptScore score = ScorePrompt(ds, oracle.class_id, correct, text,
                                        oracle.prompt);
  ErrorAnnotation ann = oracle;
  ann.threshold = score.threshold;
  const std::vector<SlicePartition> slices{
      PartitionClass(ds, ann, Split::kTrain, text)};
  TrainConfig config;
  config.objective = Objective::kWorstSlice;
  const LinearProbe retrained = TrainProbe(ds, config, slices);
  const EvalReport before =
      Evaluate(baseline, ds, Grouping::OracleGroups(), Split::kVal);
  const EvalReport after =
      Evaluate(retrained, ds, Grouping::OracleGroups(), Split::kVal);
  const bool ok = score.threshold == oracle.threshold &&
                  score.error_score == oracle.error_score;
  return {ok, "fixture encoder + synthetic data; oracle prompt score " +
                  Fmt(score.error_score) + ", wg " + Fmt(before.worst_group) +
                  " -> " + Fmt(after.worst_group)};
}

struct Criterion {
  const char* name;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& Criteria() {
  static const std::vector<Criterion> all = {
      {"oracle_equivalence", "error-score oracle equivalence", OracleEquivalence},
      {"rank_invariance", "rank invariance", RankInvariance},
      {"gap_arithmetic", "gap arithmetic", GapArithmetic},
      {"synthetic_robustness", "synthetic robustness end-to-end",
       SyntheticRobustness},
      {"partition_fidelity", "partition fidelity", PartitionFidelity},
      {"gradient_check", "gradient check", GradientCheck},
      {"determinism", "determinism", Determinism},
      {"dro_dominance", "DRO dominance", DroDominance},
      {"class_pruning", "class pruning boundary table", ClassPruning},
      {"no_secondary", "no secondary component", NoSecondary},
  };
  return all;
}

}  // namespace
}  // namespace slicefix

int main(int argc, char** argv) {
  using slicefix::Criteria;
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--list") == 0) {
      for (const auto& c : Criteria()) std::cout << c.name << '\n';
      return 0;
    }
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--list] [--criterion <name>]\n";
      return 2;
    }
  }
  int selected = 0, failed = 0;
  for (const auto& c : Criteria()) {
    if (!only.empty() && only != c.name) continue;
    ++selected;
    slicefix::Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << c.title
              << "): " << o.detail << std::endl;
  }
  if (selected == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
