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

#include "slicefix/probe.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <map>

#include "slicefix/errors.h"
#include "slicefix/rng.h"

namespace slicefix {
namespace {

using json = nlohmann::json;

constexpr char kProbeMagic[8] = {'S', 'F', 'P', 'R', 'O', 'B', 'E', '1'};

constexpr std::pair<Objective, const char*> kObjectiveNames[] = {
    {Objective::kErmUniform, "erm_uniform"},
    {Objective::kClassBalanced, "class_balanced"},
    {Objective::kWorstClass, "worst_class"},
    {Objective::kSliceBalanced, "slice_balanced"},
    {Objective::kWorstSlice, "worst_slice"},
    {Objective::kGroupDroOracle, "group_dro_oracle"},
};

// Row-wise log-sum-exp of logits.
double LogSumExp(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

Eigen::MatrixXd Logits(const Eigen::MatrixXd& weights,
                       const Eigen::VectorXd& bias,
                       const Eigen::MatrixXd& features) {
  Eigen::MatrixXd z = features * weights.transpose();
  z.rowwise() += bias.transpose();
  return z;
}

void CheckShapes(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                 const Eigen::MatrixXd& features, std::span<const int> labels) {
  if (features.cols() != weights.cols() || bias.size() != weights.rows() ||
      static_cast<size_t>(features.rows()) != labels.size()) {
    throw InvalidArgumentError("loss inputs have inconsistent shapes");
  }
  for (int y : labels) {
    if (y < 0 || y >= weights.rows()) {
      throw InvalidArgumentError("label out of range in loss");
    }
  }
}

// Train-split positions of each stratification group, in a fixed order.
struct Strata {
  std::vector<std::vector<int>> members;
  std::vector<std::string> names;
};

// Draws equal counts from each stratum. A stratum walks through a shuffled
// copy of its members and reshuffles when exhausted, so small strata are
// oversampled.
class StratifiedSampler {
 public:
  StratifiedSampler(const Strata& strata, SplitMix64& rng)
      : strata_(strata), rng_(rng), order_(strata.members.size()),
        cursor_(strata.members.size(), 0) {
    for (size_t k = 0; k < order_.size(); ++k) Refill(k);
  }

  int Draw(size_t k) {
    if (cursor_[k] == order_[k].size()) Refill(k);
    return order_[k][cursor_[k]++];
  }

 private:
  void Refill(size_t k) {
    order_[k] = strata_.members[k];
    rng_.Shuffle(order_[k]);
    cursor_[k] = 0;
  }

  const Strata& strata_;
  SplitMix64& rng_;
  std::vector<std::vector<int>> order_;
  std::vector<size_t> cursor_;
};

// Maps dataset indices of train examples to their train positions.
std::vector<int> TrainPositions(const EmbeddingDataset& ds,
                                std::span<const int> train) {
  std::vector<int> pos(static_cast<size_t>(ds.count()), -1);
  for (size_t p = 0; p < train.size(); ++p) {
    pos[static_cast<size_t>(train[p])] = static_cast<int>(p);
  }
  return pos;
}

// Checks that every slice is a two-way cover of its class on the train split
// and returns them keyed by class.
std::map<int, const SlicePartition*> IndexSlices(
    const EmbeddingDataset& ds, std::span<const SlicePartition> slices) {
  std::map<int, const SlicePartition*> by_class;
  for (const SlicePartition& s : slices) {
    if (s.class_id < 0 || s.class_id >= ds.num_classes()) {
      throw InvalidArgumentError("slice references unknown class " +
                                 std::to_string(s.class_id));
    }
    if (s.split != Split::kTrain) {
      throw InvalidArgumentError("slices for training must be computed on "
                                 "the train split (class " +
                                 std::to_string(s.class_id) + ")");
    }
    if (!by_class.emplace(s.class_id, &s).second) {
      throw InvalidArgumentError("two slice partitions for class " +
                                 std::to_string(s.class_id));
    }
    if (s.above.empty() || s.below.empty()) {
      throw FailedPreconditionError(
          "annotation for class " + std::to_string(s.class_id) +
          " is degenerate: " + (s.above.empty() ? "above" : "below") +
          "-threshold slice is empty on the train split");
    }
    const size_t expected = ds.ClassIndices(s.class_id, Split::kTrain).size();
    if (s.above.size() + s.below.size() != expected) {
      throw InvalidArgumentError("slices for class " +
                                 std::to_string(s.class_id) +
                                 " do not cover the class's train examples");
    }
    for (const auto* side : {&s.above, &s.below}) {
      for (int i : *side) {
        if (i < 0 || i >= ds.count() || ds.labels()[i] != s.class_id ||
            ds.split()[i] != Split::kTrain) {
          throw InvalidArgumentError("slice for class " +
                                     std::to_string(s.class_id) +
                                     " lists a foreign example");
        }
      }
    }
  }
  return by_class;
}

Strata BuildStrata(const EmbeddingDataset& ds, const TrainConfig& config,
                   std::span<const int> train,
                   const std::map<int, const SlicePartition*>& slices) {
  const auto pos = TrainPositions(ds, train);
  const int num_classes = ds.num_classes();
  std::vector<std::vector<int>> by_class(static_cast<size_t>(num_classes));
  for (size_t p = 0; p < train.size(); ++p) {
    by_class[static_cast<size_t>(ds.labels()[train[p]])].push_back(
        static_cast<int>(p));
  }
  Strata strata;
  auto add = [&strata](std::vector<int> m, std::string name) {
    if (m.empty()) return;
    strata.members.push_back(std::move(m));
    strata.names.push_back(std::move(name));
  };
  auto to_positions = [&pos](const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(pos[static_cast<size_t>(i)]);
    return out;
  };
  switch (config.objective) {
    case Objective::kWorstClass:
      for (int c = 0; c < num_classes; ++c) {
        add(by_class[static_cast<size_t>(c)], "class " + std::to_string(c));
      }
      break;
    case Objective::kWorstSlice:
      for (int c = 0; c < num_classes; ++c) {
        auto it = slices.find(c);
        if (it == slices.end()) {
          add(by_class[static_cast<size_t>(c)], "class " + std::to_string(c));
        } else {
          add(to_positions(it->second->above),
              "class " + std::to_string(c) + " above");
          add(to_positions(it->second->below),
              "class " + std::to_string(c) + " below");
        }
      }
      break;
    case Objective::kGroupDroOracle:
      for (int c = 0; c < num_classes; ++c) {
        for (int g = 0; g < ds.num_groups(); ++g) {
          std::vector<int> m;
          for (int p : by_class[static_cast<size_t>(c)]) {
            if (ds.groups()[train[static_cast<size_t>(p)]] == g) m.push_back(p);
          }
          add(std::move(m),
              "class " + std::to_string(c) + " group " + std::to_string(g));
        }
      }
      break;
    default:
      break;
  }
  return strata;
}

bool IsStratified(Objective o) {
  return o == Objective::kWorstClass || o == Objective::kWorstSlice ||
         o == Objective::kGroupDroOracle;
}

uint64_t Fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const char* ObjectiveName(Objective objective) {
  for (const auto& [o, name] : kObjectiveNames) {
    if (o == objective) return name;
  }
  return "unknown";
}

Objective ParseObjective(std::string_view name) {
  for (const auto& [o, n] : kObjectiveNames) {
    if (name == n) return o;
  }
  throw InvalidArgumentError("unknown objective '" + std::string(name) + "'");
}

bool IsSliceObjective(Objective objective) {
  return objective == Objective::kSliceBalanced ||
         objective == Objective::kWorstSlice;
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgumentError("learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgumentError("momentum must lie in [0, 1)");
  }
  if (epochs <= 0) throw InvalidArgumentError("epochs must be positive");
  if (batch_size <= 0) throw InvalidArgumentError("batch size must be positive");
}

json TrainConfig::ToJson() const {
  return {{"objective", ObjectiveName(objective)},
          {"learning_rate", learning_rate},
          {"momentum", momentum},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  TrainConfig c;
  if (j.contains("objective")) {
    c.objective = ParseObjective(j["objective"].get<std::string>());
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

std::string TrainConfig::Fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a64(ToJson().dump())));
  return buf;
}

bool operator==(const LinearProbe& a, const LinearProbe& b) {
  return a.weights.rows() == b.weights.rows() &&
         a.weights.cols() == b.weights.cols() &&
         a.bias.size() == b.bias.size() &&
         std::memcmp(a.weights.data(), b.weights.data(),
                     sizeof(float) * static_cast<size_t>(a.weights.size())) ==
             0 &&
         std::memcmp(a.bias.data(), b.bias.data(),
                     sizeof(float) * static_cast<size_t>(a.bias.size())) == 0 &&
         a.seed == b.seed && a.config_fingerprint == b.config_fingerprint;
}

Predictions Predict(const LinearProbe& probe, const RowMatrixF& embeddings) {
  if (embeddings.cols() != probe.weights.cols()) {
    throw InvalidArgumentError("embedding dimension " +
                               std::to_string(embeddings.cols()) +
                               " does not match probe dimension " +
                               std::to_string(probe.weights.cols()));
  }
  Predictions out;
  out.logits = Logits(probe.weights.cast<double>(), probe.bias.cast<double>(),
                      embeddings.cast<double>());
  out.labels.resize(static_cast<size_t>(out.logits.rows()));
  for (Eigen::Index i = 0; i < out.logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < out.logits.cols(); ++c) {
      if (out.logits(i, c) > out.logits(i, best)) best = c;
    }
    out.labels[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<uint8_t> CorrectnessFlags(const LinearProbe& probe,
                                      const EmbeddingDataset& ds) {
  const Predictions pred = Predict(probe, ds.embeddings());
  std::vector<uint8_t> out(static_cast<size_t>(ds.count()));
  for (int i = 0; i < ds.count(); ++i) {
    out[static_cast<size_t>(i)] =
        pred.labels[static_cast<size_t>(i)] == ds.labels()[i] ? 1 : 0;
  }
  return out;
}

std::vector<double> PerExampleLoss(const Eigen::MatrixXd& weights,
                                   const Eigen::VectorXd& bias,
                                   const Eigen::MatrixXd& features,
                                   std::span<const int> labels) {
  CheckShapes(weights, bias, features, labels);
  const Eigen::MatrixXd z = Logits(weights, bias, features);
  std::vector<double> out(labels.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out[static_cast<size_t>(i)] =
        LogSumExp(z.row(i)) - z(i, labels[static_cast<size_t>(i)]);
  }
  return out;
}

LossAndGradient WeightedCrossEntropy(const Eigen::MatrixXd& weights,
                                     const Eigen::VectorXd& bias,
                                     const Eigen::MatrixXd& features,
                                     std::span<const int> labels,
                                     std::span<const double> example_weights) {
  CheckShapes(weights, bias, features, labels);
  if (!example_weights.empty() && example_weights.size() != labels.size()) {
    throw InvalidArgumentError("example weights length mismatch");
  }
  const Eigen::Index n = features.rows();
  if (n == 0) throw InvalidArgumentError("loss over an empty batch");
  Eigen::MatrixXd g = Logits(weights, bias, features);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = example_weights.empty()
                         ? 1.0
                         : example_weights[static_cast<size_t>(i)];
    const int y = labels[static_cast<size_t>(i)];
    const double lse = LogSumExp(g.row(i));
    loss += w * (lse - g(i, y));
    g.row(i) = (g.row(i).array() - lse).exp();
    g(i, y) -= 1.0;
    g.row(i) *= w / static_cast<double>(n);
  }
  LossAndGradient out;
  out.loss = loss / static_cast<double>(n);
  out.grad_weights = g.transpose() * features;
  out.grad_bias = g.colwise().sum().transpose();
  return out;
}

double MeanLoss(std::span<const double> losses) {
  if (losses.empty()) throw InvalidArgumentError("mean of an empty batch");
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

WorstGroup WorstGroupLoss(std::span<const double> losses,
                          std::span<const int> group_of, int num_groups) {
  if (losses.size() != group_of.size()) {
    throw InvalidArgumentError("group assignment length mismatch");
  }
  std::vector<double> sum(static_cast<size_t>(num_groups), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(num_groups), 0);
  for (size_t i = 0; i < losses.size(); ++i) {
    const int g = group_of[i];
    if (g < 0 || g >= num_groups) {
      throw InvalidArgumentError("group id out of range");
    }
    sum[static_cast<size_t>(g)] += losses[i];
    count[static_cast<size_t>(g)] += 1;
  }
  WorstGroup out;
  for (int g = 0; g < num_groups; ++g) {
    if (count[static_cast<size_t>(g)] == 0) continue;
    const double mean = sum[static_cast<size_t>(g)] /
                        static_cast<double>(count[static_cast<size_t>(g)]);
    if (out.group < 0 || mean > out.loss) out = {g, mean};
  }
  if (out.group < 0) throw InvalidArgumentError("no nonempty group");
  return out;
}

std::vector<double> ClassBalancedWeights(const EmbeddingDataset& ds) {
  const auto train = ds.Indices(Split::kTrain);
  std::vector<int64_t> counts(static_cast<size_t>(ds.num_classes()), 0);
  for (int i : train) counts[static_cast<size_t>(ds.labels()[i])] += 1;
  const auto present =
      std::count_if(counts.begin(), counts.end(), [](int64_t c) { return c > 0; });
  const double n = static_cast<double>(train.size());
  std::vector<double> w;
  w.reserve(train.size());
  for (int i : train) {
    const double nc = static_cast<double>(counts[static_cast<size_t>(ds.labels()[i])]);
    w.push_back(n / (static_cast<double>(present) * nc));
  }
  return w;
}

std::vector<double> SliceBalancedWeights(
    const EmbeddingDataset& ds, std::span<const SlicePartition> slices) {
  const auto by_class = IndexSlices(ds, slices);
  const auto train = ds.Indices(Split::kTrain);
  const auto pos = TrainPositions(ds, train);
  std::vector<double> w(train.size(), 1.0);
  for (const auto& [c, s] : by_class) {
    const double nc = static_cast<double>(s->above.size() + s->below.size());
    for (const auto* side : {&s->above, &s->below}) {
      const double each = nc / (2.0 * static_cast<double>(side->size()));
      for (int i : *side) w[static_cast<size_t>(pos[static_cast<size_t>(i)])] = each;
    }
  }
  return w;
}

LinearProbe TrainProbe(const EmbeddingDataset& ds, const TrainConfig& config,
                       std::span<const SlicePartition> slices,
                       const ProgressCallback& progress) {
  config.Validate();
  const bool slice_objective = IsSliceObjective(config.objective);
  if (slice_objective && slices.empty()) {
    throw InvalidArgumentError(std::string(ObjectiveName(config.objective)) +
                               " needs at least one error annotation");
  }
  if (!slice_objective && !slices.empty()) {
    throw InvalidArgumentError(std::string(ObjectiveName(config.objective)) +
                               " does not take slice partitions");
  }
  if (config.objective == Objective::kGroupDroOracle && !ds.has_groups()) {
    throw InvalidArgumentError("group_dro_oracle needs the group column");
  }
  const auto by_class = IndexSlices(ds, slices);

  const auto train = ds.Indices(Split::kTrain);
  const auto n = static_cast<Eigen::Index>(train.size());
  const Eigen::MatrixXd features =
      ds.embeddings()(train, Eigen::all).cast<double>();
  std::vector<int> labels;
  labels.reserve(train.size());
  for (int i : train) labels.push_back(ds.labels()[i]);

  std::vector<double> example_weights;
  if (config.objective == Objective::kClassBalanced) {
    example_weights = ClassBalancedWeights(ds);
  } else if (config.objective == Objective::kSliceBalanced) {
    example_weights = SliceBalancedWeights(ds, slices);
  }
  const Strata strata = BuildStrata(ds, config, train, by_class);
  const bool stratified = IsStratified(config.objective);

  const int num_classes = ds.num_classes();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(num_classes, ds.dim());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(num_classes);
  Eigen::MatrixXd vel_w = Eigen::MatrixXd::Zero(num_classes, ds.dim());
  Eigen::VectorXd vel_b = Eigen::VectorXd::Zero(num_classes);

  SplitMix64 rng(config.seed);
  std::vector<int> perm(static_cast<size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) perm[static_cast<size_t>(p)] = static_cast<int>(p);
  std::optional<StratifiedSampler> sampler;
  if (stratified) sampler.emplace(strata, rng);

  const Eigen::Index batch = config.batch_size;
  const Eigen::Index steps = (n + batch - 1) / batch;
  const auto num_strata = static_cast<Eigen::Index>(strata.members.size());
  double last_loss = 0.0;

  std::vector<int> rows, row_labels, group_of;
  std::vector<double> row_weights;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (!stratified) rng.Shuffle(perm);
    for (Eigen::Index step = 0; step < steps; ++step) {
      rows.clear();
      row_labels.clear();
      row_weights.clear();
      LossAndGradient lg;
      if (!stratified) {
        const Eigen::Index lo = step * batch;
        const Eigen::Index hi = std::min(n, lo + batch);
        for (Eigen::Index k = lo; k < hi; ++k) {
          const int p = perm[static_cast<size_t>(k)];
          rows.push_back(p);
          row_labels.push_back(labels[static_cast<size_t>(p)]);
          if (!example_weights.empty()) {
            row_weights.push_back(example_weights[static_cast<size_t>(p)]);
          }
        }
        lg = WeightedCrossEntropy(w, b, features(rows, Eigen::all), row_labels,
                                  row_weights);
      } else {
        const Eigen::Index per = (batch + num_strata - 1) / num_strata;
        group_of.clear();
        for (Eigen::Index k = 0; k < num_strata; ++k) {
          for (Eigen::Index j = 0; j < per; ++j) {
            const int p = sampler->Draw(static_cast<size_t>(k));
            rows.push_back(p);
            row_labels.push_back(labels[static_cast<size_t>(p)]);
            group_of.push_back(static_cast<int>(k));
          }
        }
        const Eigen::MatrixXd x = features(rows, Eigen::all);
        const auto losses = PerExampleLoss(w, b, x, row_labels);
        const WorstGroup worst =
            WorstGroupLoss(losses, group_of, static_cast<int>(num_strata));
        // Strata are laid out contiguously, `per` rows each.
        const Eigen::Index first = worst.group * per;
        lg = WeightedCrossEntropy(
            w, b, x.middleRows(first, per),
            std::span<const int>(row_labels).subspan(
                static_cast<size_t>(first), static_cast<size_t>(per)),
            {});
      }
      if (!std::isfinite(lg.loss) || !lg.grad_weights.allFinite() ||
          !lg.grad_bias.allFinite()) {
        throw DivergenceError("loss became non-finite at epoch " +
                              std::to_string(epoch) + ", step " +
                              std::to_string(step) + " (objective " +
                              ObjectiveName(config.objective) + ", lr " +
                              std::to_string(config.learning_rate) + ")");
      }
      vel_w = config.momentum * vel_w + lg.grad_weights;
      vel_b = config.momentum * vel_b + lg.grad_bias;
      w -= config.learning_rate * vel_w;
      b -= config.learning_rate * vel_b;
      last_loss = lg.loss;
    }
    if (!w.allFinite() || !b.allFinite()) {
      throw DivergenceError("probe parameters became non-finite after epoch " +
                            std::to_string(epoch));
    }
    if (progress) progress({epoch + 1, config.epochs, last_loss});
  }

  LinearProbe probe;
  probe.weights = w.cast<float>();
  probe.bias = b.cast<float>();
  if (!probe.weights.allFinite() || !probe.bias.allFinite()) {
    throw DivergenceError("probe parameters overflow float32");
  }
  probe.seed = config.seed;
  probe.config_fingerprint = config.Fingerprint();
  return probe;
}

void SaveProbe(const LinearProbe& probe, const std::filesystem::path& path) {
  const json manifest = {{"classes", probe.num_classes()},
                         {"dim", probe.dim()},
                         {"seed", probe.seed},
                         {"config_fingerprint", probe.config_fingerprint},
                         {"dtype", kDtypeTag}};
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write probe checkpoint " + path.string());
  out.write(kProbeMagic, sizeof(kProbeMagic));
  const auto len = static_cast<uint32_t>(text.size());
  const unsigned char len_le[4] = {
      static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
      static_cast<unsigned char>(len >> 16), static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(len_le), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      w = probe.weights;
  WriteFloat32(out, w.data(), static_cast<size_t>(w.size()));
  WriteFloat32(out, probe.bias.data(), static_cast<size_t>(probe.bias.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

LinearProbe LoadProbe(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("missing probe checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kProbeMagic, 8) != 0) {
    throw DataLossError(path.string() + " is not a probe checkpoint");
  }
  unsigned char len_le[4];
  in.read(reinterpret_cast<char*>(len_le), 4);
  const uint32_t len = len_le[0] | (len_le[1] << 8) | (len_le[2] << 16) |
                       (static_cast<uint32_t>(len_le[3]) << 24);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (static_cast<uint32_t>(in.gcount()) != len) {
    throw DataLossError("truncated probe manifest in " + path.string());
  }
  LinearProbe probe;
  int classes = 0, dim = 0;
  try {
    const json m = json::parse(text);
    classes = m.at("classes").get<int>();
    dim = m.at("dim").get<int>();
    probe.seed = m.at("seed").get<uint64_t>();
    probe.config_fingerprint = m.at("config_fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw DataLossError("bad probe manifest: " + std::string(e.what()));
  }
  if (classes <= 0 || dim <= 0) throw DataLossError("bad probe dimensions");
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(
      classes, dim);
  probe.bias.resize(classes);
  try {
    ReadFloat32(in, w.data(), static_cast<size_t>(w.size()));
    ReadFloat32(in, probe.bias.data(), static_cast<size_t>(classes));
  } catch (const Error&) {
    throw DataLossError("truncated probe weights in " + path.string());
  }
  probe.weights = w;
  if (!probe.weights.allFinite() || !probe.bias.allFinite()) {
    throw DataLossError("probe checkpoint holds non-finite weights");
  }
  return probe;
}

}  // namespace slicefix
