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

// bench: generate synthetic datasets, compare training objectives, and score
// prompts from the command line.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"
#include "slicefix/errors.h"
#include "slicefix/probe.h"
#include "slicefix/similarity.h"
#include "slicefix/synthetic.h"
#include "slicefix/text_encoder.h"

namespace {

using json = nlohmann::json;
using namespace slicefix;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InvalidArgumentError("invalid JSON in " + path);
  return j;
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Objective> ParseObjectives(const std::string& list) {
  std::vector<Objective> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(ParseObjective(item));
  }
  if (out.empty()) throw InvalidArgumentError("no objectives given");
  return out;
}

int Generate(const std::string& config_path, const std::string& out_dir) {
  const SyntheticConfig config =
      config_path.empty() ? SyntheticConfig{}
                          : SyntheticConfig::FromJson(ReadJsonFile(config_path));
  const SyntheticDataset synthetic = GenerateSynthetic(config);
  WriteSynthetic(synthetic, out_dir);
  json summary = {{"out", out_dir},
                  {"count", synthetic.dataset.count()},
                  {"dim", synthetic.dataset.dim()}};
  summary["oracle_annotation"] =
      synthetic.oracle_annotation
          ? AnnotationToJson(*synthetic.oracle_annotation)
          : json(nullptr);
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int Run(const std::string& data, const std::string& objectives,
        const std::string& annotations, const std::string& out,
        const TrainConfig& base, bool include_wall_clock) {
  const BenchReport report =
      RunBenchmark(data, ParseObjectives(objectives), annotations, base);
  const std::string text = report.ToJson(include_wall_clock).dump(2);
  if (out.empty() || out == "-") {
    std::cout << text << '\n';
  } else {
    WriteText(out, text);
  }
  for (const auto& run : report.runs) {
    std::cerr << run.objective << ": avg " << run.report.average << " worst "
              << run.report.worst_group << " gap " << run.report.gap << '\n';
  }
  return kExitOk;
}

int Score(const std::string& data, int class_id, const std::string& prompt,
          const std::string& encoder_uri, const std::string& probe_path) {
  const EmbeddingDataset ds = LoadDataset(data);
  std::string uri = encoder_uri;
  if (uri.empty()) {
    const auto vocab = DatasetVocabPath(data);
    if (!vocab) {
      throw InvalidArgumentError(
          "dataset has no fixture vocabulary; pass --text-encoder");
    }
    uri = "fixture:" + vocab->string();
  }
  const auto encoder = MakeTextEncoder(uri, ds.annotation_dim());
  const LinearProbe probe =
      probe_path.empty() ? TrainProbe(ds, TrainConfig{}) : LoadProbe(probe_path);
  const std::vector<uint8_t> correct = CorrectnessFlags(probe, ds);
  const PromptScore score =
      ScorePrompt(ds, class_id, correct, encoder->Encode(prompt), prompt);
  const json out = {{"class_id", score.class_id},
                    {"prompt", score.prompt},
                    {"error_score", score.error_score},
                    {"threshold", score.threshold},
                    {"balanced_accuracy", score.balanced_accuracy},
                    {"count_above", score.count_above},
                    {"count_below", score.count_below}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic spurious-correlation benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--config", config_path, "Generator config JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string data, objectives, annotations = "oracle", report_out;
  TrainConfig base;
  bool no_wall_clock = false;
  auto* run = app.add_subcommand("run", "Train and evaluate objectives");
  run->add_option("--data", data, "Dataset directory")->required();
  run->add_option("--objectives", objectives, "Comma-separated objectives")
      ->required();
  run->add_option("--annotations", annotations, "'oracle' or annotation file");
  run->add_option("--out", report_out, "Report path ('-' for stdout)");
  run->add_option("--seed", base.seed, "Training seed");
  run->add_option("--epochs", base.epochs, "Training epochs");
  run->add_option("--lr", base.learning_rate, "Learning rate");
  run->add_option("--batch-size", base.batch_size, "Minibatch size");
  run->add_flag("--no-wall-clock", no_wall_clock,
                "Omit wall-clock times from the report");

  int class_id = 0;
  std::string prompt, encoder_uri, probe_path;
  auto* score = app.add_subcommand("score", "Error score of a prompt");
  score->add_option("--data", data, "Dataset directory")->required();
  score->add_option("--class", class_id, "Class id")->required();
  score->add_option("--prompt", prompt, "Failure description")->required();
  score->add_option("--text-encoder", encoder_uri,
                    "fixture:<vocab> or remote:<url>; defaults to the "
                    "dataset's vocabulary");
  score->add_option("--probe", probe_path, "Probe checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return Generate(config_path, out_dir);
    if (*run) {
      return Run(data, objectives, annotations, report_out, base,
                 !no_wall_clock);
    }
    return Score(data, class_id, prompt, encoder_uri, probe_path);
  } catch (const Error& e) {
    std::cerr << "error (" << ErrorCodeName(e.code()) << "): " << e.what()
              << '\n';
    return e.code() == ErrorCode::kDivergence ? kExitDivergence
                                              : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
