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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "slicefix/dataset.h"
#include "slicefix/errors.h"
#include "slicefix/evaluation.h"
#include "slicefix/probe.h"
#include "slicefix/similarity.h"
#include "slicefix/synthetic.h"
#include "slicefix/text_encoder.h"

namespace py = pybind11;
using json = nlohmann::json;

namespace slicefix {
namespace {

// JSON values cross the boundary as Python objects through the json module.
py::object ToPy(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

json FromPy(const py::handle& obj) {
  return json::parse(
      py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict ScoreDict(const PromptScore& s) {
  py::dict d;
  d["class_id"] = s.class_id;
  d["prompt"] = s.prompt;
  d["error_score"] = s.error_score;
  d["threshold"] = s.threshold;
  d["balanced_accuracy"] = s.balanced_accuracy;
  d["example_ids"] = s.example_ids;
  d["similarities"] = s.similarities;
  d["is_error"] = std::vector<bool>(s.is_error.begin(), s.is_error.end());
  d["count_above"] = s.count_above;
  d["count_below"] = s.count_below;
  return d;
}

std::vector<uint8_t> Flags(const std::vector<bool>& v) {
  return {v.begin(), v.end()};
}

EmbeddingDataset MakeDataset(const std::string& name,
                             std::vector<std::string> class_names,
                             RowMatrixF embeddings,
                             std::vector<int32_t> labels,
                             const std::vector<std::string>& split,
                             std::vector<int32_t> groups,
                             std::optional<RowMatrixF> annotation_embeddings,
                             std::vector<std::string> thumbnails) {
  DatasetContents c;
  c.name = name;
  c.class_names = std::move(class_names);
  c.embeddings = std::move(embeddings);
  c.annotation_embeddings = std::move(annotation_embeddings);
  c.labels = std::move(labels);
  for (const auto& s : split) c.split.push_back(ParseSplit(s));
  c.groups = std::move(groups);
  c.thumbnails = std::move(thumbnails);
  return EmbeddingDataset::Create(std::move(c));
}

TrainConfig MakeConfig(const std::string& objective, double lr,
                       double momentum, int epochs, int batch_size,
                       uint64_t seed) {
  TrainConfig c;
  c.objective = ParseObjective(objective);
  c.learning_rate = lr;
  c.momentum = momentum;
  c.epochs = epochs;
  c.batch_size = batch_size;
  c.seed = seed;
  return c;
}

SlicePartition SliceFromPy(const py::dict& d) {
  SlicePartition p;
  p.class_id = d["class_id"].cast<int>();
  p.split = ParseSplit(d.contains("split") ? d["split"].cast<std::string>()
                                           : std::string("train"));
  p.above = d["above"].cast<std::vector<int>>();
  p.below = d["below"].cast<std::vector<int>>();
  return p;
}

py::dict SliceToPy(const SlicePartition& p) {
  py::dict d;
  d["class_id"] = p.class_id;
  d["split"] = SplitName(p.split);
  d["above"] = p.above;
  d["below"] = p.below;
  return d;
}

}  // namespace
}  // namespace slicefix

PYBIND11_MODULE(_core, m) {
  using namespace slicefix;
  m.doc() = "Error-slice annotation, scoring and slice-aware probe training";

  // Owned by the module for the life of the interpreter.
  static PyObject* error_type =
      PyErr_NewException("slicefix._core.SlicefixError", PyExc_RuntimeError,
                         nullptr);
  m.attr("SlicefixError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::handle(error_type)(e.what());
      inst.attr("code") = ErrorCodeName(e.code());
      PyErr_SetObject(error_type, inst.ptr());
    }
  });

  py::class_<EmbeddingDataset>(m, "Dataset")
      .def(py::init(&MakeDataset), py::arg("name"), py::arg("class_names"),
           py::arg("embeddings"), py::arg("labels"), py::arg("split"),
           py::arg("groups") = std::vector<int32_t>{},
           py::arg("annotation_embeddings") = std::nullopt,
           py::arg("thumbnails") = std::vector<std::string>{})
      .def_property_readonly("name", &EmbeddingDataset::name)
      .def_property_readonly("dim", &EmbeddingDataset::dim)
      .def_property_readonly("count", &EmbeddingDataset::count)
      .def_property_readonly("num_classes", &EmbeddingDataset::num_classes)
      .def_property_readonly("class_names", &EmbeddingDataset::class_names)
      .def_property_readonly("embeddings", &EmbeddingDataset::embeddings)
      .def_property_readonly("annotation_embeddings",
                             &EmbeddingDataset::annotation_embeddings)
      .def_property_readonly("labels", &EmbeddingDataset::labels)
      .def_property_readonly("split",
                             [](const EmbeddingDataset& ds) {
                               std::vector<std::string> out;
                               for (Split s : ds.split()) out.push_back(SplitName(s));
                               return out;
                             })
      .def_property_readonly("groups",
                             [](const EmbeddingDataset& ds)
                                 -> std::optional<std::vector<int32_t>> {
                               if (!ds.has_groups()) return std::nullopt;
                               return ds.groups();
                             })
      .def("indices",
           [](const EmbeddingDataset& ds, const std::string& split) {
             return ds.Indices(ParseSplit(split));
           })
      .def("__eq__", [](const EmbeddingDataset& a, const EmbeddingDataset& b) {
        return a == b;
      });

  m.def("load_dataset", &LoadDataset, py::arg("dir"));
  m.def(
      "write_dataset",
      [](const EmbeddingDataset& ds, const std::filesystem::path& dir) {
        WriteDataset(ds, dir);
      },
      py::arg("dataset"), py::arg("dir"));

  m.def(
      "cosine_sim",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return CosineSim(a, b);
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "search_threshold",
      [](const std::vector<double>& s_correct,
         const std::vector<double>& s_error) {
        const ThresholdSearch r = SearchThreshold(s_correct, s_error);
        py::dict d;
        d["threshold"] = r.threshold;
        d["balanced_accuracy"] = r.balanced_accuracy;
        d["error_score"] = r.error_score;
        return d;
      },
      py::arg("s_correct"), py::arg("s_error"));

  m.def(
      "score_at_threshold",
      [](const std::vector<double>& s_correct,
         const std::vector<double>& s_error, double tau) {
        const ThresholdScore r = ScoreAtThreshold(s_correct, s_error, tau);
        py::dict d;
        d["balanced_accuracy"] = r.balanced_accuracy;
        d["error_score"] = r.error_score;
        return d;
      },
      py::arg("s_correct"), py::arg("s_error"), py::arg("tau"));

  m.def(
      "oracle_error_score",
      [](const std::vector<double>& s_correct,
         const std::vector<double>& s_error) {
        const OracleScore r = OracleErrorScore(s_correct, s_error);
        py::dict d;
        d["threshold"] = r.threshold;
        d["error_score"] = r.error_score;
        return d;
      },
      py::arg("s_correct"), py::arg("s_error"));

  m.def(
      "score_prompt",
      [](const EmbeddingDataset& ds, int class_id,
         const std::vector<bool>& correct, const Eigen::VectorXd& text_vec,
         const std::string& prompt) {
        return ScoreDict(
            ScorePrompt(ds, class_id, Flags(correct), text_vec, prompt));
      },
      py::arg("dataset"), py::arg("class_id"), py::arg("correct"),
      py::arg("text_vec"), py::arg("prompt") = "");

  m.def(
      "partition_class",
      [](const EmbeddingDataset& ds, const py::dict& annotation,
         const std::string& split, const Eigen::VectorXd& text_vec) {
        return SliceToPy(PartitionClass(ds, AnnotationFromJson(FromPy(annotation)),
                                        ParseSplit(split), text_vec));
      },
      py::arg("dataset"), py::arg("annotation"), py::arg("split"),
      py::arg("text_vec"));

  m.def(
      "encode_text",
      [](const std::string& vocab_path, const std::string& text) {
        return FixtureTextEncoder::FromFile(vocab_path)->Encode(text);
      },
      py::arg("vocab_path"), py::arg("text"));

  py::class_<LinearProbe>(m, "Probe")
      .def_readonly("weights", &LinearProbe::weights)
      .def_readonly("bias", &LinearProbe::bias)
      .def_readonly("seed", &LinearProbe::seed)
      .def_readonly("config_fingerprint", &LinearProbe::config_fingerprint)
      .def(
          "predict",
          [](const LinearProbe& p, const RowMatrixF& x) {
            return Predict(p, x).labels;
          },
          py::arg("embeddings"))
      .def("save", [](const LinearProbe& p, const std::filesystem::path& path) {
        SaveProbe(p, path);
      })
      .def("__eq__", [](const LinearProbe& a, const LinearProbe& b) {
        return a == b;
      });

  m.def("load_probe", &LoadProbe, py::arg("path"));

  m.def(
      "train_probe",
      [](const EmbeddingDataset& ds, const std::string& objective,
         const std::vector<py::dict>& slices, double learning_rate,
         double momentum, int epochs, int batch_size, uint64_t seed) {
        std::vector<SlicePartition> parts;
        for (const auto& s : slices) parts.push_back(SliceFromPy(s));
        const TrainConfig config = MakeConfig(objective, learning_rate,
                                              momentum, epochs, batch_size, seed);
        py::gil_scoped_release release;
        return TrainProbe(ds, config, parts);
      },
      py::arg("dataset"), py::arg("objective") = "erm_uniform",
      py::arg("slices") = std::vector<py::dict>{},
      py::arg("learning_rate") = 0.05, py::arg("momentum") = 0.9,
      py::arg("epochs") = 30, py::arg("batch_size") = 256,
      py::arg("seed") = 0);

  m.def(
      "correctness",
      [](const LinearProbe& p, const EmbeddingDataset& ds) {
        const auto flags = CorrectnessFlags(p, ds);
        return std::vector<bool>(flags.begin(), flags.end());
      },
      py::arg("probe"), py::arg("dataset"));

  m.def(
      "evaluate",
      [](const LinearProbe& p, const EmbeddingDataset& ds,
         const std::string& grouping, const std::vector<py::dict>& slices,
         const std::string& split) {
        Grouping g;
        g.kind = ParseGrouping(grouping);
        for (const auto& s : slices) g.slices.push_back(SliceFromPy(s));
        return ToPy(Evaluate(p, ds, g, ParseSplit(split)).ToJson());
      },
      py::arg("probe"), py::arg("dataset"), py::arg("grouping") = "oracle",
      py::arg("slices") = std::vector<py::dict>{}, py::arg("split") = "val");

  m.def(
      "generate_synthetic",
      [](const py::dict& config, const std::filesystem::path& out) {
        const SyntheticDataset s =
            GenerateSynthetic(SyntheticConfig::FromJson(FromPy(config)));
        WriteSynthetic(s, out);
        return s.oracle_annotation ? ToPy(AnnotationToJson(*s.oracle_annotation))
                                   : py::object(py::none());
      },
      py::arg("config"), py::arg("out"));

  m.def(
      "run_benchmark",
      [](const std::filesystem::path& data,
         const std::vector<std::string>& objectives,
         const std::string& annotations, uint64_t seed, int epochs,
         bool include_wall_clock) {
        std::vector<Objective> objs;
        for (const auto& o : objectives) objs.push_back(ParseObjective(o));
        TrainConfig base;
        base.seed = seed;
        base.epochs = epochs;
        json report;
        {
          py::gil_scoped_release release;
          report = RunBenchmark(data, objs, annotations, base)
                       .ToJson(include_wall_clock);
        }
        return ToPy(report);
      },
      py::arg("data"), py::arg("objectives"), py::arg("annotations") = "oracle",
      py::arg("seed") = 0, py::arg("epochs") = 30,
      py::arg("include_wall_clock") = true);
}
