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

#include "slicefix/dataset.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "slicefix/errors.h"

namespace slicefix {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr char kEmbeddingsFile[] = "embeddings.bin";
constexpr char kMetadataFile[] = "metadata.csv";
constexpr char kAnnotationEmbeddingsFile[] = "annotation_embeddings.bin";
constexpr char kMetadataHeader[] = "id,label,split,group,thumbnail";

// Rescales drifted rows in place; rejects degenerate ones.
void NormalizeRows(RowMatrixF& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double sq = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!std::isfinite(v)) {
        throw InvalidArgumentError(std::string(what) + " row " +
                                   std::to_string(r) + " is not finite");
      }
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < kMinRowNorm) {
      throw InvalidArgumentError(std::string(what) + " row " +
                                 std::to_string(r) + " has zero norm");
    }
    if (std::abs(norm - 1.0) > kRenormalizeTolerance) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = static_cast<float>(m(r, c) / norm);
      }
    }
  }
}

void Validate(const DatasetContents& c) {
  const auto n = static_cast<size_t>(c.embeddings.rows());
  if (n == 0 || c.embeddings.cols() == 0) {
    throw InvalidArgumentError("dataset must have positive count and dim");
  }
  if (c.class_names.empty()) {
    throw InvalidArgumentError("dataset must have at least one class");
  }
  if (c.labels.size() != n || c.split.size() != n) {
    throw InvalidArgumentError("labels/split length does not match count");
  }
  if (c.annotation_embeddings && (c.annotation_embeddings->rows() !=
                                      static_cast<Eigen::Index>(n) ||
                                  c.annotation_embeddings->cols() == 0)) {
    throw InvalidArgumentError("annotation embeddings row count mismatch");
  }
  const auto num_classes = static_cast<int32_t>(c.class_names.size());
  for (size_t i = 0; i < n; ++i) {
    if (c.labels[i] < 0 || c.labels[i] >= num_classes) {
      throw InvalidArgumentError("label " + std::to_string(c.labels[i]) +
                                 " of example " + std::to_string(i) +
                                 " outside [0, " +
                                 std::to_string(num_classes) + ")");
    }
    if (c.split[i] != Split::kTrain && c.split[i] != Split::kVal) {
      throw InvalidArgumentError("unknown split tag on example " +
                                 std::to_string(i));
    }
  }
  bool has_train = false, has_val = false;
  for (Split s : c.split) {
    has_train |= s == Split::kTrain;
    has_val |= s == Split::kVal;
  }
  if (!has_train || !has_val) {
    throw InvalidArgumentError(
        "split needs at least one train and one val example");
  }
  if (!c.groups.empty()) {
    if (c.groups.size() != n) {
      throw InvalidArgumentError("group column length does not match count");
    }
    for (size_t i = 0; i < n; ++i) {
      if (c.groups[i] < 0 || c.groups[i] >= c.num_groups) {
        throw InvalidArgumentError("group of example " + std::to_string(i) +
                                   " outside [0, " +
                                   std::to_string(c.num_groups) + ")");
      }
    }
  }
  if (!c.thumbnails.empty()) {
    if (c.thumbnails.size() != n) {
      throw InvalidArgumentError("thumbnail column length does not match count");
    }
    for (const auto& t : c.thumbnails) {
      if (t.find_first_of(",\"\r\n") != std::string::npos) {
        throw InvalidArgumentError("thumbnail path contains ',', '\"' or newline");
      }
    }
  }
  for (const auto& name : c.class_names) {
    if (name.empty()) throw InvalidArgumentError("empty class name");
  }
}

RowMatrixF ReadMatrix(const fs::path& path, int64_t rows, int64_t cols) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  const auto expected = static_cast<uintmax_t>(rows * cols * 4);
  if (size != expected) {
    throw InvalidArgumentError(path.filename().string() + " has " +
                               std::to_string(size) + " bytes, manifest implies " +
                               std::to_string(expected));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  RowMatrixF m(rows, cols);
  ReadFloat32(in, m.data(), static_cast<size_t>(rows * cols));
  return m;
}

void WriteMatrix(const fs::path& path, const RowMatrixF& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  WriteFloat32(out, m.data(), static_cast<size_t>(m.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

int32_t ParseInt(const std::string& s, const char* what, size_t line) {
  try {
    size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<int32_t>(v);
  } catch (const std::exception&) {
    throw InvalidArgumentError("metadata.csv line " + std::to_string(line) +
                               ": bad " + what + " '" + s + "'");
  }
}

json ReadManifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing manifest: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgumentError("unparsable manifest: " + std::string(e.what()));
  }
}

}  // namespace

const char* SplitName(Split split) {
  return split == Split::kTrain ? "train" : "val";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  throw InvalidArgumentError("unknown split tag '" + std::string(name) + "'");
}

EmbeddingDataset EmbeddingDataset::Create(DatasetContents contents) {
  if (!contents.groups.empty() && contents.num_groups == 0) {
    int32_t max_group = -1;
    for (int32_t g : contents.groups) max_group = std::max(max_group, g);
    contents.num_groups = max_group + 1;
  }
  if (contents.groups.empty()) contents.num_groups = 0;
  if (std::all_of(contents.thumbnails.begin(), contents.thumbnails.end(),
                  [](const std::string& t) { return t.empty(); })) {
    contents.thumbnails.clear();
  }
  Validate(contents);
  NormalizeRows(contents.embeddings, "embedding");
  if (contents.annotation_embeddings) {
    NormalizeRows(*contents.annotation_embeddings, "annotation embedding");
  }
  return EmbeddingDataset(std::move(contents));
}

std::vector<int> EmbeddingDataset::Indices(Split split) const {
  std::vector<int> out;
  for (int i = 0; i < count(); ++i) {
    if (c_.split[i] == split) out.push_back(i);
  }
  return out;
}

std::vector<int> EmbeddingDataset::ClassIndices(int class_id,
                                                Split split) const {
  std::vector<int> out;
  for (int i = 0; i < count(); ++i) {
    if (c_.split[i] == split && c_.labels[i] == class_id) out.push_back(i);
  }
  return out;
}

bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  const auto& x = a.c_;
  const auto& y = b.c_;
  auto same_matrix = [](const RowMatrixF& p, const RowMatrixF& q) {
    return p.rows() == q.rows() && p.cols() == q.cols() &&
           std::equal(p.data(), p.data() + p.size(), q.data(),
                      [](float u, float v) {
                        return std::bit_cast<uint32_t>(u) ==
                               std::bit_cast<uint32_t>(v);
                      });
  };
  if (x.annotation_embeddings.has_value() !=
      y.annotation_embeddings.has_value()) {
    return false;
  }
  if (x.annotation_embeddings &&
      !same_matrix(*x.annotation_embeddings, *y.annotation_embeddings)) {
    return false;
  }
  return x.name == y.name && x.class_names == y.class_names &&
         same_matrix(x.embeddings, y.embeddings) && x.labels == y.labels &&
         x.split == y.split && x.groups == y.groups &&
         x.num_groups == y.num_groups && x.thumbnails == y.thumbnails;
}

void WriteFloat32(std::ostream& out, const float* data, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (size_t i = 0; i < n; ++i) {
      const uint32_t v = __builtin_bswap32(std::bit_cast<uint32_t>(data[i]));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

void ReadFloat32(std::istream& in, float* data, size_t n) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != n * sizeof(float)) {
    throw InvalidArgumentError("unexpected end of float32 data");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (size_t i = 0; i < n; ++i) {
      data[i] = std::bit_cast<float>(
          __builtin_bswap32(std::bit_cast<uint32_t>(data[i])));
    }
  }
}

EmbeddingDataset LoadDataset(const fs::path& dir) {
  const json manifest = ReadManifest(dir);
  DatasetContents c;
  int64_t dim = 0, count = 0, annotation_dim = 0;
  std::string embeddings_file, metadata_file, annotation_file;
  try {
    if (manifest.at("dtype").get<std::string>() != kDtypeTag) {
      throw InvalidArgumentError("manifest dtype must be '" +
                                 std::string(kDtypeTag) + "'");
    }
    c.name = manifest.value("name", std::string());
    dim = manifest.at("dim").get<int64_t>();
    count = manifest.at("count").get<int64_t>();
    c.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    embeddings_file = manifest.value("embeddings", std::string(kEmbeddingsFile));
    metadata_file = manifest.value("metadata", std::string(kMetadataFile));
    if (manifest.contains("annotation_embeddings") &&
        !manifest["annotation_embeddings"].is_null()) {
      annotation_file = manifest["annotation_embeddings"].get<std::string>();
      annotation_dim = manifest.at("annotation_dim").get<int64_t>();
    }
    c.num_groups = manifest.value("num_groups", 0);
  } catch (const json::exception& e) {
    throw InvalidArgumentError("bad manifest field: " + std::string(e.what()));
  }
  if (dim <= 0 || count <= 0) {
    throw InvalidArgumentError("manifest dim and count must be positive");
  }

  c.embeddings = ReadMatrix(dir / embeddings_file, count, dim);
  if (!annotation_file.empty()) {
    if (annotation_dim <= 0) {
      throw InvalidArgumentError("manifest annotation_dim must be positive");
    }
    c.annotation_embeddings =
        ReadMatrix(dir / annotation_file, count, annotation_dim);
  }

  std::ifstream meta(dir / metadata_file);
  if (!meta) throw NotFoundError("missing " + (dir / metadata_file).string());
  std::string line;
  if (!std::getline(meta, line) || line != kMetadataHeader) {
    throw InvalidArgumentError("metadata.csv header must be '" +
                               std::string(kMetadataHeader) + "'");
  }
  bool any_group = false, any_missing_group = false, any_thumb = false;
  std::vector<int32_t> groups;
  std::vector<std::string> thumbs;
  size_t line_no = 1;
  while (std::getline(meta, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = SplitCsvLine(line);
    if (f.size() != 5) {
      throw InvalidArgumentError("metadata.csv line " +
                                 std::to_string(line_no) + ": expected 5 fields");
    }
    const int32_t id = ParseInt(f[0], "id", line_no);
    if (id != static_cast<int32_t>(c.labels.size())) {
      throw InvalidArgumentError("metadata.csv ids must be 0..count-1 in order");
    }
    c.labels.push_back(ParseInt(f[1], "label", line_no));
    c.split.push_back(ParseSplit(f[2]));
    const int32_t g = ParseInt(f[3], "group", line_no);
    if (g < -1) {
      throw InvalidArgumentError("metadata.csv line " +
                                 std::to_string(line_no) + ": group below -1");
    }
    (g >= 0 ? any_group : any_missing_group) = true;
    groups.push_back(g);
    any_thumb |= !f[4].empty();
    thumbs.push_back(f[4]);
  }
  if (static_cast<int64_t>(c.labels.size()) != count) {
    throw InvalidArgumentError("metadata.csv has " +
                               std::to_string(c.labels.size()) +
                               " rows, manifest count is " +
                               std::to_string(count));
  }
  if (any_group && any_missing_group) {
    throw InvalidArgumentError("group column must be present for all rows or none");
  }
  if (any_group) c.groups = std::move(groups);
  if (any_thumb) c.thumbnails = std::move(thumbs);
  return EmbeddingDataset::Create(std::move(c));
}

void WriteDataset(const EmbeddingDataset& ds, const fs::path& dir,
                  std::string_view vocab_file) {
  Validate(ds.contents());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["name"] = ds.name();
  manifest["dim"] = ds.dim();
  manifest["count"] = ds.count();
  manifest["dtype"] = kDtypeTag;
  manifest["class_names"] = ds.class_names();
  manifest["embeddings"] = kEmbeddingsFile;
  manifest["metadata"] = kMetadataFile;
  if (ds.has_annotation_embeddings()) {
    manifest["annotation_embeddings"] = kAnnotationEmbeddingsFile;
    manifest["annotation_dim"] = ds.annotation_dim();
  } else {
    manifest["annotation_embeddings"] = nullptr;
  }
  if (ds.has_groups()) manifest["num_groups"] = ds.num_groups();
  if (!vocab_file.empty()) {
    manifest["vocab"] = std::string(vocab_file);
  } else {
    manifest["vocab"] = nullptr;
  }

  WriteMatrix(dir / kEmbeddingsFile, ds.embeddings());
  if (ds.has_annotation_embeddings()) {
    WriteMatrix(dir / kAnnotationEmbeddingsFile, ds.annotation_embeddings());
  }
  {
    std::ofstream meta(dir / kMetadataFile, std::ios::trunc);
    if (!meta) throw IoError("cannot write metadata.csv in " + dir.string());
    meta << kMetadataHeader << '\n';
    for (int i = 0; i < ds.count(); ++i) {
      meta << i << ',' << ds.labels()[i] << ',' << SplitName(ds.split()[i])
           << ',' << (ds.has_groups() ? ds.groups()[i] : -1) << ','
           << (ds.has_thumbnails() ? ds.thumbnails()[i] : std::string())
           << '\n';
    }
    if (!meta) throw IoError("write failed: metadata.csv");
  }
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

std::optional<fs::path> DatasetVocabPath(const fs::path& dir) {
  const json manifest = ReadManifest(dir);
  if (manifest.contains("vocab") && manifest["vocab"].is_string()) {
    return dir / manifest["vocab"].get<std::string>();
  }
  return std::nullopt;
}

}  // namespace slicefix
