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

#ifndef SLICEFIX_DATASET_H_
#define SLICEFIX_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace slicefix {

using RowMatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split : uint8_t { kTrain = 0, kVal = 1 };

const char* SplitName(Split split);
Split ParseSplit(std::string_view name);

// Raw fields of a dataset before validation. `groups` and `thumbnails` are
// optional columns: an empty vector means the column is absent. Inside a
// present thumbnail column, an empty string marks a missing image.
struct DatasetContents {
  std::string name;
  std::vector<std::string> class_names;
  RowMatrixF embeddings;
  std::optional<RowMatrixF> annotation_embeddings;
  std::vector<int32_t> labels;
  std::vector<Split> split;
  std::vector<int32_t> groups;
  int32_t num_groups = 0;  // 0 with groups present: inferred as max + 1.
  std::vector<std::string> thumbnails;
};

// Immutable set of frozen embeddings with labels, splits and optional oracle
// groups. Every row of both embedding spaces is unit-norm.
class EmbeddingDataset {
 public:
  // Validates the contents and renormalizes rows whose norm drifted from 1.
  // Throws Error(kInvalidArgument) on any violated invariant.
  static EmbeddingDataset Create(DatasetContents contents);

  const std::string& name() const { return c_.name; }
  int dim() const { return static_cast<int>(c_.embeddings.cols()); }
  int count() const { return static_cast<int>(c_.embeddings.rows()); }
  int num_classes() const { return static_cast<int>(c_.class_names.size()); }
  const std::vector<std::string>& class_names() const { return c_.class_names; }

  const RowMatrixF& embeddings() const { return c_.embeddings; }
  bool has_annotation_embeddings() const {
    return c_.annotation_embeddings.has_value();
  }
  // Space used for prompt similarity; the probe space unless a separate one
  // was supplied.
  const RowMatrixF& annotation_embeddings() const {
    return c_.annotation_embeddings ? *c_.annotation_embeddings
                                    : c_.embeddings;
  }
  int annotation_dim() const {
    return static_cast<int>(annotation_embeddings().cols());
  }

  const std::vector<int32_t>& labels() const { return c_.labels; }
  const std::vector<Split>& split() const { return c_.split; }
  bool has_groups() const { return !c_.groups.empty(); }
  const std::vector<int32_t>& groups() const { return c_.groups; }
  int num_groups() const { return c_.num_groups; }
  bool has_thumbnails() const { return !c_.thumbnails.empty(); }
  const std::vector<std::string>& thumbnails() const { return c_.thumbnails; }

  std::vector<int> Indices(Split split) const;
  std::vector<int> ClassIndices(int class_id, Split split) const;

  const DatasetContents& contents() const { return c_; }

  friend bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b);

 private:
  explicit EmbeddingDataset(DatasetContents c) : c_(std::move(c)) {}

  DatasetContents c_;
};

// Row norm deviation above which a row is rescaled on load.
inline constexpr double kRenormalizeTolerance = 1e-6;
// Rows with a smaller norm are rejected as degenerate.
inline constexpr double kMinRowNorm = 1e-12;

inline constexpr std::string_view kDtypeTag = "float32-le";
inline constexpr std::string_view kManifestFile = "manifest.json";

// Directory layout:
//   manifest.json               dims, dtype tag, class names, file names
//   embeddings.bin              count x dim float32, row-major, little-endian
//   metadata.csv                id,label,split,group,thumbnail
//   annotation_embeddings.bin   optional, count x annotation_dim
//   vocab.json                  optional fixture vocabulary
EmbeddingDataset LoadDataset(const std::filesystem::path& dir);
// `vocab_file`, when non-empty, is recorded in the manifest; the caller writes
// the file itself.
void WriteDataset(const EmbeddingDataset& ds, const std::filesystem::path& dir,
                  std::string_view vocab_file = {});

// Path of the vocab file named by the manifest, if any.
std::optional<std::filesystem::path> DatasetVocabPath(
    const std::filesystem::path& dir);

// Little-endian float32 matrix I/O shared with the probe checkpoint format.
void WriteFloat32(std::ostream& out, const float* data, size_t n);
void ReadFloat32(std::istream& in, float* data, size_t n);

}  // namespace slicefix

#endif  // SLICEFIX_DATASET_H_
