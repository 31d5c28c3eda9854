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

#ifndef SLICEFIX_TEXT_ENCODER_H_
#define SLICEFIX_TEXT_ENCODER_H_

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace slicefix {

// Maps a prompt to a unit-norm vector in the annotation embedding space.
// Implementations must be deterministic and safe to call concurrently.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Eigen::VectorXd Encode(std::string_view prompt) const = 0;
  virtual int dim() const = 0;
};

using Vocab = std::map<std::string, Eigen::VectorXd>;

// vocab.json: {"token": [d' reals], ...}
Vocab LoadVocab(const std::filesystem::path& path);
void WriteVocab(const Vocab& vocab, const std::filesystem::path& path);

// Mean of the in-vocabulary token vectors, renormalized. Tokens are split on
// whitespace and lowercased; unknown tokens are ignored. Throws
// Error(kInvalidArgument) when no token is known.
Eigen::VectorXd FixtureEncodeText(const Vocab& vocab, std::string_view prompt);

class FixtureTextEncoder : public TextEncoder {
 public:
  explicit FixtureTextEncoder(Vocab vocab);
  static std::unique_ptr<FixtureTextEncoder> FromFile(
      const std::filesystem::path& path);

  Eigen::VectorXd Encode(std::string_view prompt) const override;
  int dim() const override { return dim_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  Vocab vocab_;
  int dim_ = 0;
};

// Client for POST /embed_text {"text": ...} -> {"vector": [...]}. Responses
// that are not unit-norm vectors of the expected dimension are rejected with
// Error(kUnavailable).
class RemoteTextEncoder : public TextEncoder {
 public:
  RemoteTextEncoder(std::string base_url, int dim);

  Eigen::VectorXd Encode(std::string_view prompt) const override;
  int dim() const override { return dim_; }

 private:
  std::string base_url_;
  int dim_;
};

// Parses "fixture:<vocab path>" or "remote:<url>".
std::unique_ptr<TextEncoder> MakeTextEncoder(std::string_view uri,
                                             int expected_dim);

// Unit-norm tolerance for encoder outputs.
inline constexpr double kUnitNormTolerance = 1e-5;

}  // namespace slicefix

#endif  // SLICEFIX_TEXT_ENCODER_H_
