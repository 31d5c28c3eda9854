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

#include "slicefix/text_encoder.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "slicefix/errors.h"

namespace slicefix {

using json = nlohmann::json;

Vocab LoadVocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing vocab file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgumentError("unparsable vocab: " + std::string(e.what()));
  }
  if (!j.is_object()) throw InvalidArgumentError("vocab must be a JSON object");
  Vocab vocab;
  Eigen::Index dim = -1;
  for (const auto& [token, values] : j.items()) {
    const auto v = values.get<std::vector<double>>();
    if (dim < 0) dim = static_cast<Eigen::Index>(v.size());
    if (static_cast<Eigen::Index>(v.size()) != dim || dim == 0) {
      throw InvalidArgumentError("vocab vector for '" + token +
                                 "' has inconsistent dimension");
    }
    vocab.emplace(token, Eigen::Map<const Eigen::VectorXd>(v.data(), dim));
  }
  return vocab;
}

void WriteVocab(const Vocab& vocab, const std::filesystem::path& path) {
  json j = json::object();
  for (const auto& [token, v] : vocab) {
    j[token] = std::vector<double>(v.data(), v.data() + v.size());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

Eigen::VectorXd FixtureEncodeText(const Vocab& vocab, std::string_view prompt) {
  std::string lowered(prompt);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  std::istringstream tokens(lowered);
  std::string token;
  Eigen::VectorXd sum;
  int hits = 0;
  while (tokens >> token) {
    auto it = vocab.find(token);
    if (it == vocab.end()) continue;
    if (hits == 0) {
      sum = it->second;
    } else {
      sum += it->second;
    }
    ++hits;
  }
  if (hits == 0) {
    throw InvalidArgumentError("prompt '" + std::string(prompt) +
                               "' has no in-vocabulary token");
  }
  const double norm = sum.norm();
  if (norm < 1e-12) {
    throw InvalidArgumentError("prompt '" + std::string(prompt) +
                               "' encodes to the zero vector");
  }
  return sum / norm;
}

FixtureTextEncoder::FixtureTextEncoder(Vocab vocab) : vocab_(std::move(vocab)) {
  if (vocab_.empty()) throw InvalidArgumentError("empty vocabulary");
  dim_ = static_cast<int>(vocab_.begin()->second.size());
}

std::unique_ptr<FixtureTextEncoder> FixtureTextEncoder::FromFile(
    const std::filesystem::path& path) {
  return std::make_unique<FixtureTextEncoder>(LoadVocab(path));
}

Eigen::VectorXd FixtureTextEncoder::Encode(std::string_view prompt) const {
  return FixtureEncodeText(vocab_, prompt);
}

RemoteTextEncoder::RemoteTextEncoder(std::string base_url, int dim)
    : base_url_(std::move(base_url)), dim_(dim) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

Eigen::VectorXd RemoteTextEncoder::Encode(std::string_view prompt) const {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  const json body = {{"text", std::string(prompt)}};
  auto res = client.Post("/embed_text", body.dump(), "application/json");
  if (!res) {
    throw UnavailableError("text encoder unreachable at " + base_url_ + ": " +
                           httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw UnavailableError("text encoder returned HTTP " +
                           std::to_string(res->status));
  }
  std::vector<double> v;
  try {
    v = json::parse(res->body).at("vector").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw UnavailableError("malformed text encoder response: " +
                           std::string(e.what()));
  }
  if (static_cast<int>(v.size()) != dim_) {
    throw UnavailableError("text encoder returned dimension " +
                           std::to_string(v.size()) + ", expected " +
                           std::to_string(dim_));
  }
  Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(v.data(), dim_);
  if (!out.allFinite() || std::abs(out.norm() - 1.0) > kUnitNormTolerance) {
    throw UnavailableError("text encoder returned a non-unit vector");
  }
  return out;
}

std::unique_ptr<TextEncoder> MakeTextEncoder(std::string_view uri,
                                             int expected_dim) {
  const auto colon = uri.find(':');
  if (colon == std::string_view::npos) {
    throw InvalidArgumentError("text encoder must be fixture:<vocab> or remote:<url>");
  }
  const auto kind = uri.substr(0, colon);
  const std::string rest(uri.substr(colon + 1));
  if (kind == "fixture") {
    auto enc = FixtureTextEncoder::FromFile(rest);
    if (enc->dim() != expected_dim) {
      throw InvalidArgumentError("vocab dimension " + std::to_string(enc->dim()) +
                                 " does not match annotation space " +
                                 std::to_string(expected_dim));
    }
    return enc;
  }
  if (kind == "remote") {
    return std::make_unique<RemoteTextEncoder>(rest, expected_dim);
  }
  throw InvalidArgumentError("unknown text encoder kind '" + std::string(kind) + "'");
}

}  // namespace slicefix
