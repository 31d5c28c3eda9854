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

#include "slicefix/server.h"

#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_stub.h"
#include "slicefix/synthetic.h"
#include "test_util.h"

namespace slicefix {
namespace {

using json = nlohmann::json;
using testing::HttpStub;
using testing::TempDir;

// Session plus server on a free port.
class Harness {
 public:
  Harness(const std::filesystem::path& data,
          std::shared_ptr<const TextEncoder> encoder,
          std::optional<std::filesystem::path> snapshot = std::nullopt) {
    SessionOptions o;
    o.data_dir = data;
    o.encoder = std::move(encoder);
    KeywordPools pools;
    pools.pools[0] = {"spur_0", "spur_1", "class_0"};
    o.keyword_pools = pools;
    session_ = Session::Create(std::move(o));
    ServerOptions so;
    so.snapshot_path = snapshot;
    server_ = std::make_unique<Server>(*session_, so);
    port_ = server_->Bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->Listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    // Wait for the listener.
    for (int i = 0; i < 200 && !client_->Get("/api/classes"); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  ~Harness() {
    server_->Stop();
    thread_.join();
  }

  std::pair<int, json> Get(const std::string& path) {
    auto res = client_->Get(path);
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body, nullptr, false)};
  }
  std::pair<int, json> Post(const std::string& path, const json& body) {
    auto res = client_->Post(path, body.dump(), "application/json");
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body, nullptr, false)};
  }
  std::pair<int, json> PostRaw(const std::string& path, const std::string& body) {
    auto res = client_->Post(path, body, "application/json");
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body, nullptr, false)};
  }

  Session& session() { return *session_; }

 private:
  std::unique_ptr<Session> session_;
  std::unique_ptr<Server> server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

class ServerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new TempDir();
    WriteSynthetic(GenerateSynthetic(SyntheticConfig{}), data_->path());
  }
  static void TearDownTestSuite() {
    delete data_;
    data_ = nullptr;
  }
  static std::shared_ptr<const TextEncoder> Encoder() {
    return FixtureTextEncoder::FromFile(*DatasetVocabPath(data_->path()));
  }
  static TempDir* data_;
};

TempDir* ServerTest::data_ = nullptr;

TEST(HttpStatusTest, Mapping) {
  EXPECT_EQ(HttpStatus(ErrorCode::kInvalidArgument), 400);
  EXPECT_EQ(HttpStatus(ErrorCode::kNotFound), 404);
  EXPECT_EQ(HttpStatus(ErrorCode::kFailedPrecondition), 409);
  EXPECT_EQ(HttpStatus(ErrorCode::kConflict), 409);
  EXPECT_EQ(HttpStatus(ErrorCode::kUnavailable), 502);
  EXPECT_EQ(HttpStatus(ErrorCode::kIo), 500);
}

TEST_F(ServerTest, FullLoop) {
  Harness h(data_->path(), Encoder());

  auto [st, classes] = h.Get("/api/classes");
  ASSERT_EQ(st, 200);
  ASSERT_EQ(classes["classes"].size(), 2u);
  EXPECT_EQ(classes["classes"][0]["id"], 0);

  auto [se, examples] = h.Get("/api/classes/0/examples?correct=false&limit=5");
  ASSERT_EQ(se, 200);
  EXPECT_LE(examples["examples"].size(), 5u);
  for (const auto& x : examples["examples"]) EXPECT_FALSE(x["correct"].get<bool>());

  auto [sk, keywords] = h.Get("/api/keywords/0");
  ASSERT_EQ(sk, 200);
  EXPECT_EQ(keywords["keywords"][0]["keyword"], "spur_1");

  auto [sp, prompt] = h.Post("/api/classes/0/prompts", {{"text", "spur_1"}});
  ASSERT_EQ(sp, 201);
  const int64_t id = prompt["prompt"]["id"];
  const PromptScore engine = ScorePrompt(
      h.session().dataset(), 0, h.session().Correctness(),
      Encoder()->Encode("spur_1"), "spur_1");
  EXPECT_EQ(prompt["prompt"]["error_score"].get<double>(), engine.error_score);
  EXPECT_EQ(prompt["prompt"]["threshold"].get<double>(), engine.threshold);
  EXPECT_EQ(prompt["preview"]["correct"].size(), static_cast<size_t>(kPreviewBins));

  auto [sp2, again] = h.Post("/api/classes/0/prompts", {{"text", "spur_1"}});
  EXPECT_EQ(sp2, 200);
  EXPECT_EQ(again["prompt"]["id"], id);

  auto [stt, revised] = h.Post("/api/prompts/" + std::to_string(id) + "/threshold",
                               {{"threshold", engine.threshold}});
  ASSERT_EQ(stt, 200);
  EXPECT_EQ(revised["prompt"]["error_score"].get<double>(), engine.error_score);
  EXPECT_EQ(revised["prompt"]["source"], "user-threshold");
  EXPECT_EQ(revised["prompt"]["auto"]["threshold"].get<double>(), engine.threshold);

  auto [sl, listed] = h.Get("/api/prompts?class=0");
  ASSERT_EQ(sl, 200);
  EXPECT_EQ(listed["prompts"].size(), 1u);
  EXPECT_EQ(h.Get("/api/prompts?class=1").second["prompts"].size(), 0u);

  auto [sf, finalized] = h.Post("/api/annotations/finalize", json::object());
  ASSERT_EQ(sf, 200);
  EXPECT_EQ(finalized["annotations"].size(), 1u);

  auto [sr, started] = h.Post("/api/retrain", {{"objective", "worst_slice"}});
  ASSERT_EQ(sr, 202);
  const int64_t job = started["job_id"];
  json state;
  for (int i = 0; i < 2000; ++i) {
    state = h.Get("/api/jobs/" + std::to_string(job)).second;
    if (state["state"] == "done" || state["state"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ASSERT_EQ(state["state"], "done") << state.dump();

  auto [sb, baseline] = h.Get("/api/metrics?probe=baseline&grouping=oracle");
  auto [sa, retrained] = h.Get("/api/metrics?probe=retrained&grouping=oracle");
  ASSERT_EQ(sb, 200);
  ASSERT_EQ(sa, 200);
  EXPECT_GT(retrained["worst_group"].get<double>(),
            baseline["worst_group"].get<double>());
  auto [ss, slices] =
      h.Get("/api/metrics?probe=retrained&grouping=annotation_slices");
  ASSERT_EQ(ss, 200);
  EXPECT_TRUE(slices.contains("mean_minority"));
}

TEST_F(ServerTest, ErrorStatuses) {
  Harness h(data_->path(), Encoder());
  EXPECT_EQ(h.Post("/api/classes/0/prompts", {{"text", ""}}).first, 400);
  EXPECT_EQ(h.Post("/api/classes/0/prompts", json::object()).first, 400);
  EXPECT_EQ(h.PostRaw("/api/classes/0/prompts", "{oops").first, 400);
  EXPECT_EQ(h.Post("/api/classes/7/prompts", {{"text", "spur_1"}}).first, 404);
  EXPECT_EQ(h.Post("/api/prompts/42/threshold", {{"threshold", 0.1}}).first, 404);
  EXPECT_EQ(h.Post("/api/prompts/1/threshold", {{"threshold", "x"}}).first, 400);
  EXPECT_EQ(h.Get("/api/jobs/9").first, 404);
  EXPECT_EQ(h.Get("/api/metrics?probe=retrained").first, 404);
  EXPECT_EQ(h.Get("/api/metrics?probe=sideways").first, 400);
  EXPECT_EQ(h.Get("/api/metrics?grouping=annotation_slices").first, 409);
  EXPECT_EQ(h.Post("/api/retrain", {{"objective", "erm_uniform"}}).first, 400);
  EXPECT_EQ(h.Post("/api/retrain", {{"objective", "worst_slice"}}).first, 409);
  EXPECT_EQ(h.Post("/api/snapshot", json::object()).first, 409);
  const auto [code, body] = h.Post("/api/classes/0/prompts", {{"text", ""}});
  EXPECT_EQ(body["error"]["code"], "invalid_argument");
}

TEST_F(ServerTest, ClassWithoutErrorsIs409) {
  SyntheticConfig c;
  c.noise = 0.0;
  c.spurious_signal = 0.0;
  c.per_class_per_split = 20;
  TempDir dir;
  WriteSynthetic(GenerateSynthetic(c), dir.path());
  Harness h(dir.path(),
            FixtureTextEncoder::FromFile(*DatasetVocabPath(dir.path())));
  const auto [code, body] = h.Post("/api/classes/0/prompts", {{"text", "spur_1"}});
  EXPECT_EQ(code, 409);
  EXPECT_NE(body["error"]["message"].get<std::string>().find("no errors to explain"),
            std::string::npos);
}

TEST_F(ServerTest, RemoteEncoderFailureIs502) {
  const auto vocab = LoadVocab(*DatasetVocabPath(data_->path()));
  auto up = std::make_unique<HttpStub>([&vocab](httplib::Server& s) {
    s.Post("/embed_text", [&vocab](const httplib::Request& req,
                                   httplib::Response& res) {
      const std::string text = json::parse(req.body).at("text");
      const Eigen::VectorXd v = FixtureEncodeText(vocab, text);
      res.set_content(json{{"vector", std::vector<double>(v.data(), v.data() + v.size())}}
                          .dump(),
                      "application/json");
    });
  });
  const std::string url = up->url();
  Harness h(data_->path(), MakeTextEncoder("remote:" + url, 64));
  const auto [ok, body] = h.Post("/api/classes/0/prompts", {{"text", "spur_1"}});
  ASSERT_EQ(ok, 201);
  const PromptScore engine = ScorePrompt(
      h.session().dataset(), 0, h.session().Correctness(),
      FixtureEncodeText(vocab, "spur_1"), "spur_1");
  EXPECT_EQ(body["prompt"]["error_score"].get<double>(), engine.error_score);
  up.reset();
  EXPECT_EQ(h.Post("/api/classes/0/prompts", {{"text", "spur_0"}}).first, 502);
}

TEST_F(ServerTest, SnapshotEndpoint) {
  TempDir dir;
  Harness h(data_->path(), Encoder(), dir / "session.json");
  h.Post("/api/classes/0/prompts", {{"text", "spur_1"}});
  const auto [code, body] = h.Post("/api/snapshot", json::object());
  ASSERT_EQ(code, 200);
  auto restored = Session::Restore(dir / "session.json", Encoder());
  EXPECT_EQ(restored->Prompts(std::nullopt).size(), 1u);
}

}  // namespace
}  // namespace slicefix
