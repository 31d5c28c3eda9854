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

#include "slicefix/session.h"

#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "slicefix/errors.h"
#include "slicefix/rng.h"
#include "slicefix/synthetic.h"
#include "test_util.h"

namespace slicefix {
namespace {

using testing::TempDir;

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kIo;
}

class SessionTest : public ::testing::Test {
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

  static std::unique_ptr<Session> NewSession(TrainConfig retrain = {},
                                             bool pools = false) {
    SessionOptions o;
    o.data_dir = data_->path();
    o.encoder = Encoder();
    o.retrain_config = retrain;
    if (pools) {
      KeywordPools p;
      p.pools[0] = {"class_0", "class_1", "spur_0", "spur_1"};
      o.keyword_pools = p;
    }
    return Session::Create(std::move(o));
  }

  static TempDir* data_;
};

TempDir* SessionTest::data_ = nullptr;

TEST_F(SessionTest, SubmitMatchesEngineScore) {
  auto s = NewSession();
  const SubmitResult r = s->SubmitPrompt(0, "spur_1");
  EXPECT_TRUE(r.created);
  const PromptScore engine =
      ScorePrompt(s->dataset(), 0, CorrectnessFlags(s->Probe(ProbeKind::kBaseline),
                                                    s->dataset()),
                  Encoder()->Encode("spur_1"), "spur_1");
  EXPECT_EQ(r.entry.score.error_score, engine.error_score);
  EXPECT_EQ(r.entry.score.threshold, engine.threshold);
  EXPECT_EQ(r.entry.score.similarities, engine.similarities);
  int total = 0;
  for (size_t b = 0; b < kPreviewBins; ++b) {
    total += r.preview.correct[b] + r.preview.error[b];
  }
  EXPECT_EQ(total, static_cast<int>(engine.similarities.size()));
  EXPECT_EQ(r.preview.edges.size(), static_cast<size_t>(kPreviewBins + 1));
}

TEST_F(SessionTest, SubmitIsIdempotent) {
  auto s = NewSession();
  const SubmitResult a = s->SubmitPrompt(0, "spur_1");
  const SubmitResult b = s->SubmitPrompt(0, "  spur_1 ");
  EXPECT_FALSE(b.created);
  EXPECT_EQ(a.entry.id, b.entry.id);
  EXPECT_EQ(s->Prompts(std::nullopt).size(), 1u);
  const SubmitResult c = s->SubmitPrompt(1, "spur_1");
  EXPECT_NE(c.entry.id, a.entry.id);
  EXPECT_EQ(s->Prompts(0).size(), 1u);
  EXPECT_EQ(s->Prompts(std::nullopt).size(), 2u);
}

TEST_F(SessionTest, SubmitErrors) {
  auto s = NewSession();
  EXPECT_EQ(CodeOf([&] { s->SubmitPrompt(0, "   "); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { s->SubmitPrompt(9, "spur_1"); }), ErrorCode::kNotFound);
  EXPECT_EQ(CodeOf([&] { s->SubmitPrompt(0, "xyzzy"); }),
            ErrorCode::kInvalidArgument);
}

TEST_F(SessionTest, ClassWithoutErrorsIsPrecondition) {
  SyntheticConfig c;
  c.noise = 0.0;
  c.spurious_signal = 0.0;
  c.per_class_per_split = 30;
  TempDir dir;
  WriteSynthetic(GenerateSynthetic(c), dir.path());
  SessionOptions o;
  o.data_dir = dir.path();
  o.encoder = FixtureTextEncoder::FromFile(*DatasetVocabPath(dir.path()));
  auto s = Session::Create(std::move(o));
  try {
    s->SubmitPrompt(0, "spur_1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFailedPrecondition);
    EXPECT_NE(std::string(e.what()).find("no errors to explain"),
              std::string::npos);
  }
}

TEST_F(SessionTest, ThresholdRevisions) {
  auto s = NewSession();
  const HistoryEntry e = s->SubmitPrompt(0, "spur_1").entry;
  HistoryEntry u = s->SetThreshold(e.id, e.score.threshold);
  EXPECT_EQ(u.effective().error_score, e.score.error_score);
  u = s->SetThreshold(e.id, 10.0);
  EXPECT_EQ(u.effective().error_score, 0.0);
  EXPECT_EQ(u.effective().count_above, 0);
  ASSERT_EQ(u.revisions.size(), 2u);
  // The automatic record is never rewritten.
  EXPECT_EQ(u.score.threshold, e.score.threshold);
  EXPECT_EQ(u.score.error_score, e.score.error_score);
  EXPECT_EQ(u.ToJson()["source"], "user-threshold");
  EXPECT_EQ(CodeOf([&] { s->SetThreshold(e.id, std::nan("")); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { s->SetThreshold(e.id, INFINITY); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { s->SetThreshold(999, 0.1); }), ErrorCode::kNotFound);
}

TEST_F(SessionTest, FinalizeOnePerClass) {
  auto s = NewSession();
  EXPECT_FALSE(s->Annotations().has_value());
  s->SubmitPrompt(0, "spur_0");
  s->SubmitPrompt(0, "spur_1");
  s->SubmitPrompt(1, "spur_0");
  const auto anns = s->FinalizeAnnotations();
  ASSERT_EQ(anns.size(), 2u);
  EXPECT_EQ(anns[0].class_id, 0);
  EXPECT_EQ(anns[0].prompt, "spur_1");
  EXPECT_EQ(anns[1].class_id, 1);
  EXPECT_EQ(*s->Annotations(), anns);
}

TEST_F(SessionTest, RetrainLifecycle) {
  auto s = NewSession();
  EXPECT_EQ(CodeOf([&] {
              s->Metrics(ProbeKind::kRetrained, GroupingKind::kOracleGroups);
            }),
            ErrorCode::kNotFound);
  EXPECT_EQ(CodeOf([&] { s->StartRetrain(Objective::kWorstSlice); }),
            ErrorCode::kFailedPrecondition);
  EXPECT_EQ(CodeOf([&] { s->StartRetrain(Objective::kErmUniform); }),
            ErrorCode::kInvalidArgument);
  s->SubmitPrompt(0, "spur_1");
  const int64_t id = s->StartRetrain(Objective::kWorstSlice);
  const Job job = s->WaitForJob(id);
  ASSERT_EQ(job.state, JobState::kDone) << job.reason;
  EXPECT_EQ(job.progress, 1.0);
  EXPECT_TRUE(job.result.contains("before"));
  EXPECT_TRUE(job.result.contains("after"));
  // Finalization ran automatically.
  ASSERT_TRUE(s->Annotations().has_value());
  const EvalReport before =
      s->Metrics(ProbeKind::kBaseline, GroupingKind::kOracleGroups);
  const EvalReport after =
      s->Metrics(ProbeKind::kRetrained, GroupingKind::kOracleGroups);
  EXPECT_GT(after.worst_group, before.worst_group);
  const EvalReport slices =
      s->Metrics(ProbeKind::kRetrained, GroupingKind::kAnnotationSlices);
  EXPECT_EQ(slices.class_splits.size(), 1u);
  EXPECT_EQ(job.result["after"]["oracle"], after.ToJson());

  // The retrained probe equals a direct engine run with the same slices.
  const auto anns = *s->Annotations();
  const SlicePartition p = PartitionClass(s->dataset(), anns[0], Split::kTrain,
                                          Encoder()->Encode(anns[0].prompt));
  TrainConfig c;
  c.objective = Objective::kWorstSlice;
  const std::vector<SlicePartition> parts{p};
  EXPECT_TRUE(s->Probe(ProbeKind::kRetrained) == TrainProbe(s->dataset(), c, parts));
}

TEST_F(SessionTest, SecondRetrainWhileRunningConflicts) {
  TrainConfig slow;
  slow.epochs = 100000;
  auto s = NewSession(slow);
  s->SubmitPrompt(0, "spur_1");
  const int64_t id = s->StartRetrain(Objective::kSliceBalanced);
  EXPECT_EQ(CodeOf([&] { s->StartRetrain(Objective::kWorstSlice); }),
            ErrorCode::kConflict);
  EXPECT_FALSE(IsTerminal(s->GetJob(id).state));
}

TEST_F(SessionTest, DegenerateAnnotationFailsJob) {
  auto s = NewSession();
  const HistoryEntry e = s->SubmitPrompt(0, "spur_1").entry;
  s->SetThreshold(e.id, 5.0);
  const Job job = s->WaitForJob(s->StartRetrain(Objective::kWorstSlice));
  EXPECT_EQ(job.state, JobState::kFailed);
  EXPECT_NE(job.reason.find("class 0"), std::string::npos) << job.reason;
  EXPECT_EQ(CodeOf([&] {
              s->Metrics(ProbeKind::kRetrained, GroupingKind::kOracleGroups);
            }),
            ErrorCode::kNotFound);
  // A new job may start once the previous one is terminal.
  s->SetThreshold(e.id, e.score.threshold);
  EXPECT_EQ(s->WaitForJob(s->StartRetrain(Objective::kWorstSlice)).state,
            JobState::kDone);
}

TEST_F(SessionTest, ClassesAndExamples) {
  auto s = NewSession();
  const auto classes = s->Classes();
  ASSERT_EQ(classes.size(), 2u);
  EXPECT_EQ(classes[0]["name"], "class_0");
  EXPECT_EQ(classes[0]["counts"]["val"], 500);
  const double acc = classes[0]["val_accuracy"];
  EXPECT_GT(acc, 0.9);
  const auto wrong = s->Examples(0, false, 1000)["examples"];
  EXPECT_EQ(static_cast<int>(wrong.size()), classes[0]["val_errors"].get<int>());
  for (const auto& x : wrong) {
    EXPECT_FALSE(x["correct"].get<bool>());
    EXPECT_NE(x["predicted"], x["label"]);
    EXPECT_FALSE(x.contains("thumbnail_url"));
  }
  EXPECT_EQ(s->Examples(0, std::nullopt, 7)["examples"].size(), 7u);
  EXPECT_EQ(CodeOf([&] { s->Examples(5, std::nullopt, 1); }),
            ErrorCode::kNotFound);
}

TEST_F(SessionTest, KeywordSuggestions) {
  EXPECT_EQ(CodeOf([&] { NewSession()->KeywordSuggestions(0); }),
            ErrorCode::kNotFound);
  auto s = NewSession({}, true);
  const auto out = s->KeywordSuggestions(0);
  ASSERT_FALSE(out["keywords"].empty());
  EXPECT_LE(out["keywords"].size(), kSuggestedKeywords);
  EXPECT_EQ(out["keywords"][0]["keyword"], "spur_1");
  EXPECT_TRUE(s->KeywordSuggestions(1)["keywords"].empty());
}

TEST_F(SessionTest, ConcurrentSubmissionsKeepHistoryConsistent) {
  auto s = NewSession();
  const std::vector<std::string> prompts = {"spur_0", "spur_1", "class_0",
                                            "class_1", "spur_0 spur_1"};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int k = 0; k < 20; ++k) {
        s->SubmitPrompt(0, prompts[(t + k) % prompts.size()]);
        s->Prompts(std::nullopt);
      }
    });
  }
  for (auto& th : threads) th.join();
  const auto history = s->Prompts(std::nullopt);
  ASSERT_EQ(history.size(), prompts.size());
  std::set<int64_t> ids;
  for (const auto& e : history) ids.insert(e.id);
  EXPECT_EQ(ids.size(), prompts.size());
}

TEST_F(SessionTest, SnapshotRoundTrip) {
  TempDir dir;
  auto s = NewSession();
  const HistoryEntry a = s->SubmitPrompt(0, "spur_1").entry;
  s->SubmitPrompt(0, "spur_0");
  s->SubmitPrompt(1, "spur_0");
  s->SetThreshold(a.id, 0.3);
  s->FinalizeAnnotations();
  ASSERT_EQ(s->WaitForJob(s->StartRetrain(Objective::kWorstSlice)).state,
            JobState::kDone);
  s->Snapshot(dir / "session.json");

  auto r = Session::Restore(dir / "session.json", Encoder());
  const auto h1 = s->Prompts(std::nullopt);
  const auto h2 = r->Prompts(std::nullopt);
  ASSERT_EQ(h1.size(), 3u);
  ASSERT_EQ(h2.size(), 3u);
  for (size_t i = 0; i < h1.size(); ++i) {
    EXPECT_EQ(h1[i].ToJson(), h2[i].ToJson());
    EXPECT_EQ(h1[i].text_vec, h2[i].text_vec);
    EXPECT_EQ(h1[i].score.similarities, h2[i].score.similarities);
    EXPECT_EQ(h1[i].score.is_error, h2[i].score.is_error);
    EXPECT_EQ(h1[i].score.example_ids, h2[i].score.example_ids);
  }
  EXPECT_EQ(s->Annotations(), r->Annotations());
  EXPECT_TRUE(s->Probe(ProbeKind::kBaseline) == r->Probe(ProbeKind::kBaseline));
  EXPECT_TRUE(s->Probe(ProbeKind::kRetrained) ==
              r->Probe(ProbeKind::kRetrained));
  EXPECT_EQ(s->GetJob(1).ToJson(), r->GetJob(1).ToJson());
  // Ids continue after the restored history.
  EXPECT_GT(r->SubmitPrompt(1, "spur_1").entry.id, 3);
}

TEST_F(SessionTest, SnapshotDuringRunningJobRestoresInterrupted) {
  TempDir dir;
  TrainConfig slow;
  slow.epochs = 100000;
  auto s = NewSession(slow);
  s->SubmitPrompt(0, "spur_1");
  const int64_t id = s->StartRetrain(Objective::kSliceBalanced);
  s->Snapshot(dir / "session.json");
  auto r = Session::Restore(dir / "session.json", Encoder());
  const Job job = r->GetJob(id);
  EXPECT_EQ(job.state, JobState::kFailed);
  EXPECT_EQ(job.reason, "interrupted");
}

TEST_F(SessionTest, RestoreRejectsUnknownVersionAndCorruptFiles) {
  TempDir dir;
  auto s = NewSession();
  s->SubmitPrompt(0, "spur_1");
  s->Snapshot(dir / "session.json");
  auto j = nlohmann::json::parse(std::ifstream(dir / "session.json"));
  j["version"] = "slicefix-session/999";
  std::ofstream(dir / "future.json") << j.dump();
  EXPECT_EQ(CodeOf([&] { Session::Restore(dir / "future.json", Encoder()); }),
            ErrorCode::kDataLoss);
  std::ofstream(dir / "garbage.json") << "{ not json";
  EXPECT_EQ(CodeOf([&] { Session::Restore(dir / "garbage.json", Encoder()); }),
            ErrorCode::kDataLoss);
  j["version"] = kSnapshotVersion;
  j["history"][0].erase("text_vec");
  std::ofstream(dir / "partial.json") << j.dump();
  EXPECT_EQ(CodeOf([&] { Session::Restore(dir / "partial.json", Encoder()); }),
            ErrorCode::kDataLoss);
  EXPECT_EQ(CodeOf([&] { Session::Restore(dir / "missing.json", Encoder()); }),
            ErrorCode::kNotFound);
}

TEST(JobStateMachineTest, OnlyForwardTransitions) {
  const std::vector<JobState> all = {JobState::kQueued, JobState::kRunning,
                                     JobState::kDone, JobState::kFailed};
  const std::set<std::pair<JobState, JobState>> allowed = {
      {JobState::kQueued, JobState::kRunning},
      {JobState::kRunning, JobState::kDone},
      {JobState::kRunning, JobState::kFailed}};
  for (JobState a : all) {
    for (JobState b : all) {
      EXPECT_EQ(IsAllowedTransition(a, b), allowed.count({a, b}) == 1)
          << JobStateName(a) << " -> " << JobStateName(b);
    }
  }
}

TEST(JobStateMachineTest, RandomWalksStayOnValidPaths) {
  const std::vector<JobState> all = {JobState::kQueued, JobState::kRunning,
                                     JobState::kDone, JobState::kFailed};
  SplitMix64 rng(3);
  for (int walk = 0; walk < 2000; ++walk) {
    Job job;
    std::vector<JobState> path{job.state};
    for (int step = 0; step < 6; ++step) {
      const JobState next = all[rng.Below(all.size())];
      const JobState before = job.state;
      try {
        job.TransitionTo(next);
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kFailedPrecondition);
        EXPECT_EQ(job.state, before);
        continue;
      }
      if (job.state != path.back()) path.push_back(job.state);
    }
    ASSERT_LE(path.size(), 3u);
    EXPECT_EQ(path[0], JobState::kQueued);
    if (path.size() > 1) EXPECT_EQ(path[1], JobState::kRunning);
    if (path.size() > 2) EXPECT_TRUE(IsTerminal(path[2]));
  }
}

TEST(JobStateMachineTest, NamesRoundTrip) {
  for (JobState s : {JobState::kQueued, JobState::kRunning, JobState::kDone,
                     JobState::kFailed}) {
    EXPECT_EQ(ParseJobState(JobStateName(s)), s);
  }
  EXPECT_THROW(ParseJobState("paused"), Error);
}

TEST(SplitPreviewTest, BinsCoverObservedRange) {
  PromptScore p;
  p.similarities = {0.0, 0.5, 1.0, 0.25};
  p.is_error = {0, 1, 1, 0};
  const SplitPreview v = MakeSplitPreview(p, 4);
  EXPECT_EQ(v.low, 0.0);
  EXPECT_EQ(v.high, 1.0);
  EXPECT_EQ(v.edges, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(v.correct, (std::vector<int>{1, 1, 0, 0}));
  EXPECT_EQ(v.error, (std::vector<int>{0, 0, 1, 1}));
}

}  // namespace
}  // namespace slicefix
