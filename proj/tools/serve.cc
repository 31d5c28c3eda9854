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

// serve: HTTP annotation service over one dataset.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "slicefix/errors.h"
#include "slicefix/server.h"
#include "slicefix/session.h"
#include "slicefix/similarity.h"
#include "slicefix/text_encoder.h"

int main(int argc, char** argv) {
  using namespace slicefix;
  namespace fs = std::filesystem;

  CLI::App app{"Annotation session service"};
  std::string data, encoder_uri, probe, keywords, snapshot, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  TrainConfig retrain;
  app.add_option("--data", data, "Dataset directory")->required();
  app.add_option("--port", port, "Port (0 picks a free one)");
  app.add_option("--host", host, "Bind address");
  app.add_option("--text-encoder", encoder_uri,
                 "fixture:<vocab> or remote:<url>")
      ->required();
  app.add_option("--probe", probe, "Baseline probe checkpoint");
  app.add_option("--keywords", keywords, "Keyword pool JSON");
  app.add_option("--snapshot", snapshot,
                 "Session snapshot: restored if present, written on exit");
  app.add_option("--static", static_dir, "UI assets served under /");
  app.add_option("--retrain-seed", retrain.seed, "Seed for retraining jobs");
  app.add_option("--retrain-epochs", retrain.epochs,
                 "Epochs for retraining jobs");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  // Signals are taken by a dedicated thread; block them everywhere else.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    std::optional<KeywordPools> pools;
    if (!keywords.empty()) {
      pools = LoadKeywordPools(keywords);
      for (const auto& w : pools->warnings) std::cerr << "warning: " << w << '\n';
    }
    std::unique_ptr<Session> session;
    if (!snapshot.empty() && fs::exists(snapshot)) {
      auto encoder = std::shared_ptr<const TextEncoder>(
          MakeTextEncoder(encoder_uri, LoadDataset(data).annotation_dim()));
      session = Session::Restore(snapshot, encoder, pools, retrain);
      std::cerr << "restored session from " << snapshot << '\n';
    } else {
      const EmbeddingDataset probe_ds = LoadDataset(data);
      SessionOptions options;
      options.data_dir = data;
      options.encoder = std::shared_ptr<const TextEncoder>(
          MakeTextEncoder(encoder_uri, probe_ds.annotation_dim()));
      if (!probe.empty()) options.probe_checkpoint = probe;
      options.keyword_pools = pools;
      options.retrain_config = retrain;
      session = Session::Create(std::move(options));
    }

    ServerOptions server_options;
    if (!snapshot.empty()) server_options.snapshot_path = snapshot;
    if (!static_dir.empty()) server_options.static_dir = static_dir;
    Server server(*session, server_options);
    const int bound = server.Bind(host, port);
    std::cerr << "listening on http://" << host << ":" << bound << '\n';

    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      server.Stop();
    });
    server.Listen();
    // Listen can also return on its own; wake the waiter so it can exit.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();

    if (!snapshot.empty()) {
      session->Snapshot(snapshot);
      std::cerr << "wrote snapshot " << snapshot << '\n';
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error (" << ErrorCodeName(e.code()) << "): " << e.what()
              << '\n';
    return e.code() == ErrorCode::kDivergence ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
