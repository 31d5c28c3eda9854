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

#ifndef SLICEFIX_SERVER_H_
#define SLICEFIX_SERVER_H_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "slicefix/errors.h"
#include "slicefix/session.h"

namespace slicefix {

struct ServerOptions {
  // Written by POST /api/snapshot when set.
  std::optional<std::filesystem::path> snapshot_path;
  // Static UI assets served under "/" when set.
  std::optional<std::filesystem::path> static_dir;
};

// HTTP status for a library error code.
int HttpStatus(ErrorCode code);

// JSON API over a single session. Thumbnails are served from the dataset
// directory under /thumbnails/ when the dataset has them.
class Server {
 public:
  Server(Session& session, ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds to `port` (0 picks a free port) and returns the bound port.
  int Bind(const std::string& host, int port);
  // Serves until Stop(). Requires Bind().
  void Listen();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace slicefix

#endif  // SLICEFIX_SERVER_H_
