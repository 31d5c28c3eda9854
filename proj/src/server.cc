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

#include <charconv>
#include <functional>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace slicefix {
namespace {

using json = nlohmann::json;

void SendJson(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void SendError(httplib::Response& res, ErrorCode code,
               const std::string& message) {
  SendJson(res, HttpStatus(code),
           {{"error", {{"code", ErrorCodeName(code)}, {"message", message}}}});
}

int64_t ParseInt(const std::string& s, const char* what) {
  int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidArgumentError(std::string("invalid ") + what + " '" + s + "'");
  }
  return v;
}

json ParseBody(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw InvalidArgumentError("request body must be a JSON object");
  }
  return body;
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

// Maps library errors to JSON error responses.
httplib::Server::Handler Guard(Handler h) {
  return [h = std::move(h)](const httplib::Request& req,
                            httplib::Response& res) {
    try {
      h(req, res);
    } catch (const Error& e) {
      SendError(res, e.code(), e.what());
    } catch (const json::exception& e) {
      SendError(res, ErrorCode::kInvalidArgument, e.what());
    } catch (const std::exception& e) {
      SendJson(res, 500,
               {{"error", {{"code", "internal"}, {"message", e.what()}}}});
    }
  };
}

json EntriesJson(const std::vector<HistoryEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) out.push_back(e.ToJson());
  return out;
}

json AnnotationsJson(const std::vector<ErrorAnnotation>& anns) {
  json out = json::array();
  for (const auto& a : anns) out.push_back(AnnotationToJson(a));
  return out;
}

}  // namespace

int HttpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kFailedPrecondition:
    case ErrorCode::kConflict:
      return 409;
    case ErrorCode::kUnavailable:
      return 502;
    default:
      return 500;
  }
}

struct Server::Impl {
  Session& session;
  ServerOptions options;
  httplib::Server http;

  Impl(Session& s, ServerOptions o) : session(s), options(std::move(o)) {}
  void Routes();
};

void Server::Impl::Routes() {
  Session& s = session;

  http.Get("/api/classes", Guard([&s](const auto&, auto& res) {
             SendJson(res, 200, {{"classes", s.Classes()}});
           }));

  http.Get(R"(/api/classes/(-?\d+)/examples)",
           Guard([&s](const httplib::Request& req, httplib::Response& res) {
             const int c = static_cast<int>(ParseInt(req.matches[1], "class"));
             std::optional<bool> correct;
             if (req.has_param("correct")) {
               const std::string v = req.get_param_value("correct");
               if (v == "true" || v == "1") {
                 correct = true;
               } else if (v == "false" || v == "0") {
                 correct = false;
               } else {
                 throw InvalidArgumentError("correct must be true or false");
               }
             }
             int limit = 100;
             if (req.has_param("limit")) {
               limit = static_cast<int>(
                   ParseInt(req.get_param_value("limit"), "limit"));
             }
             SendJson(res, 200, s.Examples(c, correct, limit));
           }));

  http.Get(R"(/api/keywords/(-?\d+))",
           Guard([&s](const httplib::Request& req, httplib::Response& res) {
             const int c = static_cast<int>(ParseInt(req.matches[1], "class"));
             SendJson(res, 200, s.KeywordSuggestions(c));
           }));

  http.Post(R"(/api/classes/(-?\d+)/prompts)",
            Guard([&s](const httplib::Request& req, httplib::Response& res) {
              const int c = static_cast<int>(ParseInt(req.matches[1], "class"));
              const json body = ParseBody(req);
              if (!body.contains("text") || !body["text"].is_string()) {
                throw InvalidArgumentError("body needs a string 'text'");
              }
              const SubmitResult r =
                  s.SubmitPrompt(c, body["text"].get<std::string>());
              SendJson(res, r.created ? 201 : 200,
                       {{"prompt", r.entry.ToJson()},
                        {"preview", r.preview.ToJson()},
                        {"created", r.created}});
            }));

  http.Post(R"(/api/prompts/(-?\d+)/threshold)",
            Guard([&s](const httplib::Request& req, httplib::Response& res) {
              const int64_t id = ParseInt(req.matches[1], "prompt id");
              const json body = ParseBody(req);
              if (!body.contains("threshold") ||
                  !body["threshold"].is_number()) {
                throw InvalidArgumentError("body needs a numeric 'threshold'");
              }
              const HistoryEntry e =
                  s.SetThreshold(id, body["threshold"].get<double>());
              SendJson(res, 200, {{"prompt", e.ToJson()}});
            }));

  http.Get("/api/prompts",
           Guard([&s](const httplib::Request& req, httplib::Response& res) {
             std::optional<int> c;
             if (req.has_param("class")) {
               c = static_cast<int>(
                   ParseInt(req.get_param_value("class"), "class"));
             }
             SendJson(res, 200, {{"prompts", EntriesJson(s.Prompts(c))}});
           }));

  http.Post("/api/annotations/finalize",
            Guard([&s](const auto&, auto& res) {
              SendJson(res, 200,
                       {{"annotations", AnnotationsJson(s.FinalizeAnnotations())}});
            }));

  http.Get("/api/annotations", Guard([&s](const auto&, auto& res) {
             const auto anns = s.Annotations();
             SendJson(res, 200,
                      {{"annotations",
                        anns ? AnnotationsJson(*anns) : json(nullptr)}});
           }));

  http.Post("/api/retrain",
            Guard([&s](const httplib::Request& req, httplib::Response& res) {
              const json body = ParseBody(req);
              const Objective objective = ParseObjective(
                  body.value("objective", std::string("worst_slice")));
              const int64_t id = s.StartRetrain(objective);
              SendJson(res, 202, {{"job_id", id}, {"job", s.GetJob(id).ToJson()}});
            }));

  http.Get(R"(/api/jobs/(-?\d+))",
           Guard([&s](const httplib::Request& req, httplib::Response& res) {
             const int64_t id = ParseInt(req.matches[1], "job id");
             SendJson(res, 200, s.GetJob(id).ToJson());
           }));

  http.Get("/api/metrics",
           Guard([&s](const httplib::Request& req, httplib::Response& res) {
             const ProbeKind kind = ParseProbeKind(
                 req.has_param("probe") ? req.get_param_value("probe")
                                        : "baseline");
             const GroupingKind grouping = ParseGrouping(
                 req.has_param("grouping") ? req.get_param_value("grouping")
                                           : "oracle");
             SendJson(res, 200, s.Metrics(kind, grouping).ToJson());
           }));

  http.Post("/api/snapshot", Guard([this](const auto&, auto& res) {
              if (!options.snapshot_path) {
                throw FailedPreconditionError("no snapshot path configured");
              }
              session.Snapshot(*options.snapshot_path);
              SendJson(res, 200, {{"path", options.snapshot_path->string()}});
            }));

  if (session.dataset().has_thumbnails()) {
    http.set_mount_point("/thumbnails", session.data_dir().string());
  }
  if (options.static_dir) {
    http.set_mount_point("/", options.static_dir->string());
  }
}

Server::Server(Session& session, ServerOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {
  impl_->Routes();
}

Server::~Server() { Stop(); }

int Server::Bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void Server::Listen() { impl_->http.listen_after_bind(); }

void Server::Stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace slicefix
