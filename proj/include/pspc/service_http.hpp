// Copyright 2026 The pspc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// HTTP JSON API over a StudyRegistry:
//
//   GET  /api/study/{id}/next?subject=S
//   POST /api/study/{id}/response   {pair:{i,j}, winner, subject, idempotency_key}
//   GET  /api/study/{id}/status
//   POST /api/study/{id}/merge      -> scores.csv

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pspc/data.hpp"
#include "pspc/error.hpp"
#include "pspc/service.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace pspc {

struct HttpOptions {
  std::filesystem::path static_dir;   // web UI bundle, mounted at /
  std::filesystem::path stimuli_dir;  // images, mounted at /stimuli
  // {ref} and {index} are substituted.
  std::string image_url_pattern = "/stimuli/{ref}/{index}.png";
};

namespace detail {

inline std::string image_url(const std::string& pattern, const std::string& ref, int index) {
  std::string url = pattern;
  const auto replace = [&](const std::string& token, const std::string& value) {
    for (auto pos = url.find(token); pos != std::string::npos; pos = url.find(token, pos + value.size()))
      url.replace(pos, token.size(), value);
  };
  replace("{ref}", ref);
  replace("{index}", std::to_string(index));
  return url;
}

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Maps library errors to HTTP statuses.
inline void guarded(httplib::Response& res, const std::function<void()>& body) {
  try {
    body();
  } catch (const NotFoundError& e) {
    send_json(res, 404, {{"error", e.what()}});
  } catch (const ValidationError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

}  // namespace detail

inline void install_routes(httplib::Server& server, StudyRegistry& registry, const HttpOptions& opt = {}) {
  using detail::guarded;
  using detail::send_json;

  server.Get("/api/study/:id/next", [&registry, opt](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      StudyState& study = registry.get(req.path_params.at("id"));
      const auto next = study.next_pair(req.get_param_value("subject"));
      if (!next) {
        send_json(res, 200, {{"done", true}});
        return;
      }
      const std::string& ref = next->pair.reference_id;
      send_json(res, 200,
                {{"done", false},
                 {"pair", {{"i", next->pair.i}, {"j", next->pair.j}}},
                 {"left", next->left},
                 {"images",
                  {{"left_url", detail::image_url(opt.image_url_pattern, ref, next->left)},
                   {"right_url", detail::image_url(opt.image_url_pattern, ref, next->right)}}}});
    });
  });

  server.Post("/api/study/:id/response", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      StudyState& study = registry.get(req.path_params.at("id"));
      nlohmann::json body = nlohmann::json::parse(req.body);
      if (!body.contains("timestamp"))
        body["timestamp"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();
      const auto ack = study.record_response(trial_from_json(body, study.plan().reference_id));
      send_json(res, 200, {{"accepted", ack.accepted}, {"duplicate", ack.duplicate},
                           {"idempotency_key", ack.idempotency_key}});
    });
  });

  server.Get("/api/study/:id/status", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, to_json(registry.get(req.path_params.at("id")).status())); });
  });

  server.Post("/api/study/:id/merge", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      StudyState& study = registry.get(req.path_params.at("id"));
      const StudyScores merged = study.merge();
      std::ostringstream csv;
      write_scores_csv(csv, {{study.plan().reference_id, merged.scores}});
      res.status = 200;
      res.set_content(csv.str(), "text/csv");
    });
  });

  if (!opt.stimuli_dir.empty() && !server.set_mount_point("/stimuli", opt.stimuli_dir.string()))
    throw ValidationError("cannot serve stimuli from " + opt.stimuli_dir.string());
  if (!opt.static_dir.empty() && !server.set_mount_point("/", opt.static_dir.string()))
    throw ValidationError("cannot serve static files from " + opt.static_dir.string());
}

}  // namespace pspc
