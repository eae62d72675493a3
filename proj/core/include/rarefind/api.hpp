/*
 * Copyright 2026 The Rarefind Authors.
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

#ifndef RAREFIND_API_HPP_
#define RAREFIND_API_HPP_

#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rarefind/store.hpp"
#include "rarefind/triage.hpp"

namespace httplib {
class Server;
}

namespace rarefind {

// Read-only aggregation shared by GET /api/v1/dashboard and the CLI report
// command, so both print the same numbers.
nlohmann::json iteration_summary(const Project& project, const IterationRecord& record);
nlohmann::json build_dashboard(const Project& project);

// Character offsets for browsers: UTF-16 code units before byte `offset`.
std::size_t utf16_offset(std::string_view text, std::size_t offset);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string token;               // when set, requests must send X-Rarefind-Token
  std::string cors_origin = "*";
  std::string ui_dir;              // served at / when set
};

// The review workflow over HTTP, minus the transport. Every call holds one
// mutex, so label writes from many reviewers are serialized through the
// project's single writer; a POST returns only after the log append is synced.
class ReviewService {
 public:
  explicit ReviewService(Project& project, ServiceOptions options = {});

  // GET /api/v1/rounds
  ApiResponse rounds();
  // GET /api/v1/rounds/{n}
  ApiResponse round(int iteration);
  // GET /api/v1/rounds/{n}/queue?reviewer=ID  (404 unknown round, 403 unassigned)
  ApiResponse queue(int iteration, const std::string& reviewer);
  // POST /api/v1/labels  (201; 409 closed round; 422 invalid verdict)
  ApiResponse post_label(const nlohmann::json& body);
  // GET /api/v1/rounds/{n}/disagreements
  ApiResponse disagreements(int iteration);
  // POST /api/v1/adjudications  (201; 409 not disputed)
  ApiResponse post_adjudication(const nlohmann::json& body);
  // POST /api/v1/rounds/{n}/seal  {"force": bool}
  ApiResponse seal(int iteration, const nlohmann::json& body);
  // GET /api/v1/rounds/{n}/agreement
  ApiResponse agreement(int iteration);
  // GET /api/v1/dashboard
  ApiResponse dashboard();
  // GET /api/v1/clusters?iteration=N  (latest clustering when omitted)
  ApiResponse clusters(std::optional<int> iteration);
  // POST /api/v1/steering  {"model_iteration": n, "clusters": [...]}
  ApiResponse post_steering(const nlohmann::json& body);

  const ServiceOptions& options() const { return options_; }

 private:
  nlohmann::json item_view(const ReviewRound& round, const std::string& id,
                           const std::string& reviewer);

  Project& project_;
  ServiceOptions options_;
  std::mutex mu_;
};

// Registers every /api/v1 route (plus CORS preflight, optional token check and
// the static UI mount) on an httplib server.
void install_routes(httplib::Server& server, ReviewService& service);

}  // namespace rarefind

#endif  // RAREFIND_API_HPP_
