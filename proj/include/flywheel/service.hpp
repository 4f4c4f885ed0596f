/*
 * Copyright 2026 The Flywheel Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include "flywheel/orchestrator.hpp"

namespace flywheel {

struct ApiRequest {
    std::string method;  // "GET" / "POST"
    std::string path;    // without query string
    std::map<std::string, std::string> query;
    std::string body;
    std::string authorization;  // raw header value
};

struct ApiResponse {
    int status = 200;
    std::string body;  // JSON
};

/// HTTP surface under /v1. handle() is transport-free; serve() binds it to a
/// socket.
///
///   POST /v1/chat                     {session_id, query, history}
///   POST /v1/feedback                 {trace_id, signal, reasons, free_text}
///   GET  /v1/traces/{id}
///   GET  /v1/triage?status=pending
///   POST /v1/triage/{id}/label        {sme_label} | {dismiss: true}
///   GET  /v1/rollouts
///   POST /v1/rollouts/{task}/approve
///   POST /v1/rollouts/{task}/rollback
///   GET  /v1/reports                  latest first
///   GET  /v1/reports/{cycle_id}
///
/// Errors: {"error": {"code": "...", "message": "..."}}.
class ApiService {
public:
    ApiService(std::shared_ptr<FlywheelOrchestrator> orchestrator, std::string bearer_token = {});

    ApiResponse handle(const ApiRequest& request);

    /// Blocks serving on host:port until stop() is called from another thread.
    void serve(const std::string& host, int port);
    /// Binds to an ephemeral port and serves on a background thread.
    int start_background(const std::string& host = "127.0.0.1");
    void stop();
    ~ApiService();

private:
    ApiResponse chat(const json& body);
    ApiResponse feedback(const json& body);
    ApiResponse triage_list(const ApiRequest& r);
    ApiResponse triage_label(const std::string& item_id, const json& body);
    ApiResponse rollouts();
    ApiResponse rollout_action(const std::string& task, const std::string& action);
    ApiResponse reports(const std::string& cycle_id);
    ApiResponse trace(const std::string& trace_id);

    std::shared_ptr<FlywheelOrchestrator> orch_;
    std::string token_;
    struct Server;
    std::unique_ptr<Server> server_;
    std::thread thread_;
};

}  // namespace flywheel
