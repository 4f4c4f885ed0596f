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

#include "flywheel/service.hpp"

#include <httplib.h>

#include <algorithm>

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

struct ApiService::Server {
    httplib::Server http;
};

namespace {

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidQuery:
        case ErrorCode::InvalidArgument:
        case ErrorCode::InvalidReason:
        case ErrorCode::ValidationError:
        case ErrorCode::SchemaError:
        case ErrorCode::ParseError:
            return 400;
        case ErrorCode::Unauthorized:
            return 401;
        case ErrorCode::UnknownTrace:
        case ErrorCode::NotFound:
        case ErrorCode::UnknownVariant:
            return 404;
        case ErrorCode::AlreadyLabeled:
        case ErrorCode::NothingPending:
        case ErrorCode::ApprovalPending:
        case ErrorCode::CycleInProgress:
        case ErrorCode::NotRolling:
            return 409;
        case ErrorCode::GatewayError:
        case ErrorCode::NoBackend:
        case ErrorCode::RemoteError:
        case ErrorCode::ScriptedError:
        case ErrorCode::UnknownBackend:
            return 503;
        default:
            return 500;
    }
}

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
    return {status, json{{"error", {{"code", std::string(code)}, {"message", message}}}}.dump()};
}

ApiResponse error_response(const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
}

ApiResponse ok(const json& body, int status = 200) { return {status, body.dump()}; }

std::vector<std::string> segments(const std::string& path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        auto j = path.find('/', i);
        if (j == std::string::npos) j = path.size();
        if (j > i) out.push_back(path.substr(i, j - i));
        i = j + 1;
    }
    return out;
}

json parse_body(const std::string& body) {
    if (text::is_blank(body)) return json::object();
    try {
        auto j = json::parse(body);
        if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON body: ") + e.what());
    }
}

VariantTask task_from_path(const std::string& s) {
    auto t = parse_variant_task(s);
    if (!t) throw Error(ErrorCode::NotFound, "unknown task '" + s + "'");
    return *t;
}

}  // namespace

ApiService::ApiService(std::shared_ptr<FlywheelOrchestrator> orchestrator, std::string bearer_token)
    : orch_(std::move(orchestrator)), token_(std::move(bearer_token)) {}

ApiService::~ApiService() { stop(); }

ApiResponse ApiService::handle(const ApiRequest& request) {
    try {
        if (!token_.empty() && request.authorization != "Bearer " + token_) {
            throw Error(ErrorCode::Unauthorized, "missing or invalid bearer token");
        }
        const auto seg = segments(request.path);
        if (seg.empty() || seg[0] != "v1") throw Error(ErrorCode::NotFound, "no route for " + request.path);
        const bool get = request.method == "GET";
        const bool post = request.method == "POST";
        const std::size_t n = seg.size();
        if (n == 2 && seg[1] == "chat" && post) return chat(parse_body(request.body));
        if (n == 2 && seg[1] == "feedback" && post) return feedback(parse_body(request.body));
        if (n == 3 && seg[1] == "traces" && get) return trace(seg[2]);
        if (n == 2 && seg[1] == "triage" && get) return triage_list(request);
        if (n == 4 && seg[1] == "triage" && seg[3] == "label" && post) {
            return triage_label(seg[2], parse_body(request.body));
        }
        if (n == 2 && seg[1] == "rollouts" && get) return rollouts();
        if (n == 4 && seg[1] == "rollouts" && post && (seg[3] == "approve" || seg[3] == "rollback")) {
            return rollout_action(seg[2], seg[3]);
        }
        if (n == 2 && seg[1] == "reports" && get) return reports("");
        if (n == 3 && seg[1] == "reports" && get) return reports(seg[2]);
        if (!get && !post) return error_response(405, "MethodNotAllowed", request.method + " not supported");
        throw Error(ErrorCode::NotFound, "no route for " + request.method + " " + request.path);
    } catch (const Error& e) {
        return error_response(e);
    } catch (const json::exception& e) {
        return error_response(400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

ApiResponse ApiService::chat(const json& body) {
    if (!body.contains("query") || !body.at("query").is_string()) {
        throw Error(ErrorCode::InvalidArgument, "field 'query' is required");
    }
    const auto& d = orch_->deployment();
    const auto query = body.at("query").get<std::string>();
    const auto history = body.value("history", std::vector<std::string>{});
    const auto session = body.contains("session_id") ? body.at("session_id").get<std::string>() : d.ids->next("sess");
    const auto turn = body.value("turn_index", static_cast<std::int64_t>(history.size()));
    if (text::is_blank(query)) throw Error(ErrorCode::InvalidQuery, "query is blank");
    auto trace = d.serve(session, turn, query, history);
    if (trace.failed_at) {
        return {503, json{{"error", {{"code", "GatewayError"}, {"message", trace.error}}},
                          {"trace_id", trace.trace_id}}
                         .dump()};
    }
    return ok({{"trace_id", trace.trace_id},
               {"session_id", trace.session_id},
               {"response", trace.response_text},
               {"citations", trace.citations},
               {"followups", trace.followups},
               {"expert", trace.expert_selected ? json(std::string(to_string(*trace.expert_selected))) : json(nullptr)},
               {"served_variants", trace.served_variants}});
}

ApiResponse ApiService::feedback(const json& body) {
    FeedbackRecord fb;
    if (!body.contains("trace_id") || !body.contains("signal")) {
        throw Error(ErrorCode::InvalidArgument, "fields 'trace_id' and 'signal' are required");
    }
    fb.trace_id = body.at("trace_id").get<std::string>();
    auto signal = parse_signal(body.at("signal").get<std::string>());
    if (!signal) throw Error(ErrorCode::InvalidArgument, "signal must be 'up' or 'down'");
    fb.signal = *signal;
    for (const auto& r : body.value("reasons", json::array())) {
        auto reason = r.is_string() ? parse_reason(r.get<std::string>()) : std::nullopt;
        if (!reason) throw Error(ErrorCode::InvalidReason, "unknown reason " + r.dump());
        fb.reasons.insert(*reason);
    }
    fb.free_text = body.value("free_text", "");
    auto id = orch_->deployment().monitor->record_feedback(fb);
    return ok({{"feedback_id", id}}, 201);
}

ApiResponse ApiService::trace(const std::string& trace_id) {
    auto t = orch_->deployment().monitor->find_trace(trace_id);
    if (!t) throw Error(ErrorCode::UnknownTrace, "unknown trace '" + trace_id + "'");
    return ok(*t);
}

ApiResponse ApiService::triage_list(const ApiRequest& r) {
    std::optional<TriageStatus> status;
    auto it = r.query.find("status");
    if (it != r.query.end() && !it->second.empty()) {
        status = parse_triage_status(it->second);
        if (!status) throw Error(ErrorCode::InvalidArgument, "unknown status '" + it->second + "'");
    }
    json items = json::array();
    for (const auto& item : orch_->deployment().triage->list(status)) items.push_back(item);
    return ok({{"items", items}});
}

ApiResponse ApiService::triage_label(const std::string& item_id, const json& body) {
    auto& board = *orch_->deployment().triage;
    if (!board.find(item_id)) throw Error(ErrorCode::NotFound, "no triage item '" + item_id + "'");
    if (body.value("dismiss", false)) return ok(board.dismiss(item_id));
    if (!body.contains("sme_label")) throw Error(ErrorCode::InvalidArgument, "field 'sme_label' or 'dismiss' required");
    const auto& label = body.at("sme_label");
    if (label.is_string()) {
        auto expert = parse_expert(label.get<std::string>());
        if (!expert) expert = expert_from_alias(label.get<std::string>());
        if (!expert) throw Error(ErrorCode::ValidationError, "unknown expert '" + label.get<std::string>() + "'");
        return ok(board.label(item_id, *expert));
    }
    if (label.is_array()) return ok(board.label(item_id, label.get<std::vector<std::string>>()));
    throw Error(ErrorCode::ValidationError, "sme_label must be an expert id or a list of queries");
}

ApiResponse ApiService::rollouts() {
    json states = json::array();
    for (const auto& s : orch_->deployment().rollouts->states()) states.push_back(s);
    return ok({{"rollouts", states}});
}

ApiResponse ApiService::rollout_action(const std::string& task_name, const std::string& action) {
    const auto task = task_from_path(task_name);
    auto& controller = *orch_->deployment().rollouts;
    if (!controller.state(task)) throw Error(ErrorCode::NotFound, "no rollout for '" + task_name + "'");
    if (action == "approve") return ok(controller.approve(task));
    return ok(controller.rollback(task, "operator rollback"));
}

ApiResponse ApiService::reports(const std::string& cycle_id) {
    if (!cycle_id.empty()) {
        auto r = orch_->find_report(cycle_id);
        if (!r) throw Error(ErrorCode::NotFound, "no report '" + cycle_id + "'");
        return ok(*r);
    }
    auto all = orch_->reports();
    std::reverse(all.begin(), all.end());
    json out = json::array();
    for (const auto& r : all) out.push_back(r);
    return ok({{"reports", out}});
}

namespace {

void install_routes(httplib::Server& http, ApiService& api) {
    auto bridge = [&api](const httplib::Request& req, httplib::Response& res) {
        ApiRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query[k] = v;
        r.body = req.body;
        r.authorization = req.get_header_value("Authorization");
        auto out = api.handle(r);
        res.status = out.status;
        res.set_content(out.body, "application/json");
    };
    http.Get(R"(/.*)", bridge);
    http.Post(R"(/.*)", bridge);
}

}  // namespace

void ApiService::serve(const std::string& host, int port) {
    if (!server_) {
        server_ = std::make_unique<Server>();
        install_routes(server_->http, *this);
    }
    if (!server_->http.listen(host, port)) {
        throw Error(ErrorCode::StorageError, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

int ApiService::start_background(const std::string& host) {
    server_ = std::make_unique<Server>();
    install_routes(server_->http, *this);
    const int port = server_->http.bind_to_any_port(host);
    if (port <= 0) throw Error(ErrorCode::StorageError, "cannot bind " + host);
    thread_ = std::thread([this] { server_->http.listen_after_bind(); });
    server_->http.wait_until_ready();
    return port;
}

void ApiService::stop() {
    if (server_) server_->http.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace flywheel
