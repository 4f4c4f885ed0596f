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

#include "flywheel/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "flywheel/error.hpp"
#include "flywheel/random.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(CompletionTask t) noexcept {
    switch (t) {
        case CompletionTask::router: return "router";
        case CompletionTask::rephrasal: return "rephrasal";
        case CompletionTask::variations: return "variations";
        case CompletionTask::answer: return "answer";
        case CompletionTask::judge: return "judge";
        case CompletionTask::synthesis: return "synthesis";
        case CompletionTask::regression_judge: return "regression_judge";
    }
    return "";
}

std::optional<CompletionTask> parse_task(std::string_view s) {
    for (auto t : {CompletionTask::router, CompletionTask::rephrasal, CompletionTask::variations,
                   CompletionTask::answer, CompletionTask::judge, CompletionTask::synthesis,
                   CompletionTask::regression_judge}) {
        if (s == to_string(t)) return t;
    }
    return std::nullopt;
}

ScriptEntry& BackendScript::add(CompletionTask task, const std::string& key, ScriptEntry entry) {
    auto& slot = tasks[task].entries[text::normalize_key(key)];
    slot = std::move(entry);
    return slot;
}

void to_json(json& j, const BackendScript& s) {
    json tasks = json::object();
    for (const auto& [task, ts] : s.tasks) {
        json t = json::object();
        t["latency_ms"] = ts.latency_ms;
        if (ts.accuracy_dial) t["accuracy_dial"] = *ts.accuracy_dial;
        if (ts.fallback) {
            json fb = {{"text", ts.fallback->text_template}};
            if (ts.fallback->error) fb["error"] = *ts.fallback->error;
            t["fallback"] = fb;
        }
        json entries = json::array();
        for (const auto& [key, e] : ts.entries) {
            json je = {{"key", key}, {"text", e.text}};
            if (e.latency_ms) je["latency_ms"] = *e.latency_ms;
            if (e.error) je["error"] = *e.error;
            if (e.wrong) je["wrong"] = *e.wrong;
            entries.push_back(std::move(je));
        }
        t["entries"] = std::move(entries);
        tasks[std::string(to_string(task))] = std::move(t);
    }
    j = json{{"id", s.id}, {"seed", s.seed}, {"tasks", tasks}};
}

void from_json(const json& j, BackendScript& s) {
    s.id = j.at("id").get<std::string>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.tasks.clear();
    const json tasks = j.value("tasks", json::object());
    for (const auto& [name, t] : tasks.items()) {
        auto task = parse_task(name);
        if (!task) throw Error(ErrorCode::SchemaError, "unknown task in script: " + name);
        TaskScript ts;
        ts.latency_ms = t.value("latency_ms", 0.0);
        if (t.contains("accuracy_dial")) {
            double dial = t["accuracy_dial"].get<double>();
            if (dial < 0.0 || dial > 1.0) {
                throw Error(ErrorCode::SchemaError, "accuracy_dial outside [0,1] for " + name);
            }
            ts.accuracy_dial = dial;
        }
        if (t.contains("fallback")) {
            FallbackRule fb;
            fb.text_template = t["fallback"].value("text", "");
            if (t["fallback"].contains("error")) fb.error = t["fallback"]["error"].get<std::string>();
            ts.fallback = fb;
        }
        const json entries = t.value("entries", json::array());
        for (const auto& e : entries) {
            ScriptEntry entry;
            entry.text = e.value("text", "");
            if (e.contains("latency_ms")) entry.latency_ms = e["latency_ms"].get<double>();
            if (e.contains("error")) entry.error = e["error"].get<std::string>();
            if (e.contains("wrong")) entry.wrong = e["wrong"].get<std::string>();
            ts.entries[text::normalize_key(e.at("key").get<std::string>())] = std::move(entry);
        }
        s.tasks[*task] = std::move(ts);
    }
}

BackendScript load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read script " + path);
    try {
        return json::parse(in).get<BackendScript>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, "bad script " + path + ": " + e.what());
    }
}

void save_script(const BackendScript& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::StorageError, "cannot write script " + path);
    out << json(s).dump(1) << '\n';
}

// ---- scripted ------------------------------------------------------------

ScriptedBackend::ScriptedBackend(BackendScript script, bool realtime)
    : script_(std::move(script)), realtime_(realtime) {
    for (const auto& [task, ts] : script_.tasks) {
        std::vector<std::string> keys;
        keys.reserve(ts.entries.size());
        for (const auto& [key, _] : ts.entries) keys.push_back(key);  // map order = sorted
        if (ts.accuracy_dial) {
            Rng rng(script_.seed ^ stable_hash(to_string(task)));
            rng.shuffle(keys);
            auto n_correct = static_cast<std::size_t>(
                std::floor(static_cast<double>(keys.size()) * *ts.accuracy_dial + 1e-9));
            keys.resize(std::min(n_correct, keys.size()));
            std::sort(keys.begin(), keys.end());
        }
        correct_sorted_[task] = std::move(keys);
    }
}

const std::vector<std::string>& ScriptedBackend::correct_keys(CompletionTask task) const {
    static const std::vector<std::string> empty;
    auto it = correct_sorted_.find(task);
    return it == correct_sorted_.end() ? empty : it->second;
}

namespace {
std::string render_template(const std::string& tmpl, const std::string& key,
                            const std::string& prompt) {
    std::string out;
    out.reserve(tmpl.size() + key.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        if (tmpl.compare(i, 5, "{key}") == 0) {
            out += key;
            i += 5;
        } else if (tmpl.compare(i, 8, "{prompt}") == 0) {
            out += prompt;
            i += 8;
        } else {
            out.push_back(tmpl[i++]);
        }
    }
    return out;
}
}  // namespace

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) {
    auto it = script_.tasks.find(request.task);
    if (it == script_.tasks.end()) {
        throw Error(ErrorCode::ScriptedError, "backend '" + script_.id + "' has no script for task " +
                                                  std::string(to_string(request.task)));
    }
    const TaskScript& ts = it->second;
    const std::string raw_key = request.key.empty() ? request.prompt : request.key;
    const std::string key = text::normalize_key(raw_key);

    CompletionResult result;
    result.backend_id = script_.id;
    result.simulated = true;
    result.latency_ms = ts.latency_ms;

    auto entry = ts.entries.find(key);
    if (entry != ts.entries.end()) {
        const ScriptEntry& e = entry->second;
        if (e.error) throw Error(ErrorCode::ScriptedError, *e.error);
        if (e.latency_ms) result.latency_ms = *e.latency_ms;
        bool correct = true;
        if (ts.accuracy_dial) {
            const auto& keys = correct_sorted_.at(request.task);
            correct = std::binary_search(keys.begin(), keys.end(), key);
        }
        if (correct) {
            result.text = e.text;
        } else if (e.wrong) {
            result.text = *e.wrong;
        } else if (ts.fallback && !ts.fallback->error) {
            result.text = render_template(ts.fallback->text_template, raw_key, request.prompt);
        }
    } else {
        if (!ts.fallback) {
            throw Error(ErrorCode::ScriptedError, "backend '" + script_.id + "' has no entry for " +
                                                      std::string(to_string(request.task)) +
                                                      " key '" + key + "'");
        }
        if (ts.fallback->error) throw Error(ErrorCode::ScriptedError, *ts.fallback->error);
        result.text = render_template(ts.fallback->text_template, raw_key, request.prompt);
    }
    if (realtime_ && result.latency_ms > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(result.latency_ms));
    }
    return result;
}

// ---- remote --------------------------------------------------------------

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig c;
    if (const char* v = std::getenv("FLYWHEEL_REMOTE_URL")) c.base_url = v;
    if (const char* v = std::getenv("FLYWHEEL_REMOTE_TOKEN")) c.bearer_token = v;
    if (const char* v = std::getenv("FLYWHEEL_REMOTE_MODEL")) c.model = v;
    return c;
}

RemoteBackend::RemoteBackend(std::string id, RemoteConfig config)
    : id_(std::move(id)), config_(std::move(config)) {
    if (config_.base_url.empty()) {
        throw Error(ErrorCode::InvalidArgument, "remote backend '" + id_ + "' has no base url");
    }
}

CompletionResult RemoteBackend::complete(const CompletionRequest& request) {
    json body = {
        {"model", config_.model},
        {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.params.temperature},
        {"max_tokens", request.params.max_tokens},
        {"seed", request.params.seed},
    };
    const std::string payload = body.dump();

    httplib::Client client(config_.base_url);
    auto secs = config_.timeout_ms / 1000;
    auto usecs = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!config_.bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.bearer_token);
    }

    const int attempts = 1 + std::min(config_.retries, 1);
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        auto start = std::chrono::steady_clock::now();
        auto res = client.Post(config_.path, headers, payload, "application/json");
        double elapsed = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            auto reply = json::parse(res->body);
            CompletionResult out;
            out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            out.latency_ms = elapsed;
            out.backend_id = id_;
            out.simulated = false;
            return out;
        } catch (const json::exception& e) {
            last_error = std::string("malformed completion response: ") + e.what();
        }
    }
    throw Error(ErrorCode::RemoteError, "backend '" + id_ + "': " + last_error);
}

// ---- gateway -------------------------------------------------------------

std::string Gateway::register_backend(std::shared_ptr<Backend> backend) {
    std::unique_lock lock(mu_);
    const std::string id = backend->id();
    if (id.empty()) throw Error(ErrorCode::InvalidArgument, "backend id is empty");
    if (backends_.count(id)) throw Error(ErrorCode::DuplicateId, "backend '" + id + "' exists");
    backends_.emplace(id, std::move(backend));
    return id;
}

std::string Gateway::register_script(BackendScript script, bool realtime) {
    return register_backend(std::make_shared<ScriptedBackend>(std::move(script), realtime));
}

bool Gateway::has_backend(const std::string& backend_id) const {
    std::shared_lock lock(mu_);
    return backends_.count(backend_id) > 0;
}

std::shared_ptr<Backend> Gateway::backend(const std::string& backend_id) const {
    std::shared_lock lock(mu_);
    auto it = backends_.find(backend_id);
    return it == backends_.end() ? nullptr : it->second;
}

void Gateway::bind(CompletionTask task, const std::string& backend_id) {
    std::unique_lock lock(mu_);
    if (!backends_.count(backend_id)) {
        throw Error(ErrorCode::UnknownBackend, "backend '" + backend_id + "' is not registered");
    }
    bindings_[task] = backend_id;
}

std::optional<std::string> Gateway::bound(CompletionTask task) const {
    std::shared_lock lock(mu_);
    auto it = bindings_.find(task);
    if (it == bindings_.end()) return std::nullopt;
    return it->second;
}

CompletionResult Gateway::complete(const CompletionRequest& request) const {
    auto id = bound(request.task);
    if (!id) {
        throw Error(ErrorCode::NoBackend,
                    "no backend bound for task " + std::string(to_string(request.task)));
    }
    return complete(request, *id);
}

CompletionResult Gateway::complete(const CompletionRequest& request,
                                   const std::string& backend_id) const {
    if (request.prompt.empty()) throw Error(ErrorCode::InvalidArgument, "empty prompt");
    if (request.params.temperature < 0) {
        throw Error(ErrorCode::InvalidArgument, "negative temperature");
    }
    auto b = backend(backend_id);
    if (!b) throw Error(ErrorCode::NoBackend, "backend '" + backend_id + "' is not registered");
    auto result = b->complete(request);
    if (result.latency_ms < 0) result.latency_ms = 0;
    return result;
}

}  // namespace flywheel
