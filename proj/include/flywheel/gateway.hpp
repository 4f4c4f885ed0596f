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

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace flywheel {

using json = nlohmann::json;

enum class CompletionTask {
    router,
    rephrasal,
    variations,
    answer,
    judge,
    synthesis,
    regression_judge,
};

std::string_view to_string(CompletionTask t) noexcept;
std::optional<CompletionTask> parse_task(std::string_view s);

struct CompletionParams {
    double temperature = 0.0;
    int max_tokens = 512;
    std::uint64_t seed = 0;
};

struct CompletionRequest {
    CompletionTask task = CompletionTask::answer;
    std::string prompt;
    /// Lookup key for scripted backends (normally the salient input, e.g. the
    /// user query). Empty means "use the prompt". Remote backends ignore it.
    std::string key;
    CompletionParams params;
};

struct CompletionResult {
    std::string text;
    double latency_ms = 0.0;
    std::string backend_id;
    bool simulated = false;
};

/// One scripted reply. `wrong` is served instead of `text` when the task's
/// accuracy dial leaves this item outside the correct subset.
struct ScriptEntry {
    std::string text;
    std::optional<double> latency_ms;
    std::optional<std::string> error;
    std::optional<std::string> wrong;
};

/// Reply for prompts without an entry. "{key}" and "{prompt}" are substituted.
struct FallbackRule {
    std::string text_template = "{key}";
    std::optional<std::string> error;
};

struct TaskScript {
    std::map<std::string, ScriptEntry> entries;  // normalized key -> entry
    std::optional<double> accuracy_dial;
    double latency_ms = 0.0;
    std::optional<FallbackRule> fallback;
};

struct BackendScript {
    std::string id;
    std::uint64_t seed = 0;
    std::map<CompletionTask, TaskScript> tasks;

    /// Adds an entry under the normalized form of `key`.
    ScriptEntry& add(CompletionTask task, const std::string& key, ScriptEntry entry);
};

void to_json(json& j, const BackendScript& s);
void from_json(const json& j, BackendScript& s);
BackendScript load_script(const std::string& path);
void save_script(const BackendScript& s, const std::string& path);

class Backend {
public:
    virtual ~Backend() = default;
    virtual const std::string& id() const = 0;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Deterministic table-driven backend.
///
/// With an accuracy dial d on a task holding n entries, exactly floor(n*d)
/// entries (chosen by a seeded shuffle of the sorted keys) answer with their
/// scripted text; the rest answer with `wrong` (or the fallback). Latencies
/// are recorded, not slept, unless `realtime` is set.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(BackendScript script, bool realtime = false);

    const std::string& id() const override { return script_.id; }
    CompletionResult complete(const CompletionRequest& request) override;

    /// Keys that the dial marks correct for `task` (all keys when no dial).
    const std::vector<std::string>& correct_keys(CompletionTask task) const;

private:
    BackendScript script_;
    bool realtime_;
    std::map<CompletionTask, std::vector<std::string>> correct_sorted_;
};

struct RemoteConfig {
    std::string base_url;      // e.g. http://localhost:8000
    std::string path = "/v1/chat/completions";
    std::string bearer_token;
    std::string model;
    int timeout_ms = 30'000;
    int retries = 0;           // at most one extra attempt is honored

    /// Reads FLYWHEEL_REMOTE_URL, FLYWHEEL_REMOTE_TOKEN, FLYWHEEL_REMOTE_MODEL.
    static RemoteConfig from_env();
};

/// OpenAI-style chat-completion client. The prompt is sent verbatim as the
/// single user message; latency is wall clock.
class RemoteBackend final : public Backend {
public:
    RemoteBackend(std::string id, RemoteConfig config);

    const std::string& id() const override { return id_; }
    CompletionResult complete(const CompletionRequest& request) override;

private:
    std::string id_;
    RemoteConfig config_;
};

/// Registry of backends plus the default task -> backend binding.
class Gateway {
public:
    std::string register_backend(std::shared_ptr<Backend> backend);
    std::string register_script(BackendScript script, bool realtime = false);
    bool has_backend(const std::string& backend_id) const;
    std::shared_ptr<Backend> backend(const std::string& backend_id) const;

    void bind(CompletionTask task, const std::string& backend_id);
    std::optional<std::string> bound(CompletionTask task) const;

    /// Uses the backend bound to request.task.
    CompletionResult complete(const CompletionRequest& request) const;
    /// Uses an explicit backend, e.g. a variant under evaluation.
    CompletionResult complete(const CompletionRequest& request,
                              const std::string& backend_id) const;

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, std::shared_ptr<Backend>> backends_;
    std::map<CompletionTask, std::string> bindings_;
};

}  // namespace flywheel
