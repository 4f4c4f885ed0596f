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
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <unistd.h>

#include "flywheel/agent.hpp"
#include "flywheel/clock.hpp"
#include "flywheel/event_store.hpp"
#include "flywheel/gateway.hpp"
#include "flywheel/monitor.hpp"
#include "flywheel/types.hpp"

namespace flywheel::fixtures {

inline std::string fixture(const std::string& name) { return std::string(FLYWHEEL_FIXTURES) + "/" + name; }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("flywheel-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline constexpr Instant kT0 = 1'736'154'000'000;  // 2025-01-06T09:00:00Z

/// A trace that passes validate_trace.
inline ResponseTrace make_trace(const std::string& trace_id, const std::string& session_id, std::int64_t turn,
                                const std::string& query, ExpertId expert = ExpertId::it_benefits_help,
                                Instant ts = kT0) {
    ResponseTrace t;
    t.trace_id = trace_id;
    t.session_id = session_id;
    t.turn_index = turn;
    t.query = query;
    t.rephrased_query = query;
    t.query_variations = {query};
    t.expert_selected = expert;
    t.route_confidence = 0.9;
    t.category = std::string(to_string(expert));
    t.ir_results = {{"doc-1", 1.0, "https://intranet.example.com/doc-1"}};
    t.response_text = "An answer.";
    t.citations = {"https://intranet.example.com/doc-1"};
    t.stage_latencies = {{StageName::router, 100.0},
                         {StageName::rephrasal, 200.0},
                         {StageName::retrieval, 4.0},
                         {StageName::answer_generation, 500.0}};
    t.total_latency = 806.0;
    t.timestamp = ts;
    return t;
}

inline FeedbackRecord make_feedback(const std::string& trace_id, FeedbackSignal signal, Instant ts = kT0 + 1000) {
    FeedbackRecord f;
    f.trace_id = trace_id;
    f.signal = signal;
    if (signal == FeedbackSignal::down) f.reasons = {FeedbackReason::relevance};
    f.timestamp = ts;
    return f;
}

inline ScriptEntry reply(std::string text, std::optional<double> latency = std::nullopt) {
    ScriptEntry e;
    e.text = std::move(text);
    e.latency_ms = latency;
    return e;
}

inline TaskScript task(double latency_ms, std::optional<std::string> fallback = std::nullopt) {
    TaskScript t;
    t.latency_ms = latency_ms;
    if (fallback) t.fallback = FallbackRule{*fallback, std::nullopt};
    return t;
}

}  // namespace flywheel::fixtures
