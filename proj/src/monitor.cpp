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

#include "flywheel/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(FeedbackSignal s) noexcept {
    return s == FeedbackSignal::up ? "up" : "down";
}

std::string_view to_string(FeedbackReason r) noexcept {
    switch (r) {
        case FeedbackReason::cited_source_usefulness: return "cited_source_usefulness";
        case FeedbackReason::relevance: return "relevance";
        case FeedbackReason::clarity_completeness: return "clarity_completeness";
        case FeedbackReason::suggestion: return "suggestion";
    }
    return "";
}

std::string_view to_string(Sentiment s) noexcept {
    switch (s) {
        case Sentiment::positive: return "positive";
        case Sentiment::negative: return "negative";
        case Sentiment::none: return "none";
    }
    return "";
}

std::string_view to_string(ImplicitFlag f) noexcept {
    return f == ImplicitFlag::requery ? "requery" : "abandonment";
}

std::optional<FeedbackSignal> parse_signal(std::string_view s) {
    if (s == "up") return FeedbackSignal::up;
    if (s == "down") return FeedbackSignal::down;
    return std::nullopt;
}

std::optional<FeedbackReason> parse_reason(std::string_view s) {
    for (auto r : {FeedbackReason::cited_source_usefulness, FeedbackReason::relevance,
                   FeedbackReason::clarity_completeness, FeedbackReason::suggestion}) {
        if (s == to_string(r)) return r;
    }
    return std::nullopt;
}

void to_json(json& j, const FeedbackRecord& f) {
    json reasons = json::array();
    for (auto r : f.reasons) reasons.push_back(std::string(to_string(r)));
    j = json{{"feedback_id", f.feedback_id},
             {"trace_id", f.trace_id},
             {"signal", std::string(to_string(f.signal))},
             {"reasons", reasons},
             {"free_text", f.free_text},
             {"timestamp", format_instant(f.timestamp)}};
}

void from_json(const json& j, FeedbackRecord& f) {
    f.feedback_id = j.at("feedback_id").get<std::string>();
    f.trace_id = j.at("trace_id").get<std::string>();
    auto signal = parse_signal(j.at("signal").get<std::string>());
    if (!signal) throw Error(ErrorCode::SchemaError, "bad feedback signal");
    f.signal = *signal;
    f.reasons.clear();
    for (const auto& r : j.value("reasons", json::array())) {
        auto reason = parse_reason(r.get<std::string>());
        if (!reason) throw Error(ErrorCode::InvalidReason, "unknown reason " + r.dump());
        f.reasons.insert(*reason);
    }
    f.free_text = j.value("free_text", "");
    f.timestamp = parse_instant(j.at("timestamp").get<std::string>());
}

void to_json(json& j, const UnifiedRecord& r) {
    json flags = json::array();
    for (auto f : r.implicit_flags) flags.push_back(std::string(to_string(f)));
    j = json{{"trace", r.trace},
             {"feedback", r.feedback ? json(*r.feedback) : json(nullptr)},
             {"sentiment", std::string(to_string(r.sentiment))},
             {"implicit_flags", flags}};
}

void from_json(const json& j, UnifiedRecord& r) {
    r.trace = j.at("trace").get<ResponseTrace>();
    r.feedback.reset();
    if (j.contains("feedback") && !j["feedback"].is_null()) r.feedback = j["feedback"].get<FeedbackRecord>();
    const auto s = j.at("sentiment").get<std::string>();
    r.sentiment = s == "positive" ? Sentiment::positive
                  : s == "negative" ? Sentiment::negative
                                    : Sentiment::none;
    r.implicit_flags.clear();
    for (const auto& f : j.value("implicit_flags", json::array())) {
        r.implicit_flags.insert(f.get<std::string>() == "requery" ? ImplicitFlag::requery
                                                                   : ImplicitFlag::abandonment);
    }
}

void validate_trace(const ResponseTrace& t, double overhead_bound_ms) {
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::ValidationError, "trace '" + t.trace_id + "': " + what);
    };
    if (t.trace_id.empty()) fail("missing trace_id");
    if (t.session_id.empty()) fail("missing session_id");
    if (t.turn_index < 0) fail("negative turn_index");
    if (text::is_blank(t.query)) fail("blank query");
    double sum = 0.0;
    double max_stage = 0.0;
    for (const auto& [stage, ms] : t.stage_latencies) {
        if (!(ms >= 0.0)) fail("negative latency for stage " + std::string(to_string(stage)));
        sum += ms;
        max_stage = std::max(max_stage, ms);
    }
    if (t.total_latency < max_stage) fail("total latency below a stage latency");
    if (t.total_latency + 1e-9 < sum) fail("total latency below the sum of stage latencies");
    if (t.total_latency - sum > overhead_bound_ms + 1e-9) fail("total latency exceeds overhead bound");
    for (const auto& c : t.citations) {
        bool found = std::any_of(t.ir_results.begin(), t.ir_results.end(),
                                 [&](const ScoredDoc& d) { return d.url == c; });
        if (!found) fail("citation '" + c + "' not among retrieved documents");
    }
}

std::vector<std::set<ImplicitFlag>> detect_implicit_signals(
    const std::vector<ResponseTrace>& session, const std::set<std::string>& traces_with_feedback,
    Instant reference_time, const MonitorConfig& config) {
    std::vector<std::set<ImplicitFlag>> flags(session.size());
    for (std::size_t i = 0; i < session.size(); ++i) {
        const auto& cur = session[i];
        const bool has_next = i + 1 < session.size();
        if (has_next) {
            const auto& next = session[i + 1];
            const Instant gap = next.timestamp - cur.timestamp;
            if (gap <= config.requery_window &&
                text::jaccard(text::token_set(cur.query), text::token_set(next.query)) >=
                    config.requery_jaccard - 1e-12) {
                flags[i].insert(ImplicitFlag::requery);
            }
        }
        if (traces_with_feedback.count(cur.trace_id)) continue;
        const Instant until = has_next ? session[i + 1].timestamp : reference_time;
        if (until - cur.timestamp >= config.session_timeout) flags[i].insert(ImplicitFlag::abandonment);
    }
    return flags;
}

TelemetryMonitor::TelemetryMonitor(std::shared_ptr<EventStore> store, std::shared_ptr<Clock> clock,
                                   std::shared_ptr<IdGenerator> ids, MonitorConfig config,
                                   PiiScrubber scrubber)
    : store_(std::move(store)),
      clock_(std::move(clock)),
      ids_(std::move(ids)),
      config_(config),
      scrubber_(std::move(scrubber)) {
    for (const auto& ev : store_->scan(EventKind::trace, TimeWindow::all())) {
        auto j = json::parse(ev.payload);
        trace_events_[j.at("trace_id").get<std::string>()] = ev.event_id;
    }
}

std::string TelemetryMonitor::record_response(const ResponseTrace& trace) {
    validate_trace(trace);
    std::lock_guard lock(known_mu_);
    if (trace_events_.count(trace.trace_id)) {
        throw Error(ErrorCode::ValidationError, "trace '" + trace.trace_id + "' already recorded");
    }
    auto id = store_->append(EventKind::trace, json(trace).dump());
    trace_events_[trace.trace_id] = id;
    return id;
}

bool TelemetryMonitor::knows_trace(const std::string& trace_id) const {
    std::lock_guard lock(known_mu_);
    return trace_events_.count(trace_id) > 0;
}

std::optional<ResponseTrace> TelemetryMonitor::find_trace(const std::string& trace_id) const {
    std::string event_id;
    {
        std::lock_guard lock(known_mu_);
        auto it = trace_events_.find(trace_id);
        if (it == trace_events_.end()) return std::nullopt;
        event_id = it->second;
    }
    auto ev = store_->get(event_id);
    if (!ev) return std::nullopt;
    return json::parse(ev->payload).get<ResponseTrace>();
}

std::string TelemetryMonitor::record_feedback(FeedbackRecord feedback) {
    if (!knows_trace(feedback.trace_id)) {
        throw Error(ErrorCode::UnknownTrace, "unknown trace '" + feedback.trace_id + "'");
    }
    if (feedback.feedback_id.empty()) feedback.feedback_id = ids_->next("fb");
    if (feedback.timestamp == 0) feedback.timestamp = clock_->now();
    feedback.free_text = scrubber_.scrub(feedback.free_text);
    store_->append(EventKind::feedback, json(feedback).dump());
    return feedback.feedback_id;
}

std::vector<UnifiedRecord> TelemetryMonitor::run_etl(const TimeWindow& window) {
    std::unique_lock lock(etl_mu_, std::try_to_lock);
    if (!lock.owns_lock()) throw Error(ErrorCode::LockHeld, "an ETL run is already in progress");

    const auto trace_events = store_->scan(EventKind::trace, window);
    const auto feedback_events = store_->scan(EventKind::feedback, TimeWindow::all());

    std::vector<ResponseTrace> traces;
    traces.reserve(trace_events.size());
    std::set<std::string> in_window;
    Instant latest = std::numeric_limits<Instant>::min();
    for (const auto& ev : trace_events) {
        traces.push_back(json::parse(ev.payload).get<ResponseTrace>());
        in_window.insert(traces.back().trace_id);
        latest = std::max(latest, ev.ingested_at);
    }

    // Latest feedback per trace wins; ties go to the later ingestion.
    std::map<std::string, FeedbackRecord> feedback;
    for (const auto& ev : feedback_events) {
        auto fb = json::parse(ev.payload).get<FeedbackRecord>();
        latest = std::max(latest, ev.ingested_at);
        if (!in_window.count(fb.trace_id)) continue;
        auto it = feedback.find(fb.trace_id);
        if (it == feedback.end() || fb.timestamp >= it->second.timestamp) feedback[fb.trace_id] = fb;
    }
    std::set<std::string> with_feedback;
    for (const auto& [id, _] : feedback) with_feedback.insert(id);

    // Reference time for abandonment: the window end when bounded, otherwise
    // the newest event seen.
    const Instant reference =
        window.to != TimeWindow::all().to ? window.to : latest;

    std::map<std::string, std::vector<std::size_t>> sessions;
    for (std::size_t i = 0; i < traces.size(); ++i) sessions[traces[i].session_id].push_back(i);
    std::vector<std::set<ImplicitFlag>> flags(traces.size());
    for (auto& [_, idx] : sessions) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return traces[a].turn_index < traces[b].turn_index;
        });
        std::vector<ResponseTrace> ordered;
        for (auto i : idx) ordered.push_back(traces[i]);
        auto session_flags = detect_implicit_signals(ordered, with_feedback, reference, config_);
        for (std::size_t k = 0; k < idx.size(); ++k) flags[idx[k]] = session_flags[k];
    }

    std::vector<UnifiedRecord> out;
    out.reserve(traces.size());
    json batch = json::array();
    for (std::size_t i = 0; i < traces.size(); ++i) {
        UnifiedRecord r;
        r.trace = std::move(traces[i]);
        auto it = feedback.find(r.trace.trace_id);
        if (it != feedback.end()) {
            r.feedback = it->second;
            r.sentiment = it->second.signal == FeedbackSignal::up ? Sentiment::positive
                                                                  : Sentiment::negative;
        }
        r.implicit_flags = flags[i];
        json flag_names = json::array();
        for (auto f : r.implicit_flags) flag_names.push_back(std::string(to_string(f)));
        batch.push_back({{"trace_id", r.trace.trace_id},
                         {"feedback_id", r.feedback ? json(r.feedback->feedback_id) : json(nullptr)},
                         {"sentiment", std::string(to_string(r.sentiment))},
                         {"implicit_flags", flag_names}});
        out.push_back(std::move(r));
    }
    json report = {{"type", "etl_batch"},
                   {"window", {{"from", window.from}, {"to", window.to}}},
                   {"records", batch}};
    store_->append(EventKind::report, report.dump());
    return out;
}

}  // namespace flywheel
