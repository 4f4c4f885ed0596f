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

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "flywheel/clock.hpp"
#include "flywheel/pii.hpp"
#include "flywheel/event_store.hpp"
#include "flywheel/types.hpp"

namespace flywheel {

enum class FeedbackSignal { up, down };
enum class FeedbackReason { cited_source_usefulness, relevance, clarity_completeness, suggestion };
enum class Sentiment { positive, negative, none };
enum class ImplicitFlag { requery, abandonment };

std::string_view to_string(FeedbackSignal s) noexcept;
std::string_view to_string(FeedbackReason r) noexcept;
std::string_view to_string(Sentiment s) noexcept;
std::string_view to_string(ImplicitFlag f) noexcept;
std::optional<FeedbackSignal> parse_signal(std::string_view s);
std::optional<FeedbackReason> parse_reason(std::string_view s);

struct FeedbackRecord {
    std::string feedback_id;
    std::string trace_id;
    FeedbackSignal signal = FeedbackSignal::up;
    std::set<FeedbackReason> reasons;
    std::string free_text;
    Instant timestamp = 0;

    bool operator==(const FeedbackRecord&) const = default;
};

struct UnifiedRecord {
    ResponseTrace trace;
    std::optional<FeedbackRecord> feedback;
    Sentiment sentiment = Sentiment::none;
    std::set<ImplicitFlag> implicit_flags;

    bool operator==(const UnifiedRecord&) const = default;
};

void to_json(json& j, const FeedbackRecord& f);
void from_json(const json& j, FeedbackRecord& f);
void to_json(json& j, const UnifiedRecord& r);
void from_json(const json& j, UnifiedRecord& r);

struct MonitorConfig {
    double requery_jaccard = 0.6;
    Instant requery_window = 5 * kMinute;
    Instant session_timeout = 30 * kMinute;
    Instant etl_interval = 4 * kHour;
};

/// Throws ValidationError describing the first broken trace invariant.
void validate_trace(const ResponseTrace& trace, double overhead_bound_ms = 50.0);

/// Flags for one session's traces (ordered by turn_index).
///
/// requery: the next query in the session has token-Jaccard >= threshold and
/// arrives within the requery window. abandonment: the trace got no feedback
/// and nothing followed it within the session timeout, measured against the
/// successor or, for the last trace, against `reference_time`.
std::vector<std::set<ImplicitFlag>> detect_implicit_signals(
    const std::vector<ResponseTrace>& session, const std::set<std::string>& traces_with_feedback,
    Instant reference_time, const MonitorConfig& config = {});

/// MAPE Monitor: records traces and feedback, joins them into unified records.
class TelemetryMonitor {
public:
    TelemetryMonitor(std::shared_ptr<EventStore> store, std::shared_ptr<Clock> clock,
                     std::shared_ptr<IdGenerator> ids, MonitorConfig config = {},
                     PiiScrubber scrubber = PiiScrubber{});

    std::string record_response(const ResponseTrace& trace);
    std::string record_feedback(FeedbackRecord feedback);
    bool knows_trace(const std::string& trace_id) const;
    std::optional<ResponseTrace> find_trace(const std::string& trace_id) const;

    /// Single-flight. Throws LockHeld if another ETL run is in progress.
    /// Output order is trace ingestion order; the batch is also persisted as a
    /// report event.
    std::vector<UnifiedRecord> run_etl(const TimeWindow& window);

    const MonitorConfig& config() const noexcept { return config_; }

private:
    std::shared_ptr<EventStore> store_;
    std::shared_ptr<Clock> clock_;
    std::shared_ptr<IdGenerator> ids_;
    MonitorConfig config_;
    PiiScrubber scrubber_;

    mutable std::mutex known_mu_;
    std::map<std::string, std::string> trace_events_;  // trace_id -> event_id
    std::mutex etl_mu_;
};

}  // namespace flywheel
