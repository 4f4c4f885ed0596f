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
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "flywheel/clock.hpp"

namespace flywheel {

enum class EventKind { trace, feedback, label, dataset, variant, rollout, report };

std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s);

struct EventRecord {
    std::string event_id;
    EventKind kind = EventKind::trace;
    std::string payload;  // opaque serialized record, stored byte-exactly
    Instant ingested_at = 0;

    bool operator==(const EventRecord&) const = default;
};

/// Append-only knowledge base. There is deliberately no update or delete.
class EventStore {
public:
    virtual ~EventStore() = default;

    virtual std::string append(EventKind kind, const std::string& payload) = 0;
    virtual std::optional<EventRecord> get(const std::string& event_id) const = 0;
    /// Records of `kind` ingested inside `window`, in ingestion order. The
    /// result is a snapshot: appends racing with the scan are not included.
    virtual std::vector<EventRecord> scan(EventKind kind, const TimeWindow& window) const = 0;
    virtual std::size_t size() const = 0;
    /// Writes every record, one JSON object per line, in ingestion order.
    virtual std::size_t export_lines(const std::string& path) const = 0;
};

/// Log-structured store: a single append-only segment file (events.log)
/// plus an in-memory index rebuilt on open. Without a directory it keeps
/// everything in memory.
///
/// Segment line format:
///   {"at":"<ISO-8601>","id":"evt-<12 digits>","kind":"<kind>","payload":"<escaped>"}
/// A torn final line left by a crash is discarded on open.
class LogEventStore final : public EventStore {
public:
    struct Options {
        bool fsync = true;
    };

    explicit LogEventStore(std::shared_ptr<Clock> clock = nullptr);
    LogEventStore(const std::filesystem::path& dir, std::shared_ptr<Clock> clock = nullptr);
    LogEventStore(const std::filesystem::path& dir, Options options,
                  std::shared_ptr<Clock> clock = nullptr);
    ~LogEventStore() override;

    LogEventStore(const LogEventStore&) = delete;
    LogEventStore& operator=(const LogEventStore&) = delete;

    std::string append(EventKind kind, const std::string& payload) override;
    std::optional<EventRecord> get(const std::string& event_id) const override;
    std::vector<EventRecord> scan(EventKind kind, const TimeWindow& window) const override;
    std::size_t size() const override;
    std::size_t export_lines(const std::string& path) const override;

    static std::string encode_line(const EventRecord& r);
    static std::optional<EventRecord> decode_line(const std::string& line);

private:
    void open_segment();

    std::shared_ptr<Clock> clock_;
    std::optional<std::filesystem::path> dir_;
    Options options_;
    std::FILE* segment_ = nullptr;

    mutable std::shared_mutex mu_;
    std::vector<EventRecord> records_;
    std::map<EventKind, std::vector<std::size_t>> by_kind_;
    std::map<std::string, std::size_t> by_id_;
    std::uint64_t next_seq_ = 1;
};

}  // namespace flywheel
