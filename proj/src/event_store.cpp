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

#include "flywheel/event_store.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>

#include <unistd.h>

#include <json.hpp>

#include "flywheel/error.hpp"

namespace flywheel {

using json = nlohmann::json;

std::string_view to_string(EventKind k) noexcept {
    switch (k) {
        case EventKind::trace: return "trace";
        case EventKind::feedback: return "feedback";
        case EventKind::label: return "label";
        case EventKind::dataset: return "dataset";
        case EventKind::variant: return "variant";
        case EventKind::rollout: return "rollout";
        case EventKind::report: return "report";
    }
    return "";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
    for (auto k : {EventKind::trace, EventKind::feedback, EventKind::label, EventKind::dataset,
                   EventKind::variant, EventKind::rollout, EventKind::report}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

namespace {

constexpr const char* kSegmentName = "events.log";

std::string format_event_id(std::uint64_t seq) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "evt-%012llu", static_cast<unsigned long long>(seq));
    return buf;
}

}  // namespace

std::string LogEventStore::encode_line(const EventRecord& r) {
    json j = {{"at", format_instant(r.ingested_at)},
              {"id", r.event_id},
              {"kind", std::string(to_string(r.kind))},
              {"payload", r.payload}};
    return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

std::optional<EventRecord> LogEventStore::decode_line(const std::string& line) {
    try {
        auto j = json::parse(line);
        auto kind = parse_event_kind(j.at("kind").get<std::string>());
        if (!kind) return std::nullopt;
        EventRecord r;
        r.event_id = j.at("id").get<std::string>();
        r.kind = *kind;
        r.payload = j.at("payload").get<std::string>();
        r.ingested_at = parse_instant(j.at("at").get<std::string>());
        return r;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

LogEventStore::LogEventStore(std::shared_ptr<Clock> clock)
    : clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()) {}

LogEventStore::LogEventStore(const std::filesystem::path& dir, std::shared_ptr<Clock> clock)
    : LogEventStore(dir, Options{}, std::move(clock)) {}

LogEventStore::LogEventStore(const std::filesystem::path& dir, Options options,
                             std::shared_ptr<Clock> clock)
    : clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      dir_(dir),
      options_(options) {
    open_segment();
}

LogEventStore::~LogEventStore() {
    if (segment_) std::fclose(segment_);
}

void LogEventStore::open_segment() {
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw Error(ErrorCode::StorageError, "cannot create " + dir_->string() + ": " + ec.message());
    const auto path = *dir_ / kSegmentName;

    // Recover: index every complete line, then cut off a torn tail.
    std::uintmax_t good_bytes = 0;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::string line;
        std::uintmax_t offset = 0;
        while (std::getline(in, line)) {
            const bool complete = !in.eof();
            offset += line.size() + (complete ? 1 : 0);
            if (!complete) break;
            auto rec = decode_line(line);
            if (!rec) break;
            by_kind_[rec->kind].push_back(records_.size());
            by_id_[rec->event_id] = records_.size();
            records_.push_back(std::move(*rec));
            good_bytes = offset;
        }
        if (std::filesystem::file_size(path) != good_bytes) {
            std::filesystem::resize_file(path, good_bytes, ec);
            if (ec) throw Error(ErrorCode::StorageError, "cannot truncate torn log: " + ec.message());
        }
    }
    next_seq_ = records_.size() + 1;
    segment_ = std::fopen(path.c_str(), "ab");
    if (!segment_) {
        throw Error(ErrorCode::StorageError,
                    "cannot open " + path.string() + ": " + std::strerror(errno));
    }
}

std::string LogEventStore::append(EventKind kind, const std::string& payload) {
    std::unique_lock lock(mu_);
    EventRecord r;
    r.event_id = format_event_id(next_seq_);
    r.kind = kind;
    r.payload = payload;
    r.ingested_at = clock_->now();
    if (!records_.empty() && r.ingested_at < records_.back().ingested_at) {
        r.ingested_at = records_.back().ingested_at;  // keep ingestion time monotone
    }
    if (segment_) {
        std::string line;
        try {
            line = encode_line(r);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::StorageError, std::string("payload not serializable: ") + e.what());
        }
        line.push_back('\n');
        if (std::fwrite(line.data(), 1, line.size(), segment_) != line.size() ||
            std::fflush(segment_) != 0) {
            throw Error(ErrorCode::StorageError, std::string("write failed: ") + std::strerror(errno));
        }
        if (options_.fsync && ::fsync(fileno(segment_)) != 0) {
            throw Error(ErrorCode::StorageError, std::string("fsync failed: ") + std::strerror(errno));
        }
    }
    ++next_seq_;
    by_kind_[kind].push_back(records_.size());
    by_id_[r.event_id] = records_.size();
    records_.push_back(r);
    return r.event_id;
}

std::optional<EventRecord> LogEventStore::get(const std::string& event_id) const {
    std::shared_lock lock(mu_);
    auto it = by_id_.find(event_id);
    if (it == by_id_.end()) return std::nullopt;
    return records_[it->second];
}

std::vector<EventRecord> LogEventStore::scan(EventKind kind, const TimeWindow& window) const {
    std::shared_lock lock(mu_);
    std::vector<EventRecord> out;
    auto it = by_kind_.find(kind);
    if (it == by_kind_.end()) return out;
    for (std::size_t idx : it->second) {
        const auto& r = records_[idx];
        if (window.contains(r.ingested_at)) out.push_back(r);
    }
    return out;
}

std::size_t LogEventStore::size() const {
    std::shared_lock lock(mu_);
    return records_.size();
}

std::size_t LogEventStore::export_lines(const std::string& path) const {
    std::shared_lock lock(mu_);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::StorageError, "cannot write " + path);
    for (const auto& r : records_) out << encode_line(r) << '\n';
    if (!out) throw Error(ErrorCode::StorageError, "write failed for " + path);
    return records_.size();
}

}  // namespace flywheel
