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

#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "flywheel/error.hpp"
#include "flywheel/event_store.hpp"
#include "helpers.hpp"

using namespace flywheel;

namespace {

std::shared_ptr<ManualClock> clock_at(Instant t, Instant step = 0) { return std::make_shared<ManualClock>(t, step); }

}  // namespace

TEST(EventStore, AppendGetAndScanByKind) {
    LogEventStore store(clock_at(1000, 10));
    auto a = store.append(EventKind::trace, "t1");
    auto b = store.append(EventKind::feedback, "f1");
    auto c = store.append(EventKind::trace, "t2");
    EXPECT_EQ(store.size(), 3u);
    EXPECT_NE(a, b);
    EXPECT_EQ(store.get(b)->payload, "f1");
    EXPECT_EQ(store.get(b)->kind, EventKind::feedback);
    EXPECT_FALSE(store.get("evt-missing"));
    auto traces = store.scan(EventKind::trace, TimeWindow::all());
    ASSERT_EQ(traces.size(), 2u);
    EXPECT_EQ(traces[0].event_id, a);
    EXPECT_EQ(traces[1].event_id, c);
    EXPECT_TRUE(store.scan(EventKind::report, TimeWindow::all()).empty());
}

TEST(EventStore, ScanWindowIsHalfOpenOnIngestionTime) {
    LogEventStore store(clock_at(1000, 100));
    for (int i = 0; i < 5; ++i) store.append(EventKind::trace, std::to_string(i));  // at 1000..1400
    auto mid = store.scan(EventKind::trace, {1100, 1300});
    ASSERT_EQ(mid.size(), 2u);
    EXPECT_EQ(mid[0].payload, "1");
    EXPECT_EQ(mid[1].payload, "2");
    EXPECT_EQ(mid[0].ingested_at, 1100);
}

TEST(EventStore, PayloadsAreStoredByteExactly) {
    fixtures::TempDir dir;
    const std::string payload = std::string("line1\nline2\t\"quoted\" \\ ") + "caf\xc3\xa9 " + std::string(1, '\0') + " end";
    std::string id;
    {
        LogEventStore store(dir.path(), clock_at(5));
        id = store.append(EventKind::label, payload);
        EXPECT_EQ(store.get(id)->payload, payload);
    }
    LogEventStore reopened(dir.path(), clock_at(5));
    EXPECT_EQ(reopened.get(id)->payload, payload);
}

TEST(EventStore, ReopenRestoresRecordsAndContinuesIds) {
    fixtures::TempDir dir;
    std::vector<EventRecord> before;
    {
        LogEventStore store(dir.path(), {false}, clock_at(1000, 1));
        for (int i = 0; i < 10; ++i) store.append(i % 2 ? EventKind::trace : EventKind::feedback, "p" + std::to_string(i));
        before = store.scan(EventKind::trace, TimeWindow::all());
    }
    LogEventStore store(dir.path(), clock_at(5000));
    EXPECT_EQ(store.size(), 10u);
    EXPECT_EQ(store.scan(EventKind::trace, TimeWindow::all()), before);
    auto id = store.append(EventKind::trace, "after");
    std::set<std::string> ids;
    for (const auto& r : store.scan(EventKind::trace, TimeWindow::all())) ids.insert(r.event_id);
    for (const auto& r : store.scan(EventKind::feedback, TimeWindow::all())) ids.insert(r.event_id);
    EXPECT_EQ(ids.size(), 11u);
    EXPECT_TRUE(ids.count(id));
}

TEST(EventStore, TornTailIsDiscardedOnOpen) {
    fixtures::TempDir dir;
    {
        LogEventStore store(dir.path(), clock_at(1000));
        store.append(EventKind::trace, "a");
        store.append(EventKind::trace, "b");
    }
    const auto log = dir / "events.log";
    const auto good = std::filesystem::file_size(log);
    std::ofstream(log, std::ios::app) << R"({"at":"2025-01-06T09:00:00.000Z","id":"evt-0000000)";
    {
        LogEventStore store(dir.path(), clock_at(1000));
        EXPECT_EQ(store.size(), 2u);
        EXPECT_EQ(std::filesystem::file_size(log), good);
        store.append(EventKind::trace, "c");
    }
    LogEventStore store(dir.path(), clock_at(1000));
    auto all = store.scan(EventKind::trace, TimeWindow::all());
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[2].payload, "c");
}

TEST(EventStore, IngestionTimeNeverGoesBackwards) {
    auto clock = clock_at(5000);
    LogEventStore store(clock);
    store.append(EventKind::trace, "a");
    clock->set(1000);
    auto id = store.append(EventKind::trace, "b");
    EXPECT_EQ(store.get(id)->ingested_at, 5000);
}

TEST(EventStore, LineCodecRoundTrip) {
    EventRecord r{"evt-000000000042", EventKind::rollout, "{\"x\":1}\n", fixtures::kT0 + 7};
    auto line = LogEventStore::encode_line(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(LogEventStore::decode_line(line), r);
    EXPECT_FALSE(LogEventStore::decode_line("not json"));
    EXPECT_FALSE(LogEventStore::decode_line(R"({"at":"2025-01-06T09:00:00.000Z","id":"e","kind":"weather","payload":""})"));
}

TEST(EventStore, ExportWritesOneLinePerRecord) {
    fixtures::TempDir dir;
    LogEventStore store(clock_at(1000, 1));
    for (int i = 0; i < 7; ++i) store.append(EventKind::report, "r" + std::to_string(i));
    EXPECT_EQ(store.export_lines((dir / "out.jsonl").string()), 7u);
    std::ifstream in(dir / "out.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        auto r = LogEventStore::decode_line(line);
        ASSERT_TRUE(r);
        EXPECT_EQ(r->payload, "r" + std::to_string(n++));
    }
    EXPECT_EQ(n, 7);
    EXPECT_THROW(store.export_lines((dir / "no/such/dir/x").string()), Error);
}

TEST(EventStore, EventKindNames) {
    for (auto k : {EventKind::trace, EventKind::feedback, EventKind::label, EventKind::dataset, EventKind::variant,
                   EventKind::rollout, EventKind::report}) {
        EXPECT_EQ(parse_event_kind(to_string(k)), k);
    }
    EXPECT_FALSE(parse_event_kind("weather"));
}

TEST(EventStoreConcurrency, ParallelAppendsKeepEveryRecord) {
    fixtures::TempDir dir;
    LogEventStore store(dir.path(), {false}, std::make_shared<SystemClock>());
    constexpr int kThreads = 4, kPerThread = 250;
    std::vector<std::thread> threads;
    std::atomic<bool> stop{false};
    std::thread reader([&] {
        std::size_t last = 0;
        while (!stop) {
            auto snap = store.scan(EventKind::trace, TimeWindow::all());
            EXPECT_GE(snap.size(), last);
            last = snap.size();
            for (std::size_t i = 1; i < snap.size(); ++i) EXPECT_LE(snap[i - 1].ingested_at, snap[i].ingested_at);
        }
    });
    for (int t = 0; t < kThreads; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < kPerThread; ++i) store.append(EventKind::trace, std::to_string(t) + ":" + std::to_string(i));
        });
    }
    for (auto& th : threads) th.join();
    stop = true;
    reader.join();
    auto all = store.scan(EventKind::trace, TimeWindow::all());
    EXPECT_EQ(all.size(), static_cast<std::size_t>(kThreads * kPerThread));
    std::set<std::string> payloads, ids;
    for (const auto& r : all) {
        payloads.insert(r.payload);
        ids.insert(r.event_id);
    }
    EXPECT_EQ(payloads.size(), all.size());
    EXPECT_EQ(ids.size(), all.size());
    LogEventStore reopened(dir.path());
    EXPECT_EQ(reopened.size(), all.size());
}
