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

#include <algorithm>
#include <cmath>
#include <thread>

#include "flywheel/error.hpp"
#include "flywheel/gateway.hpp"
#include "helpers.hpp"
#include "httplib.h"

using namespace flywheel;
using fixtures::reply;
using fixtures::task;

namespace {

BackendScript dial_script(double dial, std::size_t n, std::uint64_t seed = 11) {
    BackendScript s{"dial", seed, {}};
    s.tasks[CompletionTask::router] = task(260.0);
    s.tasks[CompletionTask::router].accuracy_dial = dial;
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = s.add(CompletionTask::router, "query " + std::to_string(i), reply("policies 0.9"));
        e.wrong = "cafe_menu 0.4";
    }
    return s;
}

CompletionRequest req(CompletionTask t, std::string key, std::string prompt = "prompt") {
    CompletionRequest r;
    r.task = t;
    r.key = std::move(key);
    r.prompt = std::move(prompt);
    return r;
}

int expect_code(ErrorCode code, const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
        return 1;
    }
    ADD_FAILURE() << "no error thrown, expected " << to_string(code);
    return 0;
}

}  // namespace

TEST(ScriptedBackend, EntryLookupIsNormalized) {
    BackendScript s{"b", 0, {}};
    s.tasks[CompletionTask::router] = task(80.0);
    s.add(CompletionTask::router, "  How do I  order a Mouse? ", reply("it_benefits_help 0.95"));
    ScriptedBackend b(s);
    auto r = b.complete(req(CompletionTask::router, "how do i order a mouse?"));
    EXPECT_EQ(r.text, "it_benefits_help 0.95");
    EXPECT_DOUBLE_EQ(r.latency_ms, 80.0);
    EXPECT_EQ(r.backend_id, "b");
    EXPECT_TRUE(r.simulated);
}

TEST(ScriptedBackend, EntryLatencyOverridesTaskLatency) {
    BackendScript s{"b", 0, {}};
    s.tasks[CompletionTask::answer] = task(900.0);
    s.add(CompletionTask::answer, "q", reply("a", 12.5));
    EXPECT_DOUBLE_EQ(ScriptedBackend(s).complete(req(CompletionTask::answer, "q")).latency_ms, 12.5);
}

TEST(ScriptedBackend, FallbackSubstitutesKeyAndPrompt) {
    BackendScript s{"b", 0, {}};
    s.tasks[CompletionTask::variations] = task(10.0, "{key}\n{key} company [{prompt}]");
    auto r = ScriptedBackend(s).complete(req(CompletionTask::variations, "VPN Error", "P"));
    EXPECT_EQ(r.text, "VPN Error\nVPN Error company [P]");
    auto bare = ScriptedBackend(s).complete(req(CompletionTask::variations, "", "just the prompt"));
    EXPECT_EQ(bare.text, "just the prompt\njust the prompt company [just the prompt]");
}

TEST(ScriptedBackend, MissingEntryWithoutFallbackFails) {
    BackendScript s{"b", 0, {}};
    s.tasks[CompletionTask::router] = task(1.0);
    ScriptedBackend b(s);
    expect_code(ErrorCode::ScriptedError, [&] { b.complete(req(CompletionTask::router, "unknown")); });
    expect_code(ErrorCode::ScriptedError, [&] { b.complete(req(CompletionTask::judge, "unknown")); });
}

TEST(ScriptedBackend, ScriptedErrorsSurface) {
    BackendScript s{"b", 0, {}};
    s.tasks[CompletionTask::answer] = task(1.0);
    s.tasks[CompletionTask::answer].fallback = FallbackRule{"", "backend down"};
    ScriptEntry e;
    e.error = "rate limited";
    s.add(CompletionTask::answer, "q", e);
    ScriptedBackend b(s);
    expect_code(ErrorCode::ScriptedError, [&] { b.complete(req(CompletionTask::answer, "q")); });
    expect_code(ErrorCode::ScriptedError, [&] { b.complete(req(CompletionTask::answer, "other")); });
}

TEST(ScriptedBackend, DialMarksExactlyFloorOfCorrectEntries) {
    for (double dial : {0.0, 0.5, 0.738, 0.775, 0.96, 1.0}) {
        for (std::size_t n : {1u, 7u, 274u, 1000u}) {
            ScriptedBackend b(dial_script(dial, n));
            std::size_t correct = 0;
            for (std::size_t i = 0; i < n; ++i) {
                auto r = b.complete(req(CompletionTask::router, "query " + std::to_string(i)));
                correct += r.text == "policies 0.9";
            }
            const auto expected = static_cast<std::size_t>(std::floor(static_cast<double>(n) * dial + 1e-9));
            EXPECT_EQ(correct, expected) << "dial " << dial << " n " << n;
            EXPECT_EQ(b.correct_keys(CompletionTask::router).size(), expected);
        }
    }
}

TEST(ScriptedBackend, DialSubsetsNestAsDialGrows) {
    auto lo = ScriptedBackend(dial_script(0.5, 200)).correct_keys(CompletionTask::router);
    auto hi = ScriptedBackend(dial_script(0.9, 200)).correct_keys(CompletionTask::router);
    EXPECT_TRUE(std::includes(hi.begin(), hi.end(), lo.begin(), lo.end()));
}

TEST(ScriptedBackend, DialSelectionDependsOnSeed) {
    auto a = ScriptedBackend(dial_script(0.5, 200, 1)).correct_keys(CompletionTask::router);
    auto b = ScriptedBackend(dial_script(0.5, 200, 1)).correct_keys(CompletionTask::router);
    auto c = ScriptedBackend(dial_script(0.5, 200, 2)).correct_keys(CompletionTask::router);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(ScriptedBackend, IncorrectEntryWithoutWrongUsesFallback) {
    BackendScript s{"b", 3, {}};
    s.tasks[CompletionTask::router] = task(1.0, "sharepoint 0.20");
    s.tasks[CompletionTask::router].accuracy_dial = 0.0;
    s.add(CompletionTask::router, "q", reply("policies 0.9"));
    EXPECT_EQ(ScriptedBackend(s).complete(req(CompletionTask::router, "q")).text, "sharepoint 0.20");
}

TEST(Script, JsonFileRoundTrip) {
    fixtures::TempDir dir;
    auto s = dial_script(0.96, 5);
    s.tasks[CompletionTask::answer] = task(900.0, "found {key}");
    ScriptEntry err;
    err.error = "boom";
    s.add(CompletionTask::answer, "bad", err);
    save_script(s, (dir / "s.json").string());
    auto back = load_script((dir / "s.json").string());
    EXPECT_EQ(back.id, s.id);
    EXPECT_EQ(back.seed, s.seed);
    ASSERT_EQ(back.tasks.size(), 2u);
    EXPECT_EQ(back.tasks[CompletionTask::router].accuracy_dial, 0.96);
    EXPECT_EQ(back.tasks[CompletionTask::router].entries.size(), 5u);
    EXPECT_EQ(back.tasks[CompletionTask::router].entries["query 3"].wrong, "cafe_menu 0.4");
    EXPECT_EQ(back.tasks[CompletionTask::answer].entries["bad"].error, "boom");
    EXPECT_EQ(back.tasks[CompletionTask::answer].fallback->text_template, "found {key}");
}

TEST(Script, RejectsBadDialAndUnknownTask) {
    fixtures::TempDir dir;
    std::ofstream(dir / "a.json") << R"({"id":"x","tasks":{"router":{"accuracy_dial":1.5}}})";
    std::ofstream(dir / "b.json") << R"({"id":"x","tasks":{"weather":{}}})";
    expect_code(ErrorCode::SchemaError, [&] { load_script((dir / "a.json").string()); });
    expect_code(ErrorCode::SchemaError, [&] { load_script((dir / "b.json").string()); });
    expect_code(ErrorCode::StorageError, [&] { load_script((dir / "missing.json").string()); });
}

TEST(Gateway, BindingsAndExplicitBackends) {
    Gateway g;
    BackendScript a{"a", 0, {}}, b{"b", 0, {}};
    a.tasks[CompletionTask::answer] = task(1.0, "from a");
    b.tasks[CompletionTask::answer] = task(2.0, "from b");
    g.register_script(a);
    g.register_script(b);
    expect_code(ErrorCode::NoBackend, [&] { g.complete(req(CompletionTask::answer, "q")); });
    g.bind(CompletionTask::answer, "a");
    EXPECT_EQ(g.bound(CompletionTask::answer), "a");
    EXPECT_EQ(g.complete(req(CompletionTask::answer, "q")).text, "from a");
    EXPECT_EQ(g.complete(req(CompletionTask::answer, "q"), "b").text, "from b");
    expect_code(ErrorCode::NoBackend, [&] { g.complete(req(CompletionTask::answer, "q"), "c"); });
    expect_code(ErrorCode::UnknownBackend, [&] { g.bind(CompletionTask::router, "c"); });
    expect_code(ErrorCode::DuplicateId, [&] { g.register_script(a); });
}

TEST(Gateway, ValidatesRequests) {
    Gateway g;
    BackendScript a{"a", 0, {}};
    a.tasks[CompletionTask::answer] = task(1.0, "x");
    g.register_script(a);
    g.bind(CompletionTask::answer, "a");
    expect_code(ErrorCode::InvalidArgument, [&] { g.complete(req(CompletionTask::answer, "q", "")); });
    auto r = req(CompletionTask::answer, "q");
    r.params.temperature = -1;
    expect_code(ErrorCode::InvalidArgument, [&] { g.complete(r); });
}

TEST(Gateway, TaskNamesRoundTrip) {
    for (auto t : {CompletionTask::router, CompletionTask::rephrasal, CompletionTask::variations,
                   CompletionTask::answer, CompletionTask::judge, CompletionTask::synthesis,
                   CompletionTask::regression_judge}) {
        EXPECT_EQ(parse_task(to_string(t)), t);
    }
    EXPECT_FALSE(parse_task("weather"));
}

class RemoteBackendTest : public ::testing::Test {
protected:
    void SetUp() override {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
            ++calls_;
            last_body_ = json::parse(rq.body);
            last_auth_ = rq.get_header_value("Authorization");
            if (fail_first_ && calls_ == 1) {
                rs.status = 500;
                return;
            }
            json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "remote says hi"}}}}}}};
            rs.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }
    RemoteConfig config() const {
        RemoteConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_);
        c.bearer_token = "tok";
        c.model = "m";
        c.timeout_ms = 2000;
        return c;
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> calls_{0};
    bool fail_first_ = false;
    json last_body_;
    std::string last_auth_;
};

TEST_F(RemoteBackendTest, SendsPromptVerbatimAsChatCompletion) {
    RemoteBackend b("remote", config());
    auto r = req(CompletionTask::judge, "ignored", "QUERY: x\nTOOLS: ['a']");
    r.params.temperature = 0.0;
    r.params.max_tokens = 64;
    auto out = b.complete(r);
    EXPECT_EQ(out.text, "remote says hi");
    EXPECT_FALSE(out.simulated);
    EXPECT_EQ(out.backend_id, "remote");
    EXPECT_EQ(last_auth_, "Bearer tok");
    EXPECT_EQ(last_body_.at("model"), "m");
    EXPECT_EQ(last_body_.at("max_tokens"), 64);
    EXPECT_EQ(last_body_.at("messages").at(0).at("content"), "QUERY: x\nTOOLS: ['a']");
}

TEST_F(RemoteBackendTest, RetriesOnceThenFails) {
    fail_first_ = true;
    auto c = config();
    RemoteBackend no_retry("remote", c);
    expect_code(ErrorCode::RemoteError, [&] { no_retry.complete(req(CompletionTask::answer, "", "p")); });
    calls_ = 0;
    c.retries = 5;
    RemoteBackend retry("remote", c);
    EXPECT_EQ(retry.complete(req(CompletionTask::answer, "", "p")).text, "remote says hi");
    EXPECT_EQ(calls_, 2);
}

TEST(RemoteBackend, UnreachableHostIsRemoteError) {
    RemoteConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.timeout_ms = 500;
    RemoteBackend b("remote", c);
    expect_code(ErrorCode::RemoteError, [&] { b.complete(req(CompletionTask::answer, "", "p")); });
    expect_code(ErrorCode::InvalidArgument, [] { RemoteBackend("x", RemoteConfig{}); });
}
