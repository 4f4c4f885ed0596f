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

#include <condition_variable>
#include <future>
#include <set>
#include <thread>

#include "flywheel/error.hpp"
#include "flywheel/orchestrator.hpp"
#include "flywheel/simulation.hpp"
#include "helpers.hpp"

using namespace flywheel;
using namespace flywheel::fixtures;
using namespace std::chrono_literals;

namespace {

struct World {
    explicit World(std::size_t sessions = 300, double rate = 0.1) {
        SimulationOptions o;
        o.sessions = sessions;
        o.routing_error_rate = rate;
        o.rephrasal_error_rate = rate;
        o.seed = 7;
        summary = run_simulation(o, dir.path());
        config = load_deployment_config(summary.config_path.string());
    }
    TempDir dir;
    SimulationSummary summary;
    DeploymentConfig config;
};

/// Judge that parks its first call until released.
class GateBackend final : public Backend {
public:
    const std::string& id() const override { return id_; }
    CompletionResult complete(const CompletionRequest&) override {
        std::unique_lock lock(mu_);
        if (!entered_) {
            entered_ = true;
            cv_.notify_all();
            cv_.wait(lock, [this] { return released_; });
        }
        return {"Answer: YES", 1.0, id_, true};
    }
    void wait_entered() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return entered_; });
    }
    void release() {
        std::lock_guard lock(mu_);
        released_ = true;
        cv_.notify_all();
    }

private:
    std::string id_ = "parked-judge";
    std::mutex mu_;
    std::condition_variable cv_;
    bool entered_ = false;
    bool released_ = false;
};

}  // namespace

TEST(Orchestrator, SimulatedCycleRunsEverySection) {
    World w;
    FlywheelOrchestrator orch(open_deployment(w.config));
    auto report = orch.run_cycle(w.config.cycle);
    EXPECT_EQ(report.monitor.status, SectionStatus::ok) << report.monitor.detail;
    EXPECT_EQ(report.analyze.status, SectionStatus::ok) << report.analyze.detail;
    EXPECT_EQ(report.plan.status, SectionStatus::ok) << report.plan.detail;
    EXPECT_EQ(report.execute.status, SectionStatus::ok) << report.execute.detail;
    EXPECT_EQ(report.traces, w.summary.traces);
    EXPECT_EQ(report.negatives, w.summary.negatives);

    std::set<std::string> truth;
    for (const auto& e : load_ground_truth(w.summary.ground_truth_path.string())) {
        if (e.kind == DatasetTask::router) truth.insert(e.trace_id);
    }
    std::set<std::string> flagged(report.flagged_trace_ids.begin(), report.flagged_trace_ids.end());
    EXPECT_EQ(flagged, truth);
    EXPECT_DOUBLE_EQ(report.router_error_rate, static_cast<double>(truth.size()) / report.traces);
    ASSERT_TRUE(report.errors);
    EXPECT_EQ(report.errors->count(StageName::router), static_cast<std::int64_t>(w.summary.routing_errors));
    EXPECT_EQ(report.errors->sme_confirmed, static_cast<std::int64_t>(w.summary.routing_errors));

    ASSERT_EQ(report.datasets.size(), 2u);
    for (const auto& ds : report.datasets) {
        auto examples = load_dataset(*orch.deployment().store, ds.dataset_id);
        EXPECT_EQ(examples.size(), ds.size);
        EXPECT_EQ(ds.train + ds.validation + ds.test, ds.size);
        EXPECT_EQ(dedupe(examples).size(), examples.size());
    }
    EXPECT_EQ(report.datasets[0].corrections, w.summary.routing_errors);
    EXPECT_TRUE(orch.deployment().triage->unconsumed(DatasetTask::router).empty());

    ASSERT_EQ(report.candidates.size(), 2u);
    for (const auto& c : report.candidates) {
        EXPECT_EQ(c.decision.outcome, GateOutcome::promote_to_shadow);
        EXPECT_TRUE(c.rollout_started);
    }
    EXPECT_EQ(orch.deployment().rollouts->state(VariantTask::router)->stage.kind, StageKind::shadow);
    EXPECT_EQ(json(*orch.find_report(report.cycle_id)), json(json(report).get<CycleReport>()));
    EXPECT_NE(render_cycle_summary(report).find(report.cycle_id), std::string::npos);
}

TEST(Orchestrator, SecondCycleAdvancesAndReportsPersist) {
    World w;
    {
        FlywheelOrchestrator orch(open_deployment(w.config));
        orch.run_cycle(w.config.cycle);
    }
    FlywheelOrchestrator orch(open_deployment(w.config));
    auto second = orch.run_cycle(w.config.cycle);
    EXPECT_EQ(second.execute.status, SectionStatus::ok) << second.execute.detail;
    EXPECT_TRUE(second.datasets.empty());
    EXPECT_EQ(second.triage_opened, 0u);
    EXPECT_EQ(orch.deployment().rollouts->state(VariantTask::router)->stage, RolloutStage::canary(5));
    ASSERT_FALSE(second.rollout_transitions.empty());
    EXPECT_EQ(orch.reports().size(), 2u);
}

TEST(Orchestrator, MissingJudgeFailsOnlyAnalyze) {
    World w(120);
    FlywheelOrchestrator orch(open_deployment(w.config));
    auto cfg = w.config.cycle;
    cfg.judge_backend = "nobody";
    cfg.candidates.clear();
    auto r = orch.run_cycle(cfg);
    EXPECT_EQ(r.monitor.status, SectionStatus::ok);
    EXPECT_EQ(r.analyze.status, SectionStatus::failed);
    EXPECT_NE(r.analyze.detail.find("NoBackend"), std::string::npos);
    EXPECT_EQ(r.plan.status, SectionStatus::ok);
    EXPECT_TRUE(orch.find_report(r.cycle_id));
}

TEST(Orchestrator, EmptyWindowStillReports) {
    World w(50);
    FlywheelOrchestrator orch(open_deployment(w.config));
    auto cfg = w.config.cycle;
    cfg.window = TimeWindow{0, 1};
    auto r = orch.run_cycle(cfg);
    EXPECT_EQ(r.traces, 0u);
    EXPECT_FALSE(r.errors);
    EXPECT_EQ(r.monitor.status, SectionStatus::ok);
    EXPECT_EQ(r.analyze.status, SectionStatus::ok);
    EXPECT_EQ(r.window, (TimeWindow{0, 1}));
}

TEST(Orchestrator, SingleFlightAndSchedule) {
    World w(60);
    FlywheelOrchestrator orch(open_deployment(w.config));
    auto judge = std::make_shared<GateBackend>();
    orch.deployment().gateway->register_backend(judge);
    auto cfg = w.config.cycle;
    cfg.judge_backend = "parked-judge";
    cfg.candidates.clear();

    auto first = std::async(std::launch::async, [&] { return orch.run_cycle(cfg); });
    judge->wait_entered();
    try {
        orch.run_cycle(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CycleInProgress);
    }
    auto schedule = orch.schedule_cycles(5ms, [&] { return cfg; });
    while (schedule->skipped() < 2) std::this_thread::sleep_for(1ms);
    judge->release();
    EXPECT_EQ(first.get().analyze.status, SectionStatus::ok);
    while (schedule->completed() < 2) std::this_thread::sleep_for(1ms);
    schedule->stop();
    EXPECT_TRUE(schedule->errors().empty());
    try {
        orch.schedule_cycles(0ms, [&] { return cfg; });
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidInterval);
    }
}

TEST(CycleConfigJson, RoundTripAndDatasetLookup) {
    CycleConfig c;
    c.window = TimeWindow{kT0, kT0 + 1000};
    c.judge_backend = "judge";
    c.candidates = {{VariantTask::rephrasal, "a", "b"}};
    c.gate.require_regression = false;
    c.seed = 9;
    json j = c;
    auto back = j.get<CycleConfig>();
    EXPECT_EQ(json(back), j);
    TempDir dir;
    std::ofstream(dir / "c.json") << j.dump();
    EXPECT_EQ(json(load_cycle_config((dir / "c.json").string())), j);

    LogEventStore store;
    try {
        load_dataset(store, "router-cycle-x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}
