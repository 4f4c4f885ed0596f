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
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "flywheel/agent.hpp"
#include "flywheel/analyzer.hpp"
#include "flywheel/curation.hpp"
#include "flywheel/event_store.hpp"
#include "flywheel/gateway.hpp"
#include "flywheel/monitor.hpp"
#include "flywheel/rollout.hpp"
#include "flywheel/triage.hpp"

namespace flywheel {

/// Shared services of one deployment.
struct Deployment {
    std::shared_ptr<Clock> clock;
    std::shared_ptr<IdGenerator> ids;
    std::shared_ptr<EventStore> store;
    std::shared_ptr<Gateway> gateway;
    std::shared_ptr<Corpus> corpus;
    std::shared_ptr<Agent> agent;
    std::shared_ptr<TelemetryMonitor> monitor;
    std::shared_ptr<VariantRegistry> variants;
    std::shared_ptr<RolloutController> rollouts;
    std::shared_ptr<TriageBoard> triage;

    /// Wires every component over `store` and `gateway`.
    static Deployment create(std::shared_ptr<EventStore> store, std::shared_ptr<Gateway> gateway,
                             Corpus corpus, std::shared_ptr<Clock> clock,
                             std::shared_ptr<IdGenerator> ids, AgentConfig agent_config = {},
                             MonitorConfig monitor_config = {}, RolloutPolicy rollout_policy = {});

    /// Backend overrides for a session under the current rollouts.
    ServingPlan serving_plan(const std::string& session_id) const;

    /// Answers through the current rollouts and records the trace. Sessions
    /// under a shadow rollout also get the candidate's answer logged as a
    /// report event; it is never served.
    ResponseTrace serve(const std::string& session_id, std::int64_t turn_index,
                        const std::string& query, const std::vector<std::string>& history) const;
};

/// Examples of a dataset persisted by a cycle. Throws NotFound.
std::vector<DatasetExample> load_dataset(const EventStore& store, const std::string& dataset_id);

struct CandidateSpec {
    VariantTask task = VariantTask::router;
    std::string baseline_variant;
    std::string candidate_variant;
};

struct CycleConfig {
    std::optional<TimeWindow> window;  // default: everything up to now
    std::optional<std::string> judge_backend;
    std::optional<std::string> synthesis_backend;
    std::optional<std::string> regression_judge_backend;
    std::size_t min_confirmed_errors = 10;
    std::vector<double> router_split = {0.6, 0.4};
    std::vector<double> rephrasal_split = {0.8, 0.1, 0.1};
    std::size_t synthetic_target = 5000;
    std::size_t max_fewshots = 4;
    std::uint64_t seed = 0;
    std::vector<CandidateSpec> candidates;
    std::optional<std::string> testset_path;        // used when no dataset was built
    std::optional<std::string> regression_set_path;
    /// Emulated SME: confirms open triage items from an injection ground-truth file.
    std::optional<std::string> auto_label_from;
    GatePolicy gate;
    /// Minimum candidate traces in the window before live KPIs replace the
    /// offline evaluation numbers when advancing a rollout.
    std::size_t min_kpi_samples = 20;
    bool advance_rollouts = true;
};

CycleConfig load_cycle_config(const std::string& path);
void to_json(json& j, const CycleConfig& c);
void from_json(const json& j, CycleConfig& c);

enum class SectionStatus { ok, failed, skipped };
std::string_view to_string(SectionStatus s) noexcept;

struct SectionResult {
    SectionStatus status = SectionStatus::skipped;
    std::string detail;
};

struct DatasetSummary {
    std::string dataset_id;
    DatasetTask task = DatasetTask::router;
    std::size_t size = 0;
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
    std::size_t corrections = 0;
};

struct CandidateOutcome {
    CandidateSpec spec;
    EvalResult baseline_eval;
    EvalResult candidate_eval;
    std::optional<RegressionScore> baseline_regression;
    std::optional<RegressionScore> candidate_regression;
    GateDecision decision;
    bool rollout_started = false;
};

struct CycleReport {
    std::string cycle_id;
    TimeWindow window;
    std::size_t traces = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t judge_flagged = 0;
    std::vector<std::string> flagged_trace_ids;
    /// Judge-flagged routing errors over traces in the window.
    double router_error_rate = 0.0;
    std::optional<ErrorReport> errors;
    std::size_t triage_opened = 0;
    std::vector<DatasetSummary> datasets;
    std::vector<CandidateOutcome> candidates;
    std::vector<Transition> rollout_transitions;
    SectionResult monitor;
    SectionResult analyze;
    SectionResult plan;
    SectionResult execute;
    double duration_ms = 0.0;
    Instant started_at = 0;
};

void to_json(json& j, const CycleReport& r);
/// Reports round-trip through JSON minus the per-item evaluation outcomes.
void from_json(const json& j, CycleReport& r);
std::string render_cycle_summary(const CycleReport& r);

/// Drives Monitor -> Analyze -> Plan -> Execute over one window.
class FlywheelOrchestrator {
public:
    explicit FlywheelOrchestrator(Deployment deployment);

    /// Single-flight; throws CycleInProgress. Section failures are recorded
    /// in the report, never thrown; earlier sections' artifacts persist.
    CycleReport run_cycle(const CycleConfig& config);

    std::optional<CycleReport> find_report(const std::string& cycle_id) const;
    std::vector<CycleReport> reports() const;

    const Deployment& deployment() const noexcept { return d_; }

    class Schedule {
    public:
        ~Schedule();
        void stop();
        std::size_t completed() const { return completed_.load(); }
        std::size_t skipped() const { return skipped_.load(); }
        std::vector<std::string> errors() const;

    private:
        friend class FlywheelOrchestrator;
        std::thread ticker_;
        std::vector<std::thread> workers_;
        std::mutex mu_;
        std::condition_variable cv_;
        bool stopping_ = false;
        std::atomic<std::size_t> completed_{0};
        std::atomic<std::size_t> skipped_{0};
        std::vector<std::string> errors_;
    };

    /// Runs a cycle every `interval`; a tick that finds a cycle still running
    /// is skipped, not queued. `make_config` is called per tick. Throws
    /// InvalidInterval.
    std::unique_ptr<Schedule> schedule_cycles(std::chrono::milliseconds interval,
                                              std::function<CycleConfig()> make_config);

private:
    CycleReport run_locked(const CycleConfig& config);

    Deployment d_;
    std::atomic<bool> running_{false};
};

}  // namespace flywheel
