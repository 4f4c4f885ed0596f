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

#include "flywheel/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "flywheel/error.hpp"
#include "flywheel/simulation.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

Deployment Deployment::create(std::shared_ptr<EventStore> store, std::shared_ptr<Gateway> gateway, Corpus corpus,
                              std::shared_ptr<Clock> clock, std::shared_ptr<IdGenerator> ids,
                              AgentConfig agent_config, MonitorConfig monitor_config,
                              RolloutPolicy rollout_policy) {
    Deployment d;
    d.clock = clock ? std::move(clock) : std::make_shared<SystemClock>();
    d.ids = ids ? std::move(ids) : std::make_shared<IdGenerator>();
    d.store = std::move(store);
    d.gateway = std::move(gateway);
    d.corpus = std::make_shared<Corpus>(std::move(corpus));
    d.agent = std::make_shared<Agent>(d.gateway, std::move(agent_config), nullptr, d.clock, d.ids);
    d.monitor = std::make_shared<TelemetryMonitor>(d.store, d.clock, d.ids, monitor_config);
    d.variants = std::make_shared<VariantRegistry>(d.store, d.gateway, d.clock);
    d.rollouts = std::make_shared<RolloutController>(d.store, d.clock, std::move(rollout_policy));
    d.triage = std::make_shared<TriageBoard>(d.store, d.ids);
    return d;
}

namespace {

void set_override(ServingPlan& plan, VariantTask task, const std::string& backend) {
    switch (task) {
        case VariantTask::router: plan.router_backend = backend; break;
        case VariantTask::rephrasal: plan.rephrasal_backend = backend; break;
        case VariantTask::answer: plan.answer_backend = backend; break;
    }
}

}  // namespace

ServingPlan Deployment::serving_plan(const std::string& session_id) const {
    ServingPlan plan;
    for (const auto& s : rollouts->states()) {
        const std::string task(to_string(s.task));
        std::string served = s.active_variant;
        if (s.stage.kind == StageKind::canary || s.stage.kind == StageKind::full) {
            served = assign_traffic(session_id, s);
        }
        plan.served_variants[task] = served;
        if (s.candidate_variant && served == *s.candidate_variant) {
            set_override(plan, s.task, variants->at(served).backend_id);
        }
    }
    return plan;
}

ResponseTrace Deployment::serve(const std::string& session_id, std::int64_t turn_index, const std::string& query,
                                const std::vector<std::string>& history) const {
    auto plan = serving_plan(session_id);
    auto trace = agent->answer_query(session_id, turn_index, query, history, *corpus, plan);
    monitor->record_response(trace);
    for (const auto& s : rollouts->states()) {
        if (s.stage.kind != StageKind::shadow || !s.candidate_variant) continue;
        ServingPlan shadow = plan;
        shadow.served_variants[std::string(to_string(s.task))] = *s.candidate_variant;
        set_override(shadow, s.task, variants->at(*s.candidate_variant).backend_id);
        auto shadow_trace = agent->answer_query(session_id, turn_index, query, history, *corpus, shadow);
        json event = {{"type", "shadow_trace"},
                      {"task", std::string(to_string(s.task))},
                      {"candidate_variant", *s.candidate_variant},
                      {"served_trace_id", trace.trace_id},
                      {"trace", shadow_trace}};
        store->append(EventKind::report, event.dump());
    }
    return trace;
}

std::vector<DatasetExample> load_dataset(const EventStore& store, const std::string& dataset_id) {
    for (const auto& ev : store.scan(EventKind::dataset, TimeWindow::all())) {
        auto j = json::parse(ev.payload);
        if (j.value("dataset_id", "") != dataset_id) continue;
        return j.at("examples").get<std::vector<DatasetExample>>();
    }
    throw Error(ErrorCode::NotFound, "no dataset '" + dataset_id + "'");
}

// ---- config and report serialization --------------------------------------

namespace {

// Unbounded ends are written as null.
json window_json(const TimeWindow& w) {
    const auto all = TimeWindow::all();
    return json{{"from", w.from == all.from ? json(nullptr) : json(format_instant(w.from))},
                {"to", w.to == all.to ? json(nullptr) : json(format_instant(w.to))}};
}

Instant instant_from(const json& j, Instant unbounded) {
    if (j.is_null()) return unbounded;
    return j.is_number() ? j.get<Instant>() : parse_instant(j.get<std::string>());
}

TimeWindow window_from(const json& j) {
    const auto all = TimeWindow::all();
    return {instant_from(j.value("from", json(nullptr)), all.from), instant_from(j.value("to", json(nullptr)), all.to)};
}

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

json candidate_spec_json(const CandidateSpec& c) {
    return json{{"task", std::string(to_string(c.task))},
                {"baseline_variant", c.baseline_variant},
                {"candidate_variant", c.candidate_variant}};
}

CandidateSpec candidate_spec_from(const json& j) {
    CandidateSpec c;
    auto task = parse_variant_task(j.at("task").get<std::string>());
    if (!task) throw Error(ErrorCode::SchemaError, "unknown candidate task");
    c.task = *task;
    c.baseline_variant = j.at("baseline_variant").get<std::string>();
    c.candidate_variant = j.at("candidate_variant").get<std::string>();
    return c;
}

}  // namespace

void to_json(json& j, const CycleConfig& c) {
    json candidates = json::array();
    for (const auto& cs : c.candidates) candidates.push_back(candidate_spec_json(cs));
    j = json{{"window", c.window ? window_json(*c.window) : json(nullptr)},
             {"judge_backend", opt(c.judge_backend)},
             {"synthesis_backend", opt(c.synthesis_backend)},
             {"regression_judge_backend", opt(c.regression_judge_backend)},
             {"min_confirmed_errors", c.min_confirmed_errors},
             {"router_split", c.router_split},
             {"rephrasal_split", c.rephrasal_split},
             {"synthetic_target", c.synthetic_target},
             {"max_fewshots", c.max_fewshots},
             {"seed", c.seed},
             {"candidates", candidates},
             {"testset_path", opt(c.testset_path)},
             {"regression_set_path", opt(c.regression_set_path)},
             {"auto_label_from", opt(c.auto_label_from)},
             {"gate",
              {{"accuracy_epsilon", c.gate.accuracy_epsilon},
               {"regression_tolerance", c.gate.regression_tolerance},
               {"min_latency_improvement", c.gate.min_latency_improvement},
               {"require_regression", c.gate.require_regression}}},
             {"min_kpi_samples", c.min_kpi_samples},
             {"advance_rollouts", c.advance_rollouts}};
}

void from_json(const json& j, CycleConfig& c) {
    c = CycleConfig{};
    if (j.contains("window") && !j.at("window").is_null()) c.window = window_from(j.at("window"));
    c.judge_backend = opt_from<std::string>(j, "judge_backend");
    c.synthesis_backend = opt_from<std::string>(j, "synthesis_backend");
    c.regression_judge_backend = opt_from<std::string>(j, "regression_judge_backend");
    c.min_confirmed_errors = j.value("min_confirmed_errors", c.min_confirmed_errors);
    c.router_split = j.value("router_split", c.router_split);
    c.rephrasal_split = j.value("rephrasal_split", c.rephrasal_split);
    c.synthetic_target = j.value("synthetic_target", c.synthetic_target);
    c.max_fewshots = j.value("max_fewshots", c.max_fewshots);
    c.seed = j.value("seed", c.seed);
    if (j.contains("candidates")) {
        for (const auto& cs : j.at("candidates")) c.candidates.push_back(candidate_spec_from(cs));
    }
    c.testset_path = opt_from<std::string>(j, "testset_path");
    c.regression_set_path = opt_from<std::string>(j, "regression_set_path");
    c.auto_label_from = opt_from<std::string>(j, "auto_label_from");
    if (j.contains("gate")) {
        const auto& g = j.at("gate");
        c.gate.accuracy_epsilon = g.value("accuracy_epsilon", c.gate.accuracy_epsilon);
        c.gate.regression_tolerance = g.value("regression_tolerance", c.gate.regression_tolerance);
        c.gate.min_latency_improvement = g.value("min_latency_improvement", c.gate.min_latency_improvement);
        c.gate.require_regression = g.value("require_regression", c.gate.require_regression);
    }
    c.min_kpi_samples = j.value("min_kpi_samples", c.min_kpi_samples);
    c.advance_rollouts = j.value("advance_rollouts", c.advance_rollouts);
}

CycleConfig load_cycle_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read cycle config '" + path + "'");
    CycleConfig c;
    try {
        c = json::parse(in).get<CycleConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, path + ": " + e.what());
    }
    const auto base = std::filesystem::path(path).parent_path();
    for (auto* p : {&c.testset_path, &c.regression_set_path, &c.auto_label_from}) {
        if (*p && std::filesystem::path(**p).is_relative()) *p = (base / **p).string();
    }
    return c;
}

std::string_view to_string(SectionStatus s) noexcept {
    switch (s) {
        case SectionStatus::ok: return "ok";
        case SectionStatus::failed: return "failed";
        case SectionStatus::skipped: return "skipped";
    }
    return "";
}

namespace {

json section_json(const SectionResult& s) {
    return json{{"status", std::string(to_string(s.status))}, {"detail", s.detail}};
}

SectionResult section_from(const json& j) {
    SectionResult s;
    const auto status = j.at("status").get<std::string>();
    s.status = status == "ok" ? SectionStatus::ok : status == "failed" ? SectionStatus::failed : SectionStatus::skipped;
    s.detail = j.value("detail", "");
    return s;
}

json eval_summary(const EvalResult& e) {
    json j = e;
    return j;
}

EvalResult eval_from(const json& j) {
    EvalResult e;
    e.variant_id = j.at("variant_id").get<std::string>();
    e.testset_id = j.at("testset_id").get<std::string>();
    e.correct = j.at("correct").get<std::size_t>();
    e.total = j.at("total").get<std::size_t>();
    e.accuracy = j.at("accuracy").get<double>();
    e.mean_latency_ms = j.at("mean_latency_ms").get<double>();
    return e;
}

RegressionScore regression_from(const json& j) {
    RegressionScore r;
    r.variant_id = j.at("variant_id").get<std::string>();
    r.correctness = j.at("correctness").get<double>();
    r.helpfulness = j.at("helpfulness").get<double>();
    r.conscientiousness = j.at("conscientiousness").get<double>();
    r.n_queries = j.at("n_queries").get<std::size_t>();
    r.failed = j.value("failed", std::size_t{0});
    return r;
}

json transition_json(const Transition& t) {
    RolloutState tmp;
    tmp.history.push_back(t);
    json j = tmp;
    return j.at("history").at(0);
}

Transition transition_from(const json& j) {
    json wrapper = RolloutState{};
    wrapper["history"] = json::array({j});
    return wrapper.get<RolloutState>().history.at(0);
}

}  // namespace

void to_json(json& j, const CycleReport& r) {
    json datasets = json::array();
    for (const auto& d : r.datasets) {
        datasets.push_back({{"dataset_id", d.dataset_id},
                            {"task", std::string(to_string(d.task))},
                            {"size", d.size},
                            {"train", d.train},
                            {"validation", d.validation},
                            {"test", d.test},
                            {"corrections", d.corrections}});
    }
    json candidates = json::array();
    for (const auto& c : r.candidates) {
        candidates.push_back({{"spec", candidate_spec_json(c.spec)},
                              {"baseline_eval", eval_summary(c.baseline_eval)},
                              {"candidate_eval", eval_summary(c.candidate_eval)},
                              {"baseline_regression", opt(c.baseline_regression)},
                              {"candidate_regression", opt(c.candidate_regression)},
                              {"decision", c.decision},
                              {"rollout_started", c.rollout_started}});
    }
    json transitions = json::array();
    for (const auto& t : r.rollout_transitions) transitions.push_back(transition_json(t));
    j = json{{"cycle_id", r.cycle_id},
             {"window", window_json(r.window)},
             {"traces", r.traces},
             {"positives", r.positives},
             {"negatives", r.negatives},
             {"judge_flagged", r.judge_flagged},
             {"flagged_trace_ids", r.flagged_trace_ids},
             {"router_error_rate", r.router_error_rate},
             {"errors", opt(r.errors)},
             {"triage_opened", r.triage_opened},
             {"datasets", datasets},
             {"candidates", candidates},
             {"rollout_transitions", transitions},
             {"monitor", section_json(r.monitor)},
             {"analyze", section_json(r.analyze)},
             {"plan", section_json(r.plan)},
             {"execute", section_json(r.execute)},
             {"duration_ms", r.duration_ms},
             {"started_at", format_instant(r.started_at)}};
}

void from_json(const json& j, CycleReport& r) {
    r = CycleReport{};
    r.cycle_id = j.at("cycle_id").get<std::string>();
    r.window = window_from(j.at("window"));
    r.traces = j.at("traces").get<std::size_t>();
    r.positives = j.at("positives").get<std::size_t>();
    r.negatives = j.at("negatives").get<std::size_t>();
    r.judge_flagged = j.at("judge_flagged").get<std::size_t>();
    r.flagged_trace_ids = j.at("flagged_trace_ids").get<std::vector<std::string>>();
    r.router_error_rate = j.at("router_error_rate").get<double>();
    if (!j.at("errors").is_null()) r.errors = j.at("errors").get<ErrorReport>();
    r.triage_opened = j.at("triage_opened").get<std::size_t>();
    for (const auto& d : j.at("datasets")) {
        DatasetSummary s;
        s.dataset_id = d.at("dataset_id").get<std::string>();
        s.task = parse_dataset_task(d.at("task").get<std::string>()).value_or(DatasetTask::router);
        s.size = d.at("size").get<std::size_t>();
        s.train = d.at("train").get<std::size_t>();
        s.validation = d.at("validation").get<std::size_t>();
        s.test = d.at("test").get<std::size_t>();
        s.corrections = d.at("corrections").get<std::size_t>();
        r.datasets.push_back(s);
    }
    for (const auto& c : j.at("candidates")) {
        CandidateOutcome o;
        o.spec = candidate_spec_from(c.at("spec"));
        o.baseline_eval = eval_from(c.at("baseline_eval"));
        o.candidate_eval = eval_from(c.at("candidate_eval"));
        if (!c.at("baseline_regression").is_null()) o.baseline_regression = regression_from(c.at("baseline_regression"));
        if (!c.at("candidate_regression").is_null()) o.candidate_regression = regression_from(c.at("candidate_regression"));
        const auto& d = c.at("decision");
        o.decision.outcome = d.at("outcome").get<std::string>() == "promote_to_shadow" ? GateOutcome::promote_to_shadow
                                                                                      : GateOutcome::reject;
        o.decision.reasons = d.at("reasons").get<std::vector<std::string>>();
        o.decision.accuracy_delta = d.at("accuracy_delta").get<double>();
        o.decision.latency_reduction = d.at("latency_reduction").get<double>();
        o.rollout_started = c.at("rollout_started").get<bool>();
        r.candidates.push_back(std::move(o));
    }
    for (const auto& t : j.at("rollout_transitions")) r.rollout_transitions.push_back(transition_from(t));
    r.monitor = section_from(j.at("monitor"));
    r.analyze = section_from(j.at("analyze"));
    r.plan = section_from(j.at("plan"));
    r.execute = section_from(j.at("execute"));
    r.duration_ms = j.at("duration_ms").get<double>();
    r.started_at = instant_from(j.at("started_at"), 0);
}

std::string render_cycle_summary(const CycleReport& r) {
    std::ostringstream os;
    char buf[256];
    os << "cycle " << r.cycle_id << '\n';
    std::snprintf(buf, sizeof buf, "traces %zu  positives %zu  negatives %zu\n", r.traces, r.positives,
                  r.negatives);
    os << buf;
    std::snprintf(buf, sizeof buf, "judge flagged %zu  router error rate %.2f%%  triage opened %zu\n",
                  r.judge_flagged, r.router_error_rate * 100.0, r.triage_opened);
    os << buf;
    if (r.errors) os << r.errors->render_table();
    for (const auto& d : r.datasets) {
        std::snprintf(buf, sizeof buf, "dataset %s (%s): %zu examples, train %zu / validation %zu / test %zu\n",
                      d.dataset_id.c_str(), std::string(to_string(d.task)).c_str(), d.size, d.train,
                      d.validation, d.test);
        os << buf;
    }
    for (const auto& c : r.candidates) {
        std::snprintf(buf, sizeof buf,
                      "%s: %s %.2f%% %.0f ms vs %s %.2f%% %.0f ms -> %s (latency -%.1f%%, accuracy %+.2f pp)\n",
                      std::string(to_string(c.spec.task)).c_str(), c.spec.candidate_variant.c_str(),
                      c.candidate_eval.accuracy * 100.0, c.candidate_eval.mean_latency_ms,
                      c.spec.baseline_variant.c_str(), c.baseline_eval.accuracy * 100.0,
                      c.baseline_eval.mean_latency_ms, std::string(to_string(c.decision.outcome)).c_str(),
                      c.decision.latency_reduction * 100.0, c.decision.accuracy_delta * 100.0);
        os << buf;
    }
    for (const auto& t : r.rollout_transitions) {
        os << "rollout " << t.from.label() << " -> " << t.to.label() << " (" << t.reason << ")\n";
    }
    os << "sections: monitor " << to_string(r.monitor.status) << ", analyze " << to_string(r.analyze.status)
       << ", plan " << to_string(r.plan.status) << ", execute " << to_string(r.execute.status) << '\n';
    return os.str();
}

// ---- the cycle -------------------------------------------------------------

FlywheelOrchestrator::FlywheelOrchestrator(Deployment deployment) : d_(std::move(deployment)) {}

CycleReport FlywheelOrchestrator::run_cycle(const CycleConfig& config) {
    bool expected = false;
    if (!running_.compare_exchange_strong(expected, true)) {
        throw Error(ErrorCode::CycleInProgress, "a cycle is already running");
    }
    struct Reset {
        std::atomic<bool>& flag;
        ~Reset() { flag.store(false); }
    } reset{running_};
    return run_locked(config);
}

namespace {

StageName stage_of(VariantTask t) {
    switch (t) {
        case VariantTask::router: return StageName::router;
        case VariantTask::rephrasal: return StageName::rephrasal;
        case VariantTask::answer: return StageName::answer_generation;
    }
    return StageName::router;
}

DatasetTask dataset_task_of(VariantTask t) {
    return t == VariantTask::rephrasal ? DatasetTask::rephrasal : DatasetTask::router;
}

struct LiveKpis {
    std::size_t samples = 0;
    Kpis kpis;
};

LiveKpis live_kpis(const std::vector<UnifiedRecord>& records, VariantTask task, const std::string& variant,
                   const std::set<std::string>& flagged) {
    LiveKpis out;
    const std::string key(to_string(task));
    double latency = 0.0;
    std::size_t negatives = 0;
    std::size_t wrong = 0;
    for (const auto& r : records) {
        auto it = r.trace.served_variants.find(key);
        if (it == r.trace.served_variants.end() || it->second != variant) continue;
        ++out.samples;
        auto lat = r.trace.stage_latencies.find(stage_of(task));
        if (lat != r.trace.stage_latencies.end()) latency += lat->second;
        negatives += r.sentiment == Sentiment::negative ? 1 : 0;
        wrong += flagged.count(r.trace.trace_id) ? 1 : 0;
    }
    if (out.samples) {
        const double n = static_cast<double>(out.samples);
        out.kpis.latency_ms = latency / n;
        out.kpis.negative_feedback_rate = static_cast<double>(negatives) / n;
        out.kpis.accuracy = 1.0 - static_cast<double>(wrong) / n;
    }
    return out;
}

std::string describe(const std::exception& e) {
    if (const auto* fe = dynamic_cast<const Error*>(&e)) {
        return std::string(to_string(fe->code())) + ": " + fe->what();
    }
    return e.what();
}

}  // namespace

CycleReport FlywheelOrchestrator::run_locked(const CycleConfig& config) {
    const auto wall_start = std::chrono::steady_clock::now();
    CycleReport report;
    report.cycle_id = d_.ids->next("cycle");
    report.started_at = d_.clock->now();
    report.window = config.window.value_or(TimeWindow::all());

    // Monitor
    std::vector<UnifiedRecord> records;
    try {
        records = d_.monitor->run_etl(report.window);
        report.traces = records.size();
        for (const auto& r : records) {
            report.positives += r.sentiment == Sentiment::positive ? 1 : 0;
            report.negatives += r.sentiment == Sentiment::negative ? 1 : 0;
        }
        report.monitor = {SectionStatus::ok, std::to_string(records.size()) + " unified records"};
    } catch (const std::exception& e) {
        report.monitor = {SectionStatus::failed, describe(e)};
    }

    // Analyze
    std::set<std::string> flagged;
    if (report.monitor.status == SectionStatus::ok) {
        try {
            if (config.judge_backend ? !d_.gateway->has_backend(*config.judge_backend)
                                     : !d_.gateway->bound(CompletionTask::judge)) {
                throw Error(ErrorCode::NoBackend, "no judge backend configured");
            }
            auto judged = classify_routing_errors(records, *d_.gateway, config.judge_backend);
            std::unordered_map<std::string, const JudgedRecord*> by_trace;
            std::size_t unjudged = 0;
            for (const auto& jr : judged) {
                by_trace[jr.trace_id] = &jr;
                if (!jr.verdict) ++unjudged;
                if (jr.flagged()) {
                    flagged.insert(jr.trace_id);
                    report.flagged_trace_ids.push_back(jr.trace_id);
                }
            }
            report.judge_flagged = flagged.size();
            report.router_error_rate =
                records.empty() ? 0.0 : static_cast<double>(flagged.size()) / static_cast<double>(records.size());

            auto verdict_for = [&](const std::string& trace_id) -> std::optional<JudgeVerdict> {
                auto it = by_trace.find(trace_id);
                if (it == by_trace.end()) return std::nullopt;
                return it->second->verdict;
            };

            // Queue judge flags and heuristic rephrasal losses for SME review.
            for (const auto& r : records) {
                const auto& id = r.trace.trace_id;
                if (flagged.count(id)) {
                    auto v = verdict_for(id);
                    if (d_.triage->open(id, DatasetTask::router, r.trace.query, r.trace.expert_selected,
                                        v ? v->reasoning : "")) {
                        ++report.triage_opened;
                    }
                } else if (r.sentiment == Sentiment::negative) {
                    auto a = attribute_failure_stage(r, verdict_for(id));
                    if (a.stage == StageName::rephrasal &&
                        d_.triage->open(id, DatasetTask::rephrasal, r.trace.query, r.trace.expert_selected,
                                        "acronym missing from rephrased queries")) {
                        ++report.triage_opened;
                    }
                }
            }

            if (config.auto_label_from) {
                std::map<std::pair<std::string, DatasetTask>, InjectedError> truth;
                for (auto& e : load_ground_truth(*config.auto_label_from)) truth[{e.trace_id, e.kind}] = e;
                for (const auto& item : d_.triage->list(TriageStatus::pending)) {
                    auto it = truth.find({item.trace_id, item.kind});
                    if (it == truth.end()) {
                        d_.triage->dismiss(item.item_id);
                    } else if (item.kind == DatasetTask::router) {
                        d_.triage->label(item.item_id, it->second.correct_expert);
                    } else if (it->second.correct_variations.size() >= 2) {
                        d_.triage->label(item.item_id, it->second.correct_variations);
                    } else {
                        d_.triage->dismiss(item.item_id);
                    }
                }
            }

            std::map<std::string, TriageStatus> router_review;
            for (const auto& item : d_.triage->list()) {
                if (item.kind == DatasetTask::router) router_review[item.trace_id] = item.status;
            }
            std::vector<AttributionResult> attributions;
            std::int64_t confirmed = 0;
            for (const auto& r : records) {
                if (r.sentiment != Sentiment::negative) continue;
                auto verdict = verdict_for(r.trace.trace_id);
                auto review = router_review.find(r.trace.trace_id);
                if (review != router_review.end() && review->second == TriageStatus::confirmed_error) {
                    attributions.push_back({r.trace.trace_id, StageName::router, AttributionMethod::sme_override, 1.0});
                    ++confirmed;
                    continue;
                }
                if (review != router_review.end() && review->second == TriageStatus::dismissed) verdict.reset();
                attributions.push_back(attribute_failure_stage(r, verdict));
            }
            if (report.negatives > 0) {
                auto er = error_report(records, attributions, report.window);
                er.judge_flagged = static_cast<std::int64_t>(flagged.size());
                er.sme_confirmed = confirmed;
                er.unjudged = static_cast<std::int64_t>(unjudged);
                report.errors = er;
            }
            report.analyze = {SectionStatus::ok, std::to_string(flagged.size()) + " routing flags, " +
                                                     std::to_string(unjudged) + " unjudged"};
        } catch (const std::exception& e) {
            report.analyze = {SectionStatus::failed, describe(e)};
        }
    }

    // Plan
    std::map<DatasetTask, std::pair<std::string, std::vector<DatasetExample>>> test_splits;
    if (report.monitor.status == SectionStatus::ok) {
        try {
            std::vector<std::string> notes;
            auto persist = [&](DatasetTask task, std::vector<DatasetExample> examples,
                               const std::vector<double>& ratios, std::size_t corrections) {
                assign_example_ids(examples);
                auto parts = split(examples, ratios, config.seed);
                DatasetSummary s;
                s.dataset_id = std::string(to_string(task)) + "-" + report.cycle_id;
                s.task = task;
                s.size = parts.total();
                s.train = parts.train.size();
                s.validation = parts.validation.size();
                s.test = parts.test.size();
                s.corrections = corrections;
                std::vector<DatasetExample> all;
                for (auto* part : {&parts.train, &parts.validation, &parts.test}) {
                    all.insert(all.end(), part->begin(), part->end());
                }
                json event = {{"dataset_id", s.dataset_id},
                              {"task", std::string(to_string(task))},
                              {"cycle_id", report.cycle_id},
                              {"examples", all}};
                d_.store->append(EventKind::dataset, event.dump());
                test_splits[task] = {s.dataset_id + ":test", parts.test};
                report.datasets.push_back(s);
            };

            auto router_items = d_.triage->unconsumed(DatasetTask::router);
            if (router_items.size() >= config.min_confirmed_errors && !router_items.empty()) {
                std::vector<UnifiedRecord> positives;
                for (const auto& r : records) {
                    if (r.sentiment == Sentiment::positive) positives.push_back(r);
                }
                std::vector<RouterCorrection> corrections;
                std::vector<std::string> used;
                for (const auto& item : router_items) {
                    corrections.push_back({item.query, std::get<ExpertId>(*item.sme_label), item.trace_id});
                    used.push_back(item.item_id);
                }
                persist(DatasetTask::router, dedupe(assemble_router_groundtruth(positives, corrections)),
                        config.router_split, corrections.size());
                d_.triage->mark_consumed(used, report.cycle_id);
            } else {
                notes.push_back("router: " + std::to_string(router_items.size()) + " confirmed corrections, below " +
                                std::to_string(config.min_confirmed_errors));
            }

            auto rephrasal_items = d_.triage->unconsumed(DatasetTask::rephrasal);
            if (rephrasal_items.size() >= config.min_confirmed_errors && !rephrasal_items.empty()) {
                std::vector<DatasetExample> examples;
                std::vector<SynthesisRecord> fewshots;
                std::vector<std::string> used;
                for (const auto& item : rephrasal_items) {
                    const auto& target = std::get<std::vector<std::string>>(*item.sme_label);
                    DatasetExample e;
                    e.task = DatasetTask::rephrasal;
                    e.input = scrub_pii(item.query);
                    e.target = target;
                    e.source = ExampleSource::sme_correction;
                    examples.push_back(e);
                    if (fewshots.size() < config.max_fewshots) {
                        fewshots.push_back({item.query, "", "Keep the specific terms of the question in each query.",
                                            "I need to use the Enterprise Knowledge tool", "EnterpriseKnowledge",
                                            target});
                    }
                    used.push_back(item.item_id);
                }
                const bool can_synthesize = config.synthesis_backend
                                                ? d_.gateway->has_backend(*config.synthesis_backend)
                                                : d_.gateway->bound(CompletionTask::synthesis).has_value();
                if (can_synthesize && config.synthetic_target > 0) {
                    SynthesisOptions opts;
                    opts.backend = config.synthesis_backend;
                    SynthesisStats stats;
                    auto synthetic = generate_synthetic_dataset(*d_.corpus, fewshots, config.synthetic_target,
                                                                *d_.gateway, opts, &stats);
                    examples.insert(examples.end(), synthetic.begin(), synthetic.end());
                    notes.push_back("synthesis: " + std::to_string(synthetic.size()) + " examples from " +
                                    std::to_string(stats.documents_used) + " documents, " +
                                    std::to_string(stats.parse_failures) + " parse failures");
                }
                persist(DatasetTask::rephrasal, dedupe(examples), config.rephrasal_split, used.size());
                d_.triage->mark_consumed(used, report.cycle_id);
            } else {
                notes.push_back("rephrasal: " + std::to_string(rephrasal_items.size()) +
                                " confirmed corrections, below " + std::to_string(config.min_confirmed_errors));
            }
            report.plan = {SectionStatus::ok, text::join(notes, "; ")};
        } catch (const std::exception& e) {
            report.plan = {SectionStatus::failed, describe(e)};
        }
    }

    // Execute
    if (report.monitor.status == SectionStatus::ok) {
        try {
            std::vector<std::string> notes;
            std::map<VariantTask, std::size_t> history_before;
            for (const auto& s : d_.rollouts->states()) history_before[s.task] = s.history.size();

            std::set<VariantTask> started;
            std::optional<std::vector<DatasetExample>> file_testset;
            std::optional<std::vector<RegressionItem>> regression_set;
            if (config.regression_set_path) regression_set = load_regression_set(*config.regression_set_path);

            for (const auto& spec : config.candidates) {
                std::string testset_id;
                std::vector<DatasetExample> testset;
                const auto task = dataset_task_of(spec.task);
                auto built = test_splits.find(task);
                if (built != test_splits.end() && !built->second.second.empty()) {
                    testset_id = built->second.first;
                    testset = built->second.second;
                } else if (config.testset_path) {
                    if (!file_testset) file_testset = import_dataset(*config.testset_path);
                    for (const auto& e : *file_testset) {
                        if (e.task == task) testset.push_back(e);
                    }
                    testset_id = *config.testset_path;
                }
                if (testset.empty()) {
                    notes.push_back(std::string(to_string(spec.task)) + ": no test set");
                    continue;
                }
                const auto& baseline = d_.variants->at(spec.baseline_variant);
                const auto& candidate = d_.variants->at(spec.candidate_variant);
                CandidateOutcome outcome;
                outcome.spec = spec;
                outcome.baseline_eval = evaluate_exact(baseline, testset, testset_id, *d_.gateway);
                outcome.candidate_eval = evaluate_exact(candidate, testset, testset_id, *d_.gateway);
                if (regression_set) {
                    outcome.baseline_regression = evaluate_regression_judged(
                        baseline, *regression_set, *d_.agent, *d_.corpus, *d_.gateway, config.regression_judge_backend);
                    outcome.candidate_regression = evaluate_regression_judged(
                        candidate, *regression_set, *d_.agent, *d_.corpus, *d_.gateway, config.regression_judge_backend);
                }
                outcome.decision = gate({outcome.candidate_eval, outcome.candidate_regression},
                                        {outcome.baseline_eval, outcome.baseline_regression}, config.gate);

                if (outcome.decision.outcome == GateOutcome::promote_to_shadow) {
                    auto state = d_.rollouts->state(spec.task);
                    if (!state) {
                        d_.rollouts->initialize(spec.task, spec.baseline_variant, false);
                        state = d_.rollouts->state(spec.task);
                    }
                    const auto kind = state->stage.kind;
                    const bool in_flight = kind == StageKind::shadow || kind == StageKind::canary;
                    const bool already_live = kind == StageKind::full && state->candidate_variant == spec.candidate_variant;
                    if (!in_flight && !already_live) {
                        const double negative_rate =
                            report.traces ? static_cast<double>(report.negatives) / static_cast<double>(report.traces) : 0.0;
                        d_.rollouts->set_baseline(spec.task, {outcome.baseline_eval.accuracy,
                                                              outcome.baseline_eval.mean_latency_ms, negative_rate});
                        d_.rollouts->start(spec.task, spec.candidate_variant,
                                           {outcome.candidate_eval.accuracy, outcome.candidate_eval.mean_latency_ms,
                                            negative_rate});
                        outcome.rollout_started = true;
                        started.insert(spec.task);
                    } else {
                        notes.push_back(std::string(to_string(spec.task)) + ": rollout already " + state->stage.label());
                    }
                }
                report.candidates.push_back(std::move(outcome));
            }

            if (config.advance_rollouts) {
                for (const auto& s : d_.rollouts->states()) {
                    if (started.count(s.task) || !s.candidate_variant) continue;
                    if (s.stage.kind != StageKind::shadow && s.stage.kind != StageKind::canary) continue;
                    auto cand = live_kpis(records, s.task, *s.candidate_variant, flagged);
                    auto active = live_kpis(records, s.task, s.active_variant, flagged);
                    Kpis observed = s.candidate_kpis.value_or(s.baseline_kpis);
                    if (cand.samples >= config.min_kpi_samples && active.samples >= config.min_kpi_samples) {
                        d_.rollouts->set_baseline(s.task, active.kpis);
                        observed = cand.kpis;
                    }
                    try {
                        d_.rollouts->advance(s.task, observed);
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::ApprovalPending) throw;
                        notes.push_back(std::string(to_string(s.task)) + ": awaiting approval");
                    }
                }
            }

            for (const auto& s : d_.rollouts->states()) {
                const std::size_t before = history_before.count(s.task) ? history_before[s.task] : 0;
                for (std::size_t i = before; i < s.history.size(); ++i) report.rollout_transitions.push_back(s.history[i]);
            }
            report.execute = {SectionStatus::ok, text::join(notes, "; ")};
        } catch (const std::exception& e) {
            report.execute = {SectionStatus::failed, describe(e)};
        }
    }

    report.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
    d_.store->append(EventKind::report, json{{"type", "cycle_report"}, {"report", report}}.dump());
    return report;
}

std::optional<CycleReport> FlywheelOrchestrator::find_report(const std::string& cycle_id) const {
    for (const auto& r : reports()) {
        if (r.cycle_id == cycle_id) return r;
    }
    return std::nullopt;
}

std::vector<CycleReport> FlywheelOrchestrator::reports() const {
    std::vector<CycleReport> out;
    for (const auto& ev : d_.store->scan(EventKind::report, TimeWindow::all())) {
        if (ev.payload.find("\"cycle_report\"") == std::string::npos) continue;
        auto j = json::parse(ev.payload);
        if (j.value("type", "") != "cycle_report") continue;
        out.push_back(j.at("report").get<CycleReport>());
    }
    return out;
}

// ---- scheduling ------------------------------------------------------------

FlywheelOrchestrator::Schedule::~Schedule() { stop(); }

void FlywheelOrchestrator::Schedule::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    if (ticker_.joinable()) ticker_.join();
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
}

std::vector<std::string> FlywheelOrchestrator::Schedule::errors() const {
    std::lock_guard lock(const_cast<std::mutex&>(mu_));
    return errors_;
}

std::unique_ptr<FlywheelOrchestrator::Schedule> FlywheelOrchestrator::schedule_cycles(
    std::chrono::milliseconds interval, std::function<CycleConfig()> make_config) {
    if (interval.count() <= 0) throw Error(ErrorCode::InvalidInterval, "schedule interval must be positive");
    auto schedule = std::make_unique<Schedule>();
    Schedule* s = schedule.get();
    s->ticker_ = std::thread([this, s, interval, make_config = std::move(make_config)] {
        auto next = std::chrono::steady_clock::now() + interval;
        for (;;) {
            {
                std::unique_lock lock(s->mu_);
                if (s->cv_.wait_until(lock, next, [s] { return s->stopping_; })) return;
            }
            next += interval;
            if (running_.load()) {
                ++s->skipped_;
                continue;
            }
            for (auto& w : s->workers_) {
                if (w.joinable()) w.join();
            }
            s->workers_.clear();
            s->workers_.emplace_back([this, s, make_config] {
                try {
                    run_cycle(make_config());
                    ++s->completed_;
                } catch (const Error& e) {
                    if (e.code() == ErrorCode::CycleInProgress) {
                        ++s->skipped_;
                        return;
                    }
                    std::lock_guard guard(s->mu_);
                    s->errors_.push_back(e.what());
                } catch (const std::exception& e) {
                    std::lock_guard guard(s->mu_);
                    s->errors_.push_back(e.what());
                }
            });
        }
    });
    return schedule;
}

}  // namespace flywheel
