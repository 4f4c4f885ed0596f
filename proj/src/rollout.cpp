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

#include "flywheel/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "flywheel/error.hpp"
#include "flywheel/random.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(VariantTask t) noexcept {
    switch (t) {
        case VariantTask::router: return "router";
        case VariantTask::rephrasal: return "rephrasal";
        case VariantTask::answer: return "answer";
    }
    return "";
}

std::optional<VariantTask> parse_variant_task(std::string_view s) {
    for (auto t : {VariantTask::router, VariantTask::rephrasal, VariantTask::answer}) {
        if (s == to_string(t)) return t;
    }
    return std::nullopt;
}

void to_json(json& j, const ModelVariant& v) {
    j = json{{"variant_id", v.variant_id},
             {"task", std::string(to_string(v.task))},
             {"backend_id", v.backend_id},
             {"size_label", v.size_label},
             {"created_at", format_instant(v.created_at)}};
}

void from_json(const json& j, ModelVariant& v) {
    v.variant_id = j.at("variant_id").get<std::string>();
    auto task = parse_variant_task(j.at("task").get<std::string>());
    if (!task) throw Error(ErrorCode::SchemaError, "unknown variant task");
    v.task = *task;
    v.backend_id = j.at("backend_id").get<std::string>();
    v.size_label = j.value("size_label", "");
    v.created_at = j.contains("created_at") ? parse_instant(j["created_at"].get<std::string>()) : 0;
}

VariantRegistry::VariantRegistry(std::shared_ptr<EventStore> store, std::shared_ptr<const Gateway> gateway,
                                 std::shared_ptr<Clock> clock)
    : store_(std::move(store)), gateway_(std::move(gateway)), clock_(std::move(clock)) {
    for (const auto& ev : store_->scan(EventKind::variant, TimeWindow::all())) {
        auto v = json::parse(ev.payload).get<ModelVariant>();
        variants_[v.variant_id] = v;
    }
}

std::string VariantRegistry::register_variant(ModelVariant variant) {
    if (variant.variant_id.empty()) throw Error(ErrorCode::InvalidArgument, "variant id is empty");
    if (!gateway_->has_backend(variant.backend_id)) {
        throw Error(ErrorCode::UnknownBackend, "unknown backend '" + variant.backend_id + "'");
    }
    std::lock_guard lock(mu_);
    if (variants_.count(variant.variant_id)) {
        throw Error(ErrorCode::DuplicateId, "variant '" + variant.variant_id + "' already registered");
    }
    if (variant.created_at == 0) variant.created_at = clock_->now();
    store_->append(EventKind::variant, json(variant).dump());
    variants_[variant.variant_id] = variant;
    return variant.variant_id;
}

std::optional<ModelVariant> VariantRegistry::find(const std::string& variant_id) const {
    std::lock_guard lock(mu_);
    auto it = variants_.find(variant_id);
    if (it == variants_.end()) return std::nullopt;
    return it->second;
}

const ModelVariant& VariantRegistry::at(const std::string& variant_id) const {
    std::lock_guard lock(mu_);
    auto it = variants_.find(variant_id);
    if (it == variants_.end()) throw Error(ErrorCode::UnknownVariant, "unknown variant '" + variant_id + "'");
    return it->second;
}

std::vector<ModelVariant> VariantRegistry::list() const {
    std::lock_guard lock(mu_);
    std::vector<ModelVariant> out;
    for (const auto& [_, v] : variants_) out.push_back(v);
    return out;
}

void to_json(json& j, const EvalResult& r) {
    j = json{{"variant_id", r.variant_id},
             {"testset_id", r.testset_id},
             {"correct", r.correct},
             {"total", r.total},
             {"accuracy", r.accuracy},
             {"mean_latency_ms", r.mean_latency_ms}};
    std::size_t errors = 0;
    for (const auto& o : r.outcomes) errors += o.gateway_error ? 1 : 0;
    j["gateway_errors"] = errors;
}

namespace {

std::set<std::string> normalized_set(const std::vector<std::string>& items) {
    std::set<std::string> out;
    for (const auto& q : items) out.insert(text::normalize_for_dedup(q));
    return out;
}

}  // namespace

EvalResult evaluate_exact(const ModelVariant& variant, const std::vector<DatasetExample>& testset,
                          const std::string& testset_id, const Gateway& gateway) {
    if (testset.empty()) throw Error(ErrorCode::EmptyTestset, "test set '" + testset_id + "' is empty");
    if (variant.task == VariantTask::answer) {
        throw Error(ErrorCode::InvalidArgument, "exact-match evaluation covers router and rephrasal variants");
    }
    const DatasetTask expected =
        variant.task == VariantTask::router ? DatasetTask::router : DatasetTask::rephrasal;

    EvalResult result;
    result.variant_id = variant.variant_id;
    result.testset_id = testset_id;
    result.total = testset.size();
    double latency_sum = 0.0;
    std::size_t timed = 0;
    for (const auto& ex : testset) {
        if (ex.task != expected) {
            throw Error(ErrorCode::InvalidArgument,
                        "example '" + ex.example_id + "' does not match the variant task");
        }
        ItemOutcome o;
        o.example_id = ex.example_id;
        CompletionRequest req;
        req.key = text::trim(ex.input);
        try {
            if (expected == DatasetTask::router) {
                req.task = CompletionTask::router;
                req.prompt = prompts::router(ex.input, {});
                auto r = gateway.complete(req, variant.backend_id);
                o.output = r.text;
                o.latency_ms = r.latency_ms;
                try {
                    o.correct = parse_route(r.text).first == std::get<ExpertId>(ex.target);
                } catch (const Error&) {
                    o.correct = false;
                }
            } else {
                const auto& target = std::get<std::vector<std::string>>(ex.target);
                req.task = CompletionTask::variations;
                req.prompt = prompts::variations(ex.input, target.size());
                auto r = gateway.complete(req, variant.backend_id);
                o.output = r.text;
                o.latency_ms = r.latency_ms;
                o.correct = normalized_set(parse_query_list(r.text)) == normalized_set(target);
            }
            latency_sum += o.latency_ms;
            ++timed;
        } catch (const Error& e) {
            if (!is_gateway_failure(e.code())) throw;
            o.gateway_error = true;
            o.output = e.what();
        }
        result.correct += o.correct ? 1 : 0;
        result.outcomes.push_back(std::move(o));
    }
    result.accuracy = static_cast<double>(result.correct) / static_cast<double>(result.total);
    result.mean_latency_ms = timed ? latency_sum / static_cast<double>(timed) : 0.0;
    return result;
}

void to_json(json& j, const RegressionScore& r) {
    j = json{{"variant_id", r.variant_id},
             {"correctness", r.correctness},
             {"helpfulness", r.helpfulness},
             {"conscientiousness", r.conscientiousness},
             {"n_queries", r.n_queries},
             {"failed", r.failed}};
}

std::vector<RegressionItem> load_regression_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read regression set '" + path + "'");
    std::vector<RegressionItem> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_blank(line)) continue;
        try {
            auto j = json::parse(line);
            RegressionItem item;
            item.query = j.at("query").get<std::string>();
            item.ground_truth = j.at("ground_truth").get<std::string>();
            item.expected_citations = j.value("expected_citations", std::vector<std::string>{});
            out.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::string build_regression_judge_prompt(const RegressionItem& item, const std::string& answer,
                                          const std::vector<std::string>& citations) {
    std::ostringstream os;
    os << "Grade the assistant answer against the reference answer.\n\n"
       << "Question: " << item.query << '\n'
       << "Reference answer: " << item.ground_truth << '\n'
       << "Expected citations: " << text::join(item.expected_citations, ", ") << '\n'
       << "Assistant answer: " << answer << '\n'
       << "Assistant citations: " << text::join(citations, ", ") << "\n\n"
       << "Score each criterion from 1 to 5 and reply with exactly these lines:\n"
       << "Correctness: <score>\n"
       << "Helpfulness: <score>\n"
       << "Conscientiousness: <score>";
    return os.str();
}

JudgeScores parse_regression_scores(const std::string& raw) {
    std::optional<double> scores[3];
    const char* names[3] = {"correctness:", "helpfulness:", "conscientiousness:"};
    for (const auto& line : text::split_lines(raw)) {
        const auto t = text::trim(line);
        for (int i = 0; i < 3; ++i) {
            const std::string_view name = names[i];
            if (!text::starts_with_icase(t, name)) continue;
            const auto value = text::trim(t.substr(name.size()));
            char* end = nullptr;
            const double v = std::strtod(value.c_str(), &end);
            if (end == value.c_str() || !(v >= 1.0 && v <= 5.0)) {
                throw Error(ErrorCode::MalformedVerdict, "score out of range: '" + t + "'");
            }
            scores[i] = v;
        }
    }
    for (int i = 0; i < 3; ++i) {
        if (!scores[i]) throw Error(ErrorCode::MalformedVerdict, std::string("missing ") + names[i] + " line");
    }
    return {*scores[0], *scores[1], *scores[2]};
}

RegressionScore evaluate_regression_judged(const ModelVariant& variant,
                                           const std::vector<RegressionItem>& regression_set,
                                           const Agent& agent, const Corpus& corpus,
                                           const Gateway& gateway,
                                           const std::optional<std::string>& judge_backend) {
    if (regression_set.empty()) throw Error(ErrorCode::EmptyRegressionSet, "regression set is empty");
    ServingPlan plan;
    switch (variant.task) {
        case VariantTask::router: plan.router_backend = variant.backend_id; break;
        case VariantTask::rephrasal: plan.rephrasal_backend = variant.backend_id; break;
        case VariantTask::answer: plan.answer_backend = variant.backend_id; break;
    }
    plan.served_variants[std::string(to_string(variant.task))] = variant.variant_id;

    RegressionScore score;
    score.variant_id = variant.variant_id;
    double sums[3] = {0, 0, 0};
    std::size_t index = 0;
    for (const auto& item : regression_set) {
        ++index;
        try {
            auto trace = agent.answer_query("regression-" + std::to_string(index), 0, item.query, {},
                                            corpus, plan);
            if (trace.failed_at) {
                ++score.failed;
                continue;
            }
            CompletionRequest req;
            req.task = CompletionTask::regression_judge;
            req.prompt = build_regression_judge_prompt(item, trace.response_text, trace.citations);
            req.key = text::trim(item.query);
            auto r = judge_backend ? gateway.complete(req, *judge_backend) : gateway.complete(req);
            auto s = parse_regression_scores(r.text);
            sums[0] += s.correctness;
            sums[1] += s.helpfulness;
            sums[2] += s.conscientiousness;
            ++score.n_queries;
        } catch (const Error&) {
            ++score.failed;
        }
    }
    if (score.n_queries) {
        const double n = static_cast<double>(score.n_queries);
        score.correctness = sums[0] / n;
        score.helpfulness = sums[1] / n;
        score.conscientiousness = sums[2] / n;
    }
    return score;
}

std::string_view to_string(GateOutcome g) noexcept {
    return g == GateOutcome::promote_to_shadow ? "promote_to_shadow" : "reject";
}

void to_json(json& j, const GateDecision& d) {
    j = json{{"outcome", std::string(to_string(d.outcome))},
             {"reasons", d.reasons},
             {"accuracy_delta", d.accuracy_delta},
             {"latency_reduction", d.latency_reduction}};
}

GateDecision gate(const VariantMetrics& candidate, const VariantMetrics& baseline, const GatePolicy& policy) {
    if (candidate.eval.testset_id != baseline.eval.testset_id) {
        throw Error(ErrorCode::MismatchedTestsets, "candidate evaluated on '" + candidate.eval.testset_id +
                                                       "', baseline on '" + baseline.eval.testset_id + "'");
    }
    constexpr double tol = 1e-12;
    GateDecision d;
    d.accuracy_delta = candidate.eval.accuracy - baseline.eval.accuracy;
    d.latency_reduction = baseline.eval.mean_latency_ms > 0.0
                              ? 1.0 - candidate.eval.mean_latency_ms / baseline.eval.mean_latency_ms
                              : 0.0;
    char buf[160];
    std::vector<std::string> passed;
    std::vector<std::string> failed;

    std::snprintf(buf, sizeof buf, "accuracy %.4f vs baseline %.4f (epsilon %.4f)", candidate.eval.accuracy,
                  baseline.eval.accuracy, policy.accuracy_epsilon);
    (candidate.eval.accuracy >= baseline.eval.accuracy - policy.accuracy_epsilon - tol ? passed : failed)
        .push_back(buf);

    if (candidate.regression && baseline.regression) {
        std::snprintf(buf, sizeof buf, "regression correctness %.3f vs baseline %.3f (tolerance %.3f)",
                      candidate.regression->correctness, baseline.regression->correctness,
                      policy.regression_tolerance);
        (candidate.regression->correctness >=
                 baseline.regression->correctness - policy.regression_tolerance - tol
             ? passed
             : failed)
            .push_back(buf);
    } else if (policy.require_regression) {
        failed.push_back("regression score missing");
    }

    const bool faster = d.latency_reduction >= policy.min_latency_improvement - tol;
    const bool more_accurate = d.accuracy_delta > tol;
    std::snprintf(buf, sizeof buf, "latency reduction %.1f%% (threshold %.1f%%), accuracy delta %+.2f pp",
                  d.latency_reduction * 100.0, policy.min_latency_improvement * 100.0,
                  d.accuracy_delta * 100.0);
    (faster || more_accurate ? passed : failed).push_back(buf);

    if (failed.empty()) {
        d.outcome = GateOutcome::promote_to_shadow;
        d.reasons = std::move(passed);
    } else {
        d.outcome = GateOutcome::reject;
        d.reasons = std::move(failed);
    }
    return d;
}

std::string_view to_string(StageKind s) noexcept {
    switch (s) {
        case StageKind::idle: return "idle";
        case StageKind::shadow: return "shadow";
        case StageKind::canary: return "canary";
        case StageKind::full: return "full";
        case StageKind::rolled_back: return "rolled_back";
    }
    return "";
}

std::optional<StageKind> parse_stage_kind(std::string_view s) {
    for (auto k : {StageKind::idle, StageKind::shadow, StageKind::canary, StageKind::full,
                   StageKind::rolled_back}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::string RolloutStage::label() const {
    if (kind == StageKind::canary) return "canary(" + std::to_string(pct) + ")";
    return std::string(to_string(kind));
}

namespace {

json stage_json(const RolloutStage& s) {
    return json{{"kind", std::string(to_string(s.kind))}, {"pct", s.pct}, {"label", s.label()}};
}

RolloutStage stage_from_json(const json& j) {
    auto kind = parse_stage_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::SchemaError, "unknown rollout stage");
    return {*kind, j.value("pct", 0)};
}

json kpis_json(const Kpis& k) {
    return json{{"accuracy", k.accuracy},
                {"latency_ms", k.latency_ms},
                {"negative_feedback_rate", k.negative_feedback_rate}};
}

Kpis kpis_from_json(const json& j) {
    return {j.value("accuracy", 0.0), j.value("latency_ms", 0.0), j.value("negative_feedback_rate", 0.0)};
}

}  // namespace

void to_json(json& j, const RolloutState& s) {
    json history = json::array();
    for (const auto& t : s.history) {
        history.push_back({{"from", stage_json(t.from)},
                           {"to", stage_json(t.to)},
                           {"active_variant", t.active_variant},
                           {"candidate_variant", t.candidate_variant ? json(*t.candidate_variant) : json(nullptr)},
                           {"at", format_instant(t.at)},
                           {"reason", t.reason}});
    }
    j = json{{"task", std::string(to_string(s.task))},
             {"active_variant", s.active_variant},
             {"candidate_variant", s.candidate_variant ? json(*s.candidate_variant) : json(nullptr)},
             {"stage", stage_json(s.stage)},
             {"baseline_kpis", kpis_json(s.baseline_kpis)},
             {"candidate_kpis", s.candidate_kpis ? kpis_json(*s.candidate_kpis) : json(nullptr)},
             {"history", history},
             {"approval_required", s.approval_required},
             {"awaiting_approval", s.awaiting_approval},
             {"approved", s.approved}};
}

void from_json(const json& j, RolloutState& s) {
    auto task = parse_variant_task(j.at("task").get<std::string>());
    if (!task) throw Error(ErrorCode::SchemaError, "unknown rollout task");
    s.task = *task;
    s.active_variant = j.at("active_variant").get<std::string>();
    s.candidate_variant.reset();
    if (j.contains("candidate_variant") && !j.at("candidate_variant").is_null()) s.candidate_variant = j.at("candidate_variant").get<std::string>();
    s.stage = stage_from_json(j.at("stage"));
    s.baseline_kpis = kpis_from_json(j.at("baseline_kpis"));
    s.candidate_kpis.reset();
    if (j.contains("candidate_kpis") && !j.at("candidate_kpis").is_null()) {
        s.candidate_kpis = kpis_from_json(j.at("candidate_kpis"));
    }
    s.history.clear();
    for (const auto& t : j.at("history")) {
        Transition tr;
        tr.from = stage_from_json(t.at("from"));
        tr.to = stage_from_json(t.at("to"));
        tr.active_variant = t.at("active_variant").get<std::string>();
        if (t.contains("candidate_variant") && !t.at("candidate_variant").is_null()) tr.candidate_variant = t.at("candidate_variant").get<std::string>();
        tr.at = parse_instant(t.at("at").get<std::string>());
        tr.reason = t.value("reason", "");
        s.history.push_back(std::move(tr));
    }
    s.approval_required = j.value("approval_required", false);
    s.awaiting_approval = j.value("awaiting_approval", false);
    s.approved = j.value("approved", false);
}

std::uint32_t traffic_bucket(const std::string& session_id) noexcept {
    return static_cast<std::uint32_t>(stable_hash(session_id) % 10000);
}

std::string assign_traffic(const std::string& session_id, const RolloutState& state) {
    switch (state.stage.kind) {
        case StageKind::shadow:
            return state.active_variant;
        case StageKind::canary:
            return traffic_bucket(session_id) < static_cast<std::uint32_t>(state.stage.pct) * 100
                       ? *state.candidate_variant
                       : state.active_variant;
        case StageKind::full:
            return *state.candidate_variant;
        case StageKind::idle:
        case StageKind::rolled_back:
            break;
    }
    throw Error(ErrorCode::NotRolling, "no rollout in progress for " + std::string(to_string(state.task)));
}

std::vector<std::string> kpi_breaches(const Kpis& observed, const Kpis& baseline, const RolloutPolicy& policy) {
    constexpr double tol = 1e-12;
    std::vector<std::string> out;
    char buf[160];
    if (observed.accuracy < baseline.accuracy - policy.accuracy_epsilon - tol) {
        std::snprintf(buf, sizeof buf, "accuracy %.4f below baseline %.4f", observed.accuracy, baseline.accuracy);
        out.push_back(buf);
    }
    if (baseline.latency_ms > 0.0 &&
        observed.latency_ms > baseline.latency_ms * (1.0 + policy.latency_regression) + tol) {
        std::snprintf(buf, sizeof buf, "latency %.1f ms over baseline %.1f ms", observed.latency_ms,
                      baseline.latency_ms);
        out.push_back(buf);
    }
    if (observed.negative_feedback_rate >
        baseline.negative_feedback_rate + policy.negative_feedback_regression + tol) {
        std::snprintf(buf, sizeof buf, "negative feedback rate %.4f over baseline %.4f",
                      observed.negative_feedback_rate, baseline.negative_feedback_rate);
        out.push_back(buf);
    }
    return out;
}

namespace {

RolloutState with_transition(RolloutState s, RolloutStage to, Instant now, std::string reason) {
    Transition t;
    t.from = s.stage;
    t.to = to;
    s.stage = to;
    t.active_variant = s.active_variant;
    t.candidate_variant = s.candidate_variant;
    t.at = now;
    t.reason = std::move(reason);
    s.history.push_back(std::move(t));
    return s;
}

}  // namespace

RolloutState start_rollout(const RolloutState& state, const std::string& candidate_variant, Instant now,
                           const std::string& reason) {
    const auto kind = state.stage.kind;
    if (kind == StageKind::shadow || kind == StageKind::canary) {
        throw Error(ErrorCode::InvalidArgument,
                    "a rollout is already in progress for " + std::string(to_string(state.task)));
    }
    if (candidate_variant.empty()) throw Error(ErrorCode::InvalidArgument, "candidate variant is empty");
    RolloutState s = state;
    if (kind == StageKind::full && s.candidate_variant) s.active_variant = *s.candidate_variant;
    s.candidate_variant = candidate_variant;
    s.candidate_kpis.reset();
    s.awaiting_approval = false;
    s.approved = false;
    return with_transition(std::move(s), {StageKind::shadow, 0}, now, reason);
}

RolloutState advance_rollout(const RolloutState& state, const Kpis& observed, const RolloutPolicy& policy,
                             Instant now) {
    const auto kind = state.stage.kind;
    if (kind != StageKind::shadow && kind != StageKind::canary) {
        throw Error(ErrorCode::NotRolling,
                    std::string(to_string(state.task)) + " rollout is " + state.stage.label());
    }
    RolloutState s = state;
    s.candidate_kpis = observed;
    auto breaches = kpi_breaches(observed, state.baseline_kpis, policy);
    if (!breaches.empty()) {
        s.awaiting_approval = false;
        return with_transition(std::move(s), {StageKind::rolled_back, 0}, now,
                               "kpi breach: " + text::join(breaches, "; "));
    }
    RolloutStage next{StageKind::full, 0};
    for (int pct : policy.ramp) {
        if (kind == StageKind::shadow || pct > state.stage.pct) {
            next = RolloutStage::canary(pct);
            break;
        }
    }
    if (next.kind == StageKind::full && s.approval_required && !s.approved) {
        throw Error(ErrorCode::ApprovalPending,
                    std::string(to_string(state.task)) + " rollout needs approval before full");
    }
    if (next.kind == StageKind::full) {
        s.awaiting_approval = false;
        s.approved = false;
    }
    return with_transition(std::move(s), next, now, "kpis healthy");
}

RolloutState rollback(const RolloutState& state, Instant now, const std::string& reason) {
    if (state.stage.kind == StageKind::rolled_back) return state;
    if (state.stage.kind == StageKind::idle) {
        throw Error(ErrorCode::NotRolling, "nothing to roll back for " + std::string(to_string(state.task)));
    }
    RolloutState s = state;
    s.awaiting_approval = false;
    s.approved = false;
    return with_transition(std::move(s), {StageKind::rolled_back, 0}, now, reason);
}

RolloutState replay_history(VariantTask task, const std::string& initial_active,
                            const std::vector<Transition>& history) {
    RolloutState s;
    s.task = task;
    s.active_variant = initial_active;
    for (const auto& t : history) {
        if (!(t.from == s.stage)) {
            throw Error(ErrorCode::ValidationError, "transition from " + t.from.label() + " but state is " +
                                                        s.stage.label());
        }
        s.stage = t.to;
        s.active_variant = t.active_variant;
        s.candidate_variant = t.candidate_variant;
        s.history.push_back(t);
    }
    return s;
}

RolloutController::RolloutController(std::shared_ptr<EventStore> store, std::shared_ptr<Clock> clock,
                                     RolloutPolicy policy)
    : store_(std::move(store)), clock_(std::move(clock)), policy_(std::move(policy)) {
    for (const auto& ev : store_->scan(EventKind::rollout, TimeWindow::all())) {
        auto j = json::parse(ev.payload);
        auto s = j.at("state").get<RolloutState>();
        states_[s.task] = std::move(s);
    }
}

void RolloutController::persist(const RolloutState& s, const std::string& event) {
    store_->append(EventKind::rollout, json{{"event", event}, {"state", s}}.dump());
}

RolloutState& RolloutController::at(VariantTask task) {
    auto it = states_.find(task);
    if (it == states_.end()) {
        throw Error(ErrorCode::NotRolling, "no rollout state for " + std::string(to_string(task)));
    }
    return it->second;
}

void RolloutController::initialize(VariantTask task, const std::string& active_variant, bool approval_required,
                                   const Kpis& baseline) {
    std::lock_guard lock(mu_);
    RolloutState s;
    s.task = task;
    s.active_variant = active_variant;
    s.approval_required = approval_required;
    s.baseline_kpis = baseline;
    states_[task] = s;
    persist(s, "initialize");
}

std::optional<RolloutState> RolloutController::state(VariantTask task) const {
    std::lock_guard lock(mu_);
    auto it = states_.find(task);
    if (it == states_.end()) return std::nullopt;
    return it->second;
}

std::vector<RolloutState> RolloutController::states() const {
    std::lock_guard lock(mu_);
    std::vector<RolloutState> out;
    for (const auto& [_, s] : states_) out.push_back(s);
    return out;
}

RolloutState RolloutController::start(VariantTask task, const std::string& candidate_variant,
                                      const Kpis& candidate_offline) {
    std::lock_guard lock(mu_);
    auto& s = at(task);
    auto next = start_rollout(s, candidate_variant, clock_->now());
    next.candidate_kpis = candidate_offline;
    s = next;
    persist(s, "start");
    return s;
}

RolloutState RolloutController::advance(VariantTask task, const Kpis& observed) {
    std::lock_guard lock(mu_);
    auto& s = at(task);
    try {
        s = advance_rollout(s, observed, policy_, clock_->now());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ApprovalPending && !s.awaiting_approval) {
            s.awaiting_approval = true;
            s.candidate_kpis = observed;
            persist(s, "awaiting_approval");
        }
        throw;
    }
    persist(s, "advance");
    return s;
}

RolloutState RolloutController::rollback(VariantTask task, const std::string& reason) {
    std::lock_guard lock(mu_);
    auto& s = at(task);
    auto next = flywheel::rollback(s, clock_->now(), reason);
    if (!(next == s)) {
        s = next;
        persist(s, "rollback");
    }
    return s;
}

RolloutState RolloutController::approve(VariantTask task) {
    std::lock_guard lock(mu_);
    auto& s = at(task);
    const bool at_last_canary = s.stage.kind == StageKind::canary && !policy_.ramp.empty() &&
                                s.stage.pct == policy_.ramp.back();
    const bool pending = s.awaiting_approval || (s.approval_required && !s.approved && at_last_canary);
    if (!pending) {
        throw Error(ErrorCode::NothingPending, "no transition awaiting approval for " + std::string(to_string(task)));
    }
    s.approved = true;
    s.awaiting_approval = false;
    persist(s, "approve");
    return s;
}

void RolloutController::set_approval_required(VariantTask task, bool required) {
    std::lock_guard lock(mu_);
    auto& s = at(task);
    s.approval_required = required;
    persist(s, "set_approval_required");
}

void RolloutController::set_baseline(VariantTask task, const Kpis& baseline) {
    std::lock_guard lock(mu_);
    auto& s = at(task);
    s.baseline_kpis = baseline;
    persist(s, "set_baseline");
}

}  // namespace flywheel
