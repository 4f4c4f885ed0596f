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
#include <string>
#include <vector>

#include "flywheel/agent.hpp"
#include "flywheel/curation.hpp"
#include "flywheel/event_store.hpp"
#include "flywheel/gateway.hpp"

namespace flywheel {

enum class VariantTask { router, rephrasal, answer };
std::string_view to_string(VariantTask t) noexcept;
std::optional<VariantTask> parse_variant_task(std::string_view s);

struct ModelVariant {
    std::string variant_id;
    VariantTask task = VariantTask::router;
    std::string backend_id;
    std::string size_label;  // metadata only, e.g. "70B"
    Instant created_at = 0;

    bool operator==(const ModelVariant&) const = default;
};

void to_json(json& j, const ModelVariant& v);
void from_json(const json& j, ModelVariant& v);

/// Variants known to the deployment; persisted as variant events.
class VariantRegistry {
public:
    VariantRegistry(std::shared_ptr<EventStore> store, std::shared_ptr<const Gateway> gateway,
                    std::shared_ptr<Clock> clock);

    /// Throws DuplicateId or UnknownBackend.
    std::string register_variant(ModelVariant variant);
    std::optional<ModelVariant> find(const std::string& variant_id) const;
    const ModelVariant& at(const std::string& variant_id) const;  // throws UnknownVariant
    std::vector<ModelVariant> list() const;

private:
    std::shared_ptr<EventStore> store_;
    std::shared_ptr<const Gateway> gateway_;
    std::shared_ptr<Clock> clock_;
    mutable std::mutex mu_;
    std::map<std::string, ModelVariant> variants_;
};

struct ItemOutcome {
    std::string example_id;
    bool correct = false;
    bool gateway_error = false;
    double latency_ms = 0.0;
    std::string output;
};

struct EvalResult {
    std::string variant_id;
    std::string testset_id;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy = 0.0;  // correct / total
    double mean_latency_ms = 0.0;
    std::vector<ItemOutcome> outcomes;
};

void to_json(json& j, const EvalResult& r);

/// Router items compare the parsed expert with the label; rephrasal items
/// compare normalized sets of rephrased queries. Rephrasal variants are asked
/// through the "variations" task. Gateway failures count as incorrect.
EvalResult evaluate_exact(const ModelVariant& variant, const std::vector<DatasetExample>& testset,
                          const std::string& testset_id, const Gateway& gateway);

struct RegressionItem {
    std::string query;
    std::string ground_truth;
    std::vector<std::string> expected_citations;
};

struct RegressionScore {
    std::string variant_id;
    double correctness = 0.0;
    double helpfulness = 0.0;
    double conscientiousness = 0.0;
    std::size_t n_queries = 0;
    std::size_t failed = 0;
};

void to_json(json& j, const RegressionScore& r);

std::vector<RegressionItem> load_regression_set(const std::string& path);

std::string build_regression_judge_prompt(const RegressionItem& item, const std::string& answer,
                                          const std::vector<std::string>& citations);

struct JudgeScores {
    double correctness = 0.0;
    double helpfulness = 0.0;
    double conscientiousness = 0.0;
};

/// Reads "Correctness: x", "Helpfulness: y", "Conscientiousness: z" lines,
/// each in [1, 5]. Throws MalformedVerdict.
JudgeScores parse_regression_scores(const std::string& raw);

/// Answers every item through `agent` with the variant serving its task,
/// then scores the answer with the regression_judge backend. Items whose
/// answer or judgement fails are excluded and counted in `failed`.
RegressionScore evaluate_regression_judged(const ModelVariant& variant,
                                           const std::vector<RegressionItem>& regression_set,
                                           const Agent& agent, const Corpus& corpus,
                                           const Gateway& gateway,
                                           const std::optional<std::string>& judge_backend = {});

struct VariantMetrics {
    EvalResult eval;
    std::optional<RegressionScore> regression;
};

struct GatePolicy {
    double accuracy_epsilon = 0.005;       // 0.5 pp
    double regression_tolerance = 0.1;     // correctness points
    double min_latency_improvement = 0.10; // fraction of baseline latency
    bool require_regression = true;
};

enum class GateOutcome { promote_to_shadow, reject };
std::string_view to_string(GateOutcome g) noexcept;

struct GateDecision {
    GateOutcome outcome = GateOutcome::reject;
    std::vector<std::string> reasons;  // failed clauses on reject, satisfied ones on promote
    double accuracy_delta = 0.0;       // candidate - baseline
    double latency_reduction = 0.0;    // 1 - candidate/baseline
};

void to_json(json& j, const GateDecision& d);

/// Promote iff accuracy >= baseline - epsilon, regression correctness >=
/// baseline - tolerance, and (latency improves by the threshold or accuracy
/// strictly improves). Throws MismatchedTestsets.
GateDecision gate(const VariantMetrics& candidate, const VariantMetrics& baseline,
                  const GatePolicy& policy = {});

// ---- staged rollout -----------------------------------------------------

enum class StageKind { idle, shadow, canary, full, rolled_back };
std::string_view to_string(StageKind s) noexcept;
std::optional<StageKind> parse_stage_kind(std::string_view s);

struct RolloutStage {
    StageKind kind = StageKind::idle;
    int pct = 0;  // canary only, 1..99

    static RolloutStage canary(int pct) { return {StageKind::canary, pct}; }
    std::string label() const;  // "canary(5)"
    bool operator==(const RolloutStage&) const = default;
};

struct Kpis {
    double accuracy = 0.0;
    double latency_ms = 0.0;
    double negative_feedback_rate = 0.0;

    bool operator==(const Kpis&) const = default;
};

struct Transition {
    RolloutStage from;
    RolloutStage to;
    std::string active_variant;
    std::optional<std::string> candidate_variant;
    Instant at = 0;
    std::string reason;

    bool operator==(const Transition&) const = default;
};

struct RolloutState {
    VariantTask task = VariantTask::router;
    std::string active_variant;
    std::optional<std::string> candidate_variant;
    RolloutStage stage;
    Kpis baseline_kpis;                 // active variant's recent window
    std::optional<Kpis> candidate_kpis; // last observation
    std::vector<Transition> history;
    bool approval_required = false;
    bool awaiting_approval = false;
    bool approved = false;

    bool operator==(const RolloutState&) const = default;
};

void to_json(json& j, const RolloutState& s);
void from_json(const json& j, RolloutState& s);

struct RolloutPolicy {
    std::vector<int> ramp = {5, 50};          // canary percentages before full
    double accuracy_epsilon = 0.005;
    double latency_regression = 0.10;         // fraction over baseline
    double negative_feedback_regression = 0.02;
};

/// Traffic bucket of a session, in [0, 10000).
std::uint32_t traffic_bucket(const std::string& session_id) noexcept;

/// Variant that serves `session_id`. Shadow serves the active variant;
/// canary(p) serves the candidate to buckets below p*100. Throws NotRolling.
std::string assign_traffic(const std::string& session_id, const RolloutState& state);

/// Breached KPI descriptions (empty when healthy).
std::vector<std::string> kpi_breaches(const Kpis& observed, const Kpis& baseline,
                                      const RolloutPolicy& policy);

RolloutState start_rollout(const RolloutState& state, const std::string& candidate_variant,
                           Instant now, const std::string& reason = "gate promoted candidate");

/// Rolls back on any KPI breach; otherwise steps shadow -> canary(ramp...) ->
/// full. Throws NotRolling (idle or rolled back) and ApprovalPending.
RolloutState advance_rollout(const RolloutState& state, const Kpis& observed,
                             const RolloutPolicy& policy, Instant now);

/// Idempotent: an already rolled-back state is returned unchanged.
RolloutState rollback(const RolloutState& state, Instant now,
                      const std::string& reason = "manual rollback");

/// Rebuilds stage/variants by applying `history` from idle. Throws
/// ValidationError if a transition does not start where the previous ended.
RolloutState replay_history(VariantTask task, const std::string& initial_active,
                            const std::vector<Transition>& history);

/// Single writer for every task's rollout state; persists each change as a
/// rollout event.
class RolloutController {
public:
    RolloutController(std::shared_ptr<EventStore> store, std::shared_ptr<Clock> clock,
                      RolloutPolicy policy = {});

    void initialize(VariantTask task, const std::string& active_variant, bool approval_required,
                    const Kpis& baseline = {});
    std::optional<RolloutState> state(VariantTask task) const;
    std::vector<RolloutState> states() const;

    RolloutState start(VariantTask task, const std::string& candidate_variant,
                       const Kpis& candidate_offline = {});
    RolloutState advance(VariantTask task, const Kpis& observed);
    RolloutState rollback(VariantTask task, const std::string& reason = "manual rollback");
    /// Throws NothingPending unless a transition to full is waiting.
    RolloutState approve(VariantTask task);
    void set_approval_required(VariantTask task, bool required);
    void set_baseline(VariantTask task, const Kpis& baseline);

    const RolloutPolicy& policy() const noexcept { return policy_; }

private:
    RolloutState& at(VariantTask task);
    void persist(const RolloutState& s, const std::string& event);

    std::shared_ptr<EventStore> store_;
    std::shared_ptr<Clock> clock_;
    RolloutPolicy policy_;
    mutable std::mutex mu_;
    std::map<VariantTask, RolloutState> states_;
};

}  // namespace flywheel
