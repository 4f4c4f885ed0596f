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

#include <cmath>
#include <set>

#include "datasets.hpp"
#include "flywheel/error.hpp"
#include "flywheel/random.hpp"
#include "flywheel/rollout.hpp"
#include "helpers.hpp"

using namespace flywheel;
using namespace flywheel::fixtures;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::InvalidArgument;
}

VariantMetrics metrics(double accuracy, double latency, std::optional<double> correctness = 4.0,
                       const std::string& testset = "ts") {
    VariantMetrics m;
    m.eval.testset_id = testset;
    m.eval.accuracy = accuracy;
    m.eval.mean_latency_ms = latency;
    if (correctness) {
        RegressionScore r;
        r.correctness = *correctness;
        m.regression = r;
    }
    return m;
}

RolloutState idle_state(bool approval = false) {
    RolloutState s;
    s.task = VariantTask::router;
    s.active_variant = "router-70b";
    s.baseline_kpis = {0.9, 250.0, 0.05};
    s.approval_required = approval;
    return s;
}

const Kpis kHealthy{0.95, 90.0, 0.04};

}  // namespace

TEST(EvaluateExact, RouterDialGivesExactCounts) {
    Gateway g;
    auto testset = router_testset(1000);
    script_dial_backend(g, "base", testset, 0.96, 260.0);
    auto r = evaluate_exact({"v", VariantTask::router, "base", "70B", 0}, testset, "ts", g);
    EXPECT_EQ(r.correct, 960u);
    EXPECT_EQ(r.total, 1000u);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.96);
    EXPECT_DOUBLE_EQ(r.mean_latency_ms, 260.0);
    json j = r;
    EXPECT_EQ(j.at("gateway_errors"), 0);
}

TEST(EvaluateExact, RephrasalComparesNormalizedSets) {
    Gateway g;
    auto testset = rephrasal_testset(4);
    BackendScript s{"v", 0, {}};
    s.tasks[CompletionTask::variations] = task(1100.0);
    s.add(CompletionTask::variations, testset[0].input,
          reply(R"(["Employee stock purchase plan form 0.", "ESPP FORM 0"])"));
    s.add(CompletionTask::variations, testset[1].input, reply("espp form 1\nespp form 1"));
    s.add(CompletionTask::variations, testset[2].input, reply("espp form 2\nemployee stock purchase plan form 2", 900.0));
    ScriptEntry failing;
    failing.error = "boom";
    s.add(CompletionTask::variations, testset[3].input, failing);
    g.register_script(s);
    auto r = evaluate_exact({"v", VariantTask::rephrasal, "v", "8B", 0}, testset, "ts", g);
    EXPECT_EQ(r.correct, 2u);
    EXPECT_TRUE(r.outcomes[0].correct);
    EXPECT_FALSE(r.outcomes[1].correct);
    EXPECT_TRUE(r.outcomes[3].gateway_error);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
    EXPECT_DOUBLE_EQ(r.mean_latency_ms, (1100.0 + 1100.0 + 900.0) / 3.0);
}

TEST(EvaluateExact, Preconditions) {
    Gateway g;
    auto testset = router_testset(3);
    script_dial_backend(g, "b", testset, 1.0, 10.0);
    EXPECT_EQ(code_of([&] { evaluate_exact({"v", VariantTask::router, "b", "", 0}, {}, "ts", g); }),
              ErrorCode::EmptyTestset);
    EXPECT_EQ(code_of([&] { evaluate_exact({"v", VariantTask::answer, "b", "", 0}, testset, "ts", g); }),
              ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { evaluate_exact({"v", VariantTask::rephrasal, "b", "", 0}, testset, "ts", g); }),
              ErrorCode::InvalidArgument);
}

TEST(Gate, RouterFineTunePromotesOnLatency) {
    Gateway g;
    auto testset = router_testset(500);
    script_dial_backend(g, "base", testset, 0.96, 260.0, 1);
    script_dial_backend(g, "ft", testset, 0.96, 80.0, 2);
    VariantMetrics base{evaluate_exact({"router-70b", VariantTask::router, "base", "70B", 0}, testset, "ts", g),
                        RegressionScore{"router-70b", 4.2, 4.0, 4.1, 30, 0}};
    VariantMetrics ft{evaluate_exact({"router-8b", VariantTask::router, "ft", "8B", 0}, testset, "ts", g),
                      RegressionScore{"router-8b", 4.15, 4.0, 4.1, 30, 0}};
    auto d = gate(ft, base);
    EXPECT_EQ(d.outcome, GateOutcome::promote_to_shadow);
    EXPECT_DOUBLE_EQ(d.accuracy_delta, 0.0);
    EXPECT_NEAR(d.latency_reduction, 1.0 - 80.0 / 260.0, 1e-12);
    EXPECT_GE(d.latency_reduction, 0.69);
    EXPECT_EQ(d.reasons.size(), 3u);
}

TEST(Gate, RephrasalFineTuneGainsAccuracyAndLatency) {
    Gateway g;
    auto testset = rephrasal_testset(1000);
    script_dial_backend(g, "base", testset, 0.738, 1900.0, 3);
    script_dial_backend(g, "ft", testset, 0.775, 1100.0, 4);
    VariantMetrics base{evaluate_exact({"b", VariantTask::rephrasal, "base", "70B", 0}, testset, "ts", g), {}};
    VariantMetrics ft{evaluate_exact({"f", VariantTask::rephrasal, "ft", "8B", 0}, testset, "ts", g), {}};
    EXPECT_EQ(base.eval.correct, 738u);
    EXPECT_EQ(ft.eval.correct, 775u);
    GatePolicy policy;
    policy.require_regression = false;
    auto d = gate(ft, base, policy);
    EXPECT_EQ(d.outcome, GateOutcome::promote_to_shadow);
    EXPECT_EQ(static_cast<long>(std::lround(d.accuracy_delta * 1000)), 37);
    EXPECT_NEAR(d.latency_reduction * 100.0, 42.0, 1.0);
    EXPECT_EQ(gate(ft, base).outcome, GateOutcome::reject);
}

TEST(Gate, RejectionClauses) {
    auto base = metrics(0.90, 200.0);
    EXPECT_EQ(gate(metrics(0.894, 100.0), base).outcome, GateOutcome::reject);
    EXPECT_EQ(gate(metrics(0.895, 100.0), base).outcome, GateOutcome::promote_to_shadow);
    EXPECT_EQ(gate(metrics(0.90, 100.0, 3.85), base).outcome, GateOutcome::reject);
    EXPECT_EQ(gate(metrics(0.90, 100.0, std::nullopt), base).outcome, GateOutcome::reject);
    EXPECT_EQ(gate(metrics(0.90, 190.0), base).outcome, GateOutcome::reject);
    EXPECT_EQ(gate(metrics(0.91, 190.0), base).outcome, GateOutcome::promote_to_shadow);
    EXPECT_EQ(gate(metrics(0.90, 180.0), base).outcome, GateOutcome::promote_to_shadow);
    auto d = gate(metrics(0.80, 300.0, 3.0), base);
    EXPECT_EQ(d.reasons.size(), 3u);
    EXPECT_EQ(code_of([&] { gate(metrics(0.9, 1.0, 4.0, "other"), base); }), ErrorCode::MismatchedTestsets);
    json j = d;
    EXPECT_EQ(j.at("outcome"), "reject");
}

TEST(GateProperty, MatchesIndependentRule) {
    Rng rng(5);
    for (int round = 0; round < 2000; ++round) {
        const int base_k = static_cast<int>(rng.below(1001));
        const int cand_k = static_cast<int>(rng.below(1001));
        const int base_ms = 1 + static_cast<int>(rng.below(2000));
        const int cand_ms = 1 + static_cast<int>(rng.below(2000));
        const int base_c = 10 + static_cast<int>(rng.below(41));
        const int cand_c = 10 + static_cast<int>(rng.below(41));
        const bool reg = rng.below(4) != 0;
        auto base = metrics(base_k / 1000.0, base_ms, base_c / 10.0);
        auto cand = metrics(cand_k / 1000.0, cand_ms, reg ? std::optional<double>(cand_c / 10.0) : std::nullopt);
        // integer forms of: accuracy within 0.5 pp, correctness within 0.1, latency down 10% or accuracy up
        const bool ok = 2 * cand_k >= 2 * base_k - 10 && reg && cand_c >= base_c - 1 &&
                        (10 * cand_ms <= 9 * base_ms || cand_k > base_k);
        EXPECT_EQ(gate(cand, base).outcome == GateOutcome::promote_to_shadow, ok)
            << cand_k << " " << base_k << " " << cand_ms << " " << base_ms << " " << cand_c << " " << base_c;
    }
}

TEST(Traffic, CanaryFiveOfTenThousand) {
    auto s = start_rollout(idle_state(), "router-8b", kT0);
    s = advance_rollout(s, kHealthy, {}, kT0);
    ASSERT_EQ(s.stage, RolloutStage::canary(5));
    int candidate = 0;
    for (int i = 0; i < 10000; ++i) candidate += assign_traffic("session-" + std::to_string(i), s) == "router-8b";
    EXPECT_NEAR(candidate / 10000.0, 0.05, 0.005);
}

TEST(Traffic, StagesAndStickiness) {
    auto s = idle_state();
    EXPECT_EQ(code_of([&] { assign_traffic("x", s); }), ErrorCode::NotRolling);
    s = start_rollout(s, "router-8b", kT0);
    EXPECT_EQ(assign_traffic("x", s), "router-70b");
    s.stage = {StageKind::full, 0};
    EXPECT_EQ(assign_traffic("x", s), "router-8b");
    s.stage = {StageKind::rolled_back, 0};
    EXPECT_EQ(code_of([&] { assign_traffic("x", s); }), ErrorCode::NotRolling);
    EXPECT_EQ(traffic_bucket("abc"), traffic_bucket("abc"));
    EXPECT_EQ(traffic_bucket("abc"), stable_hash("abc") % 10000);
}

TEST(TrafficProperty, CandidateSetsNestAsRampGrows) {
    auto s = start_rollout(idle_state(), "c", kT0);
    for (int i = 0; i < 3000; ++i) {
        const auto id = "s" + std::to_string(i);
        bool prev = false;
        for (int pct = 1; pct < 100; pct += 7) {
            s.stage = RolloutStage::canary(pct);
            const bool now = assign_traffic(id, s) == "c";
            EXPECT_TRUE(!prev || now);
            prev = now;
        }
    }
}

TEST(StageMachine, RampsToFull) {
    auto s = start_rollout(idle_state(), "router-8b", kT0);
    std::vector<std::string> labels = {s.stage.label()};
    while (s.stage.kind != StageKind::full) {
        s = advance_rollout(s, kHealthy, {}, kT0 + 1);
        labels.push_back(s.stage.label());
    }
    EXPECT_EQ(labels, (std::vector<std::string>{"shadow", "canary(5)", "canary(50)", "full"}));
    EXPECT_EQ(s.history.size(), 4u);
    EXPECT_EQ(s.history.front().from.kind, StageKind::idle);
    EXPECT_EQ(assign_traffic("anyone", s), "router-8b");
    EXPECT_EQ(code_of([&] { advance_rollout(s, kHealthy, {}, kT0); }), ErrorCode::NotRolling);

    auto next = start_rollout(s, "router-1b", kT0 + 2);
    EXPECT_EQ(next.active_variant, "router-8b");
    EXPECT_EQ(next.candidate_variant, "router-1b");
    EXPECT_EQ(code_of([&] { start_rollout(next, "x", kT0); }), ErrorCode::InvalidArgument);
}

TEST(StageMachine, BreachRollsBackAndRollbackIsIdempotent) {
    auto s = start_rollout(idle_state(), "router-8b", kT0);
    s = advance_rollout(s, kHealthy, {}, kT0);
    auto breached = advance_rollout(s, {0.80, 90.0, 0.04}, {}, kT0 + 5);
    EXPECT_EQ(breached.stage.kind, StageKind::rolled_back);
    EXPECT_NE(breached.history.back().reason.find("accuracy"), std::string::npos);
    EXPECT_EQ(breached.active_variant, "router-70b");
    EXPECT_EQ(rollback(breached, kT0 + 9), breached);
    EXPECT_EQ(code_of([&] { advance_rollout(breached, kHealthy, {}, kT0); }), ErrorCode::NotRolling);
    EXPECT_EQ(code_of([&] { rollback(idle_state(), kT0); }), ErrorCode::NotRolling);
    auto manual = rollback(s, kT0 + 3);
    EXPECT_EQ(manual.stage.kind, StageKind::rolled_back);
    EXPECT_EQ(rollback(manual, kT0 + 4), manual);
}

TEST(StageMachine, KpiBreaches) {
    const Kpis base{0.90, 100.0, 0.05};
    RolloutPolicy p;
    EXPECT_TRUE(kpi_breaches({0.895, 110.0, 0.07}, base, p).empty());
    EXPECT_EQ(kpi_breaches({0.894, 110.0, 0.07}, base, p).size(), 1u);
    EXPECT_EQ(kpi_breaches({0.9, 110.1, 0.05}, base, p).size(), 1u);
    EXPECT_EQ(kpi_breaches({0.9, 100.0, 0.071}, base, p).size(), 1u);
    EXPECT_EQ(kpi_breaches({0.5, 500.0, 0.5}, base, p).size(), 3u);
    EXPECT_TRUE(kpi_breaches({0.9, 1e6, 0.05}, {0.9, 0.0, 0.05}, p).empty());
}

TEST(StageMachine, ApprovalGatesFull) {
    auto s = start_rollout(idle_state(true), "r", kT0);
    s = advance_rollout(s, kHealthy, {}, kT0);
    s = advance_rollout(s, kHealthy, {}, kT0);
    EXPECT_EQ(s.stage, RolloutStage::canary(50));
    EXPECT_EQ(code_of([&] { advance_rollout(s, kHealthy, {}, kT0); }), ErrorCode::ApprovalPending);
    s.approved = true;
    s = advance_rollout(s, kHealthy, {}, kT0);
    EXPECT_EQ(s.stage.kind, StageKind::full);
    EXPECT_FALSE(s.approved);
}

TEST(StageMachine, JsonAndReplay) {
    auto s = start_rollout(idle_state(), "router-8b", kT0);
    s = advance_rollout(s, kHealthy, {}, kT0 + 1000);
    s = rollback(s, kT0 + 2000, "operator");
    EXPECT_EQ(json(s).get<RolloutState>(), s);
    auto replayed = replay_history(VariantTask::router, "router-70b", s.history);
    EXPECT_EQ(replayed.stage, s.stage);
    EXPECT_EQ(replayed.candidate_variant, s.candidate_variant);
    auto broken = s.history;
    broken.erase(broken.begin() + 1);
    EXPECT_EQ(code_of([&] { replay_history(VariantTask::router, "router-70b", broken); }),
              ErrorCode::ValidationError);
    EXPECT_EQ(RolloutStage::canary(5).label(), "canary(5)");
    EXPECT_EQ(parse_stage_kind("rolled_back"), StageKind::rolled_back);
}

TEST(StageMachineProperty, RandomWalksKeepInvariants) {
    Rng rng(23);
    RolloutPolicy policy;
    for (int round = 0; round < 300; ++round) {
        auto s = idle_state(rng.below(2) == 0);
        Instant now = kT0;
        for (int step = 0; step < 12; ++step) {
            now += 1000;
            const auto before = s;
            try {
                switch (rng.below(4)) {
                    case 0: s = start_rollout(s, "c" + std::to_string(step), now); break;
                    case 1: s = advance_rollout(s, rng.below(5) ? kHealthy : Kpis{0.1, 1e4, 0.9}, policy, now); break;
                    case 2: s = rollback(s, now); break;
                    default: s.approved = true; break;
                }
            } catch (const Error&) {
                EXPECT_EQ(s, before);
            }
            if (s.stage.kind == StageKind::canary) {
                EXPECT_TRUE(std::find(policy.ramp.begin(), policy.ramp.end(), s.stage.pct) != policy.ramp.end());
            }
            if (s.stage.kind != StageKind::idle) EXPECT_TRUE(s.candidate_variant);
            for (std::size_t i = 1; i < s.history.size(); ++i) {
                EXPECT_EQ(s.history[i].from, s.history[i - 1].to);
                EXPECT_LE(s.history[i - 1].at, s.history[i].at);
                if (s.history[i].from.kind == StageKind::canary && s.history[i].to.kind == StageKind::canary) {
                    EXPECT_GT(s.history[i].to.pct, s.history[i].from.pct);
                }
            }
        }
    }
}

TEST(Controller, PersistsAndReloads) {
    auto clock = std::make_shared<ManualClock>(kT0, 1000);
    auto store = std::make_shared<LogEventStore>(clock);
    RolloutController c(store, clock);
    EXPECT_EQ(code_of([&] { c.advance(VariantTask::router, kHealthy); }), ErrorCode::NotRolling);
    c.initialize(VariantTask::router, "router-70b", false, {0.9, 250.0, 0.05});
    c.initialize(VariantTask::rephrasal, "rephrasal-70b", true, {0.7, 1900.0, 0.05});
    c.start(VariantTask::router, "router-8b", {0.96, 80.0, 0.0});
    c.advance(VariantTask::router, kHealthy);
    c.start(VariantTask::rephrasal, "rephrasal-8b");
    c.advance(VariantTask::rephrasal, {0.78, 1100.0, 0.05});
    c.advance(VariantTask::rephrasal, {0.78, 1100.0, 0.05});
    EXPECT_EQ(code_of([&] { c.advance(VariantTask::rephrasal, {0.78, 1100.0, 0.05}); }), ErrorCode::ApprovalPending);
    EXPECT_TRUE(c.state(VariantTask::rephrasal)->awaiting_approval);
    EXPECT_EQ(code_of([&] { c.approve(VariantTask::router); }), ErrorCode::NothingPending);

    RolloutController reloaded(store, clock);
    EXPECT_EQ(reloaded.states(), c.states());

    c.approve(VariantTask::rephrasal);
    EXPECT_EQ(c.advance(VariantTask::rephrasal, {0.78, 1100.0, 0.05}).stage.kind, StageKind::full);
    const auto size = store->size();
    auto rb = c.rollback(VariantTask::router, "operator");
    EXPECT_EQ(rb.stage.kind, StageKind::rolled_back);
    EXPECT_EQ(c.rollback(VariantTask::router), rb);
    EXPECT_EQ(store->size(), size + 1);
    EXPECT_EQ(RolloutController(store, clock).states(), c.states());
}

TEST(Registry, RegistersAndReloads) {
    auto clock = std::make_shared<ManualClock>(kT0, 1000);
    auto store = std::make_shared<LogEventStore>(clock);
    auto g = std::make_shared<Gateway>();
    script_dial_backend(*g, "ft", router_testset(1), 1.0, 1.0);
    VariantRegistry reg(store, g, clock);
    reg.register_variant({"router-8b", VariantTask::router, "ft", "8B", 0});
    EXPECT_EQ(code_of([&] { reg.register_variant({"router-8b", VariantTask::router, "ft", "8B", 0}); }),
              ErrorCode::DuplicateId);
    EXPECT_EQ(code_of([&] { reg.register_variant({"x", VariantTask::router, "nope", "8B", 0}); }),
              ErrorCode::UnknownBackend);
    EXPECT_EQ(code_of([&] { reg.at("missing"); }), ErrorCode::UnknownVariant);
    EXPECT_EQ(reg.at("router-8b").created_at, kT0);
    VariantRegistry again(store, g, clock);
    EXPECT_EQ(again.list(), reg.list());
    EXPECT_FALSE(again.find("x"));
}

TEST(Regression, ParseScores) {
    auto s = parse_regression_scores("Reasoning...\nCorrectness: 4\nhelpfulness: 3.5\n  Conscientiousness: 5 ");
    EXPECT_DOUBLE_EQ(s.correctness, 4.0);
    EXPECT_DOUBLE_EQ(s.helpfulness, 3.5);
    EXPECT_DOUBLE_EQ(s.conscientiousness, 5.0);
    EXPECT_EQ(code_of([] { parse_regression_scores("Correctness: 4\nHelpfulness: 3"); }), ErrorCode::MalformedVerdict);
    EXPECT_EQ(code_of([] { parse_regression_scores("Correctness: 6\nHelpfulness: 3\nConscientiousness: 2"); }),
              ErrorCode::MalformedVerdict);
    EXPECT_EQ(code_of([] { parse_regression_scores("Correctness: x\nHelpfulness: 3\nConscientiousness: 2"); }),
              ErrorCode::MalformedVerdict);
}

TEST(Regression, JudgedAveragesAndCountsFailures) {
    TempDir dir;
    std::ofstream(dir / "reg.jsonl") << R"({"query": "How do I reset my VPN?", "ground_truth": "Use the portal"})" "\n\n"
                                     << R"({"query": "Travel booking", "ground_truth": "Use the travel site", "expected_citations": ["u"]})" "\n"
                                     << R"({"query": "Cafe hours", "ground_truth": "8 to 5"})" "\n";
    auto items = load_regression_set((dir / "reg.jsonl").string());
    ASSERT_EQ(items.size(), 3u);
    EXPECT_EQ(items[1].expected_citations, std::vector<std::string>{"u"});

    auto g = std::make_shared<Gateway>();
    BackendScript s{"main", 0, {}};
    s.tasks[CompletionTask::router] = task(100.0, "it_benefits_help 0.9");
    s.tasks[CompletionTask::rephrasal] = task(100.0, "{key}");
    s.tasks[CompletionTask::variations] = task(100.0, "{key}\n{key}");
    s.tasks[CompletionTask::answer] = task(100.0, "Use the portal");
    g->register_script(s);
    BackendScript j{"judge", 0, {}};
    j.tasks[CompletionTask::regression_judge] = task(10.0);
    j.add(CompletionTask::regression_judge, items[0].query, reply("Correctness: 5\nHelpfulness: 4\nConscientiousness: 4"));
    j.add(CompletionTask::regression_judge, items[1].query, reply("Correctness: 3\nHelpfulness: 2\nConscientiousness: 4"));
    j.add(CompletionTask::regression_judge, items[2].query, reply("no scores"));
    g->register_script(j);
    for (auto t : {CompletionTask::router, CompletionTask::rephrasal, CompletionTask::variations, CompletionTask::answer}) {
        g->bind(t, "main");
    }
    Agent agent(g, AgentConfig{}, nullptr, std::make_shared<ManualClock>(kT0, 1), std::make_shared<IdGenerator>(1));
    Corpus corpus({{"d", "https://intranet.example.com/d", "VPN", "Reset the VPN through the portal", "it_benefits_help"}});
    auto score = evaluate_regression_judged({"v", VariantTask::router, "main", "", 0}, items, agent, corpus, *g,
                                            std::string("judge"));
    EXPECT_EQ(score.n_queries, 2u);
    EXPECT_EQ(score.failed, 1u);
    EXPECT_DOUBLE_EQ(score.correctness, 4.0);
    EXPECT_DOUBLE_EQ(score.helpfulness, 3.0);
    EXPECT_EQ(code_of([&] { evaluate_regression_judged({"v", VariantTask::router, "main", "", 0}, {}, agent, corpus, *g); }),
              ErrorCode::EmptyRegressionSet);
    const auto prompt = build_regression_judge_prompt(items[1], "ans", {"c1", "c2"});
    EXPECT_NE(prompt.find("Expected citations: u\nAssistant answer: ans\nAssistant citations: c1, c2"), std::string::npos);
}
