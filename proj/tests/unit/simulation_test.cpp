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

#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "flywheel/error.hpp"
#include "flywheel/simulation.hpp"
#include "helpers.hpp"

using namespace flywheel;
using namespace flywheel::fixtures;

namespace {

SimulationOptions options(std::size_t sessions, std::uint64_t seed = 1) {
    SimulationOptions o;
    o.sessions = sessions;
    o.seed = seed;
    return o;
}

#ifdef FLYWHEEL_CLI
struct Run {
    int status = -1;
    std::string output;
};

Run cli(const std::string& args) {
    Run r;
    const std::string cmd = std::string(FLYWHEEL_CLI) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int raw = ::pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

#endif

}  // namespace

TEST(Simulation, SameSeedSameWorld) {
    TempDir a, b, c;
    auto sa = run_simulation(options(200, 5), a.path());
    auto sb = run_simulation(options(200, 5), b.path());
    auto sc = run_simulation(options(200, 6), c.path());
    EXPECT_EQ(read_file(a / "store/events.log"), read_file(b / "store/events.log"));
    EXPECT_EQ(read_file(a / "ground_truth.jsonl"), read_file(b / "ground_truth.jsonl"));
    EXPECT_EQ(read_file(a / "corpus.jsonl"), read_file(b / "corpus.jsonl"));
    EXPECT_NE(read_file(a / "store/events.log"), read_file(c / "store/events.log"));
    EXPECT_EQ(sa.traces, sb.traces);
}

TEST(Simulation, InjectionCountsAreExact) {
    TempDir dir;
    auto o = options(1000);
    auto s = run_simulation(o, dir.path());
    EXPECT_GE(s.traces, 1000u);
    EXPECT_EQ(s.routing_errors, static_cast<std::size_t>(std::llround(0.05 * s.traces)));
    EXPECT_EQ(s.rephrasal_errors, static_cast<std::size_t>(std::llround(0.03 * s.traces)));
    auto truth = load_ground_truth(s.ground_truth_path.string());
    EXPECT_EQ(truth.size(), s.routing_errors + s.rephrasal_errors);
    std::set<std::string> ids;
    for (const auto& e : truth) {
        EXPECT_TRUE(ids.insert(e.trace_id).second);
        if (e.kind == DatasetTask::router) {
            ASSERT_TRUE(e.served_expert);
            EXPECT_NE(*e.served_expert, e.correct_expert);
        } else {
            EXPECT_GE(e.correct_variations.size(), 2u);
        }
        EXPECT_EQ(json(e).get<InjectedError>().trace_id, e.trace_id);
    }
    auto d = open_deployment(load_deployment_config(s.config_path.string()));
    EXPECT_EQ(d.store->scan(EventKind::trace, TimeWindow::all()).size(), s.traces);
    EXPECT_EQ(d.store->scan(EventKind::feedback, TimeWindow::all()).size(), s.feedback);
    EXPECT_GE(s.negatives, truth.size());
}

TEST(Simulation, ZeroSessionsGivesEmptyStore) {
    TempDir dir;
    auto s = run_simulation(options(0), dir.path());
    EXPECT_EQ(s.traces, 0u);
    EXPECT_EQ(s.feedback, 0u);
    auto d = open_deployment(load_deployment_config(s.config_path.string()));
    EXPECT_TRUE(d.store->scan(EventKind::trace, TimeWindow::all()).empty());
    EXPECT_TRUE(load_ground_truth(s.ground_truth_path.string()).empty());
}

TEST(Simulation, RejectsBadRates) {
    TempDir dir;
    auto o = options(10);
    o.routing_error_rate = 1.5;
    EXPECT_THROW(run_simulation(o, dir.path()), Error);
    o.routing_error_rate = -0.1;
    EXPECT_THROW(run_simulation(o, dir.path()), Error);
}

TEST(DeploymentConfigFile, RoundTripAndValidation) {
    TempDir dir;
    auto s = run_simulation(options(5), dir.path());
    auto c = load_deployment_config(s.config_path.string());
    EXPECT_EQ(c.resolve("store"), dir.path() / "store");
    EXPECT_EQ(c.rollout.ramp, (std::vector<int>{5, 50}));
    EXPECT_EQ(*c.cycle.auto_label_from, (dir / "ground_truth.jsonl").string());

    c.rollout.ramp = {50, 5};
    save_deployment_config(c, (dir / "bad.json").string());
    EXPECT_THROW(load_deployment_config((dir / "bad.json").string()), Error);
    c.rollout.ramp = {5, 100};
    save_deployment_config(c, (dir / "bad.json").string());
    EXPECT_THROW(load_deployment_config((dir / "bad.json").string()), Error);
    EXPECT_THROW(load_deployment_config((dir / "missing.json").string()), Error);
}

#ifdef FLYWHEEL_CLI
TEST(Cli, ExitCodesAndOutputs) {
    TempDir dir;
    const auto out = (dir / "sim").string();
    EXPECT_EQ(cli("simulate").status, 2);
    EXPECT_EQ(cli("frobnicate").status, 2);
    auto sim = cli("simulate --sessions 150 --error-rate 0.1 --seed 4 --out " + out);
    ASSERT_EQ(sim.status, 0) << sim.output;
    const auto config = out + "/deployment.json";
    EXPECT_EQ(cli("cycle --config " + dir.path().string() + "/nope.json").status, 2);
    auto cycle = cli("cycle --config " + config);
    ASSERT_EQ(cycle.status, 0) << cycle.output;

    auto d = open_deployment(load_deployment_config(config));
    std::vector<std::string> cycle_ids;
    for (const auto& ev : d.store->scan(EventKind::report, TimeWindow::all())) {
        auto j = json::parse(ev.payload);
        if (j.value("type", "") == "cycle_report") cycle_ids.push_back(j.at("report").at("cycle_id"));
    }
    ASSERT_EQ(cycle_ids.size(), 1u);
    const auto cycle_id = cycle_ids[0];
    auto table = cli("report --config " + config + " --cycle " + cycle_id);
    EXPECT_EQ(table.status, 0) << table.output;
    EXPECT_NE(table.output.find("unattributed"), std::string::npos);
    auto lines = cli("report --config " + config + " --cycle " + cycle_id + " --format lines");
    EXPECT_EQ(lines.status, 0);
    EXPECT_NE(lines.output.find("router\t"), std::string::npos);
    EXPECT_EQ(cli("report --config " + config + " --cycle cycle-none").status, 1);
    EXPECT_EQ(cli("report --config " + config + " --cycle " + cycle_id + " --format xml").status, 2);
    auto exported = cli("export --config " + config + " --out " + (dir / "events.jsonl").string());
    EXPECT_EQ(exported.status, 0) << exported.output;
    EXPECT_FALSE(read_file(dir / "events.jsonl").empty());
}
#endif
