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

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "flywheel/error.hpp"
#include "flywheel/service.hpp"
#include "flywheel/simulation.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

using namespace flywheel;

int simulate(const SimulationOptions& options, const std::string& out) {
    const auto s = run_simulation(options, out);
    std::printf("sessions %zu  traces %zu  feedback %zu  negatives %zu\n", s.sessions, s.traces, s.feedback,
                s.negatives);
    std::printf("injected routing errors %zu  rephrasal errors %zu\n", s.routing_errors, s.rephrasal_errors);
    std::printf("config %s\nground truth %s\n", s.config_path.string().c_str(), s.ground_truth_path.string().c_str());
    return kOk;
}

int cycle(const std::string& config_path, const std::string& cycle_config, const std::string& out) {
    auto config = load_deployment_config(config_path);
    if (!cycle_config.empty()) config.cycle = load_cycle_config(cycle_config);
    FlywheelOrchestrator orchestrator(open_deployment(config));
    const auto report = orchestrator.run_cycle(config.cycle);
    std::cout << render_cycle_summary(report);
    for (const auto* s : {&report.monitor, &report.analyze, &report.plan, &report.execute}) {
        if (s->status == SectionStatus::failed) std::cerr << "section failed: " << s->detail << '\n';
    }
    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw Error(ErrorCode::StorageError, "cannot write report '" + out + "'");
        f << json(report).dump(2) << '\n';
    }
    const bool failed = report.monitor.status == SectionStatus::failed ||
                        report.analyze.status == SectionStatus::failed ||
                        report.plan.status == SectionStatus::failed ||
                        report.execute.status == SectionStatus::failed;
    return failed ? kFailure : kOk;
}

int serve(const std::string& config_path, const std::string& host, int port) {
    auto config = load_deployment_config(config_path);
    auto orchestrator = std::make_shared<FlywheelOrchestrator>(open_deployment(config));
    ApiService api(orchestrator, config.token);
    const int p = port > 0 ? port : config.port;
    std::fprintf(stderr, "listening on %s:%d\n", host.c_str(), p);
    api.serve(host, p);
    return kOk;
}

int report(const std::string& config_path, const std::string& cycle_id, const std::string& format) {
    FlywheelOrchestrator orchestrator(open_deployment(load_deployment_config(config_path)));
    auto r = orchestrator.find_report(cycle_id);
    if (!r) {
        std::cerr << "unknown cycle '" << cycle_id << "'\n";
        return kFailure;
    }
    if (!r->errors) {
        std::cerr << "cycle '" << cycle_id << "' has no error breakdown\n";
        return kFailure;
    }
    std::cout << (format == "table" ? r->errors->render_table() : r->errors->render_lines());
    return kOk;
}

int export_store(const std::string& config_path, const std::string& out) {
    const auto d = open_deployment(load_deployment_config(config_path));
    const auto n = d.store->export_lines(out);
    std::printf("exported %zu events to %s\n", n, out.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data flywheel for an enterprise RAG agent"};
    app.require_subcommand(1);
    std::string config_path;

    SimulationOptions sim;
    std::string sim_out = "flywheel-sim";
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a scripted deployment with injected errors");
    sim_cmd->add_option("--sessions", sim.sessions, "Number of sessions")->required();
    sim_cmd->add_option("--error-rate", sim.routing_error_rate, "Routing-error injection rate")
        ->check(CLI::Range(0.0, 1.0));
    sim_cmd->add_option("--rephrasal-rate", sim.rephrasal_error_rate, "Rephrasal-error injection rate")
        ->check(CLI::Range(0.0, 1.0));
    sim_cmd->add_option("--judge-noise", sim.judge_noise, "Probability the scripted judge is wrong")
        ->check(CLI::Range(0.0, 1.0));
    sim_cmd->add_option("--seed", sim.seed, "Seed for every random choice");
    sim_cmd->add_flag("!--no-auto-label", sim.auto_label, "Leave triage items for a human reviewer");
    sim_cmd->add_option("--out", sim_out, "Output directory");

    std::string cycle_config, cycle_out;
    auto* cycle_cmd = app.add_subcommand("cycle", "Run one Monitor/Analyze/Plan/Execute cycle");
    cycle_cmd->add_option("--config", config_path, "Deployment file")
        ->required()
        ->envname("FLYWHEEL_CONFIG")
        ->check(CLI::ExistingFile);
    cycle_cmd->add_option("--cycle-config", cycle_config, "Cycle settings overriding the deployment file")
        ->check(CLI::ExistingFile);
    cycle_cmd->add_option("--out", cycle_out, "Write the full report as JSON");

    std::string host = "127.0.0.1";
    int port = 0;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
    serve_cmd->add_option("--config", config_path, "Deployment file")
        ->required()
        ->envname("FLYWHEEL_CONFIG")
        ->check(CLI::ExistingFile);
    serve_cmd->add_option("--port", port, "Port (default from the deployment file)")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--host", host, "Bind address");

    std::string cycle_id, format = "table";
    auto* report_cmd = app.add_subcommand("report", "Print the error breakdown of a past cycle");
    report_cmd->add_option("--config", config_path, "Deployment file")
        ->required()
        ->envname("FLYWHEEL_CONFIG")
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--cycle", cycle_id, "Cycle id")->required();
    report_cmd->add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "lines"}));

    std::string export_out;
    auto* export_cmd = app.add_subcommand("export", "Export the event store as JSON lines");
    export_cmd->add_option("--config", config_path, "Deployment file")
        ->required()
        ->envname("FLYWHEEL_CONFIG")
        ->check(CLI::ExistingFile);
    export_cmd->add_option("--out", export_out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*sim_cmd) return simulate(sim, sim_out);
        if (*cycle_cmd) return cycle(config_path, cycle_config, cycle_out);
        if (*serve_cmd) return serve(config_path, host, port);
        if (*report_cmd) return report(config_path, cycle_id, format);
        if (*export_cmd) return export_store(config_path, export_out);
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
        return kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
