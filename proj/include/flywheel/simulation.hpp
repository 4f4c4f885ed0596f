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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flywheel/agent.hpp"
#include "flywheel/gateway.hpp"
#include "flywheel/orchestrator.hpp"

namespace flywheel {

/// Deployment file shared by the CLI commands. Relative paths resolve
/// against the file's directory.
struct DeploymentConfig {
    std::filesystem::path base_dir;
    std::string store = "store";
    std::string corpus = "corpus.jsonl";
    std::string scripts = "scripts";
    std::map<std::string, std::string> bindings;  // task -> backend id
    int port = 8080;
    std::uint64_t seed = 0;
    std::string token;
    bool fsync = true;
    RolloutPolicy rollout;
    std::map<std::string, bool> approval_required;  // task -> flag
    std::map<std::string, std::string> active_variants; // task -> variant id
    CycleConfig cycle;

    std::filesystem::path resolve(const std::string& p) const;
};

DeploymentConfig load_deployment_config(const std::string& path);
void save_deployment_config(const DeploymentConfig& c, const std::string& path);

/// Opens the store, registers every script under `scripts`, applies the
/// bindings and rollout settings.
Deployment open_deployment(const DeploymentConfig& c, std::shared_ptr<Clock> clock = nullptr);

struct SimulationOptions {
    std::size_t sessions = 1000;
    double routing_error_rate = 0.05;
    double rephrasal_error_rate = 0.03;
    double judge_noise = 0.0;
    double followup_rate = 0.2;
    double positive_rate = 0.55;
    double other_negative_rate = 0.10;
    std::uint64_t seed = 0;
    bool auto_label = true;  // cycle config confirms triage items from the ground truth
};

struct InjectedError {
    std::string trace_id;
    std::string session_id;
    DatasetTask kind = DatasetTask::router;
    std::string query;
    ExpertId correct_expert = ExpertId::sharepoint;
    std::optional<ExpertId> served_expert;
    std::vector<std::string> correct_variations;
};

void to_json(json& j, const InjectedError& e);
void from_json(const json& j, InjectedError& e);
std::vector<InjectedError> load_ground_truth(const std::string& path);

struct SimulationSummary {
    std::size_t sessions = 0;
    std::size_t traces = 0;
    std::size_t feedback = 0;
    std::size_t negatives = 0;
    std::size_t routing_errors = 0;
    std::size_t rephrasal_errors = 0;
    std::filesystem::path config_path;
    std::filesystem::path ground_truth_path;
};

/// Generates a deterministic world (corpus, scripted backends, variants,
/// regression set) and N sessions with injected routing/rephrasal errors
/// and matching feedback, written under `dir`.
SimulationSummary run_simulation(const SimulationOptions& options, const std::filesystem::path& dir);

}  // namespace flywheel
