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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flywheel/clock.hpp"

namespace flywheel {

using json = nlohmann::json;

/// The seven experts behind the router.
enum class ExpertId {
    financial_info,
    it_benefits_help,
    sharepoint,
    holidays,
    cafe_menu,
    people,
    policies,
};

inline constexpr std::array<ExpertId, 7> kAllExperts = {
    ExpertId::financial_info, ExpertId::it_benefits_help, ExpertId::sharepoint,
    ExpertId::holidays,       ExpertId::cafe_menu,        ExpertId::people,
    ExpertId::policies,
};

std::string_view to_string(ExpertId e) noexcept;
/// Name the routing judge knows the expert by ("finance_expert", ...).
std::string_view judge_alias(ExpertId e) noexcept;
std::optional<ExpertId> parse_expert(std::string_view s);
/// Accepts a canonical id or a judge alias, case-insensitively.
std::optional<ExpertId> expert_from_alias(std::string_view alias);

/// Pipeline stages, which double as the failure points of the RAG pipeline.
enum class StageName {
    router,
    rephrasal,
    retrieval,
    rerank,
    hallucination,
    citation,
    answer_generation,
};

inline constexpr std::array<StageName, 7> kAllStages = {
    StageName::router,        StageName::rephrasal, StageName::retrieval,
    StageName::rerank,        StageName::hallucination, StageName::citation,
    StageName::answer_generation,
};

std::string_view to_string(StageName s) noexcept;
std::optional<StageName> parse_stage(std::string_view s);

struct Document {
    std::string doc_id;
    std::string url;
    std::string title;
    std::string body;
    std::string category;  // knowledge-source label

    bool operator==(const Document&) const = default;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
    std::string url;

    bool operator==(const ScoredDoc&) const = default;
};

struct ResponseTrace {
    std::string trace_id;
    std::string session_id;
    std::int64_t turn_index = 0;
    std::string query;
    std::string rephrased_query;
    std::vector<std::string> query_variations;
    std::optional<ExpertId> expert_selected;
    double route_confidence = 0.0;
    std::string category;
    std::vector<ScoredDoc> ir_results;
    std::vector<std::string> prompts;
    std::string agent_thought;
    std::string response_text;
    std::vector<std::string> citations;
    std::vector<std::string> followups;
    std::map<std::string, bool> guardrail_metrics;
    std::map<StageName, double> stage_latencies;  // milliseconds
    double total_latency = 0.0;
    Instant timestamp = 0;
    std::optional<StageName> failed_at;
    std::string error;
    /// Variant that served each model-backed task ("router" -> variant id).
    std::map<std::string, std::string> served_variants;

    bool operator==(const ResponseTrace&) const = default;
};

void to_json(json& j, const Document& d);
void from_json(const json& j, Document& d);
void to_json(json& j, const ScoredDoc& d);
void from_json(const json& j, ScoredDoc& d);
void to_json(json& j, const ResponseTrace& t);
void from_json(const json& j, ResponseTrace& t);

}  // namespace flywheel
