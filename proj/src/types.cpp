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

#include "flywheel/types.hpp"

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(ExpertId e) noexcept {
    switch (e) {
        case ExpertId::financial_info: return "financial_info";
        case ExpertId::it_benefits_help: return "it_benefits_help";
        case ExpertId::sharepoint: return "sharepoint";
        case ExpertId::holidays: return "holidays";
        case ExpertId::cafe_menu: return "cafe_menu";
        case ExpertId::people: return "people";
        case ExpertId::policies: return "policies";
    }
    return "";
}

std::string_view judge_alias(ExpertId e) noexcept {
    switch (e) {
        case ExpertId::financial_info: return "finance_expert";
        case ExpertId::it_benefits_help: return "it_benefits_help";
        case ExpertId::sharepoint: return "nvinfo_sharepoint_expert";
        case ExpertId::holidays: return "nvinfo_holiday_expert";
        case ExpertId::cafe_menu: return "nvinfo_cafe_menu_expert";
        case ExpertId::people: return "nvinfo_people_expert";
        case ExpertId::policies: return "nvinfo_policies_expert";
    }
    return "";
}

std::optional<ExpertId> parse_expert(std::string_view s) {
    for (ExpertId e : kAllExperts) {
        if (text::iequals(s, to_string(e))) return e;
    }
    return std::nullopt;
}

std::optional<ExpertId> expert_from_alias(std::string_view alias) {
    for (ExpertId e : kAllExperts) {
        if (text::iequals(alias, judge_alias(e))) return e;
    }
    return parse_expert(alias);
}

std::string_view to_string(StageName s) noexcept {
    switch (s) {
        case StageName::router: return "router";
        case StageName::rephrasal: return "rephrasal";
        case StageName::retrieval: return "retrieval";
        case StageName::rerank: return "rerank";
        case StageName::hallucination: return "hallucination";
        case StageName::citation: return "citation";
        case StageName::answer_generation: return "answer_generation";
    }
    return "";
}

std::optional<StageName> parse_stage(std::string_view s) {
    for (StageName st : kAllStages) {
        if (s == to_string(st)) return st;
    }
    return std::nullopt;
}

void to_json(json& j, const Document& d) {
    j = json{{"doc_id", d.doc_id}, {"url", d.url}, {"title", d.title},
             {"body", d.body},     {"category", d.category}};
}

void from_json(const json& j, Document& d) {
    d.doc_id = j.at("doc_id").get<std::string>();
    d.url = j.value("url", "");
    d.title = j.value("title", "");
    d.body = j.at("body").get<std::string>();
    d.category = j.value("category", "");
}

void to_json(json& j, const ScoredDoc& d) {
    j = json{{"doc_id", d.doc_id}, {"score", d.score}, {"url", d.url}};
}

void from_json(const json& j, ScoredDoc& d) {
    d.doc_id = j.at("doc_id").get<std::string>();
    d.score = j.at("score").get<double>();
    d.url = j.value("url", "");
}

void to_json(json& j, const ResponseTrace& t) {
    json latencies = json::object();
    for (const auto& [stage, ms] : t.stage_latencies) latencies[std::string(to_string(stage))] = ms;
    j = json{
        {"trace_id", t.trace_id},
        {"session_id", t.session_id},
        {"turn_index", t.turn_index},
        {"query", t.query},
        {"rephrased_query", t.rephrased_query},
        {"query_variations", t.query_variations},
        {"expert_selected",
         t.expert_selected ? json(std::string(to_string(*t.expert_selected))) : json(nullptr)},
        {"route_confidence", t.route_confidence},
        {"category", t.category},
        {"ir_results", t.ir_results},
        {"prompts", t.prompts},
        {"agent_thought", t.agent_thought},
        {"response_text", t.response_text},
        {"citations", t.citations},
        {"followups", t.followups},
        {"guardrail_metrics", t.guardrail_metrics},
        {"stage_latencies", latencies},
        {"total_latency", t.total_latency},
        {"timestamp", format_instant(t.timestamp)},
        {"failed_at", t.failed_at ? json(std::string(to_string(*t.failed_at))) : json(nullptr)},
        {"error", t.error},
        {"served_variants", t.served_variants},
    };
}

void from_json(const json& j, ResponseTrace& t) {
    t.trace_id = j.at("trace_id").get<std::string>();
    t.session_id = j.at("session_id").get<std::string>();
    t.turn_index = j.at("turn_index").get<std::int64_t>();
    t.query = j.at("query").get<std::string>();
    t.rephrased_query = j.value("rephrased_query", "");
    t.query_variations = j.value("query_variations", std::vector<std::string>{});
    t.expert_selected.reset();
    if (j.contains("expert_selected") && !j["expert_selected"].is_null()) {
        auto e = parse_expert(j["expert_selected"].get<std::string>());
        if (!e) throw Error(ErrorCode::SchemaError, "unknown expert in trace");
        t.expert_selected = *e;
    }
    t.route_confidence = j.value("route_confidence", 0.0);
    t.category = j.value("category", "");
    t.ir_results = j.value("ir_results", std::vector<ScoredDoc>{});
    t.prompts = j.value("prompts", std::vector<std::string>{});
    t.agent_thought = j.value("agent_thought", "");
    t.response_text = j.value("response_text", "");
    t.citations = j.value("citations", std::vector<std::string>{});
    t.followups = j.value("followups", std::vector<std::string>{});
    t.guardrail_metrics = j.value("guardrail_metrics", std::map<std::string, bool>{});
    t.stage_latencies.clear();
    if (j.contains("stage_latencies")) {
        for (const auto& [k, v] : j["stage_latencies"].items()) {
            auto st = parse_stage(k);
            if (!st) throw Error(ErrorCode::SchemaError, "unknown stage '" + k + "' in trace");
            t.stage_latencies[*st] = v.get<double>();
        }
    }
    t.total_latency = j.value("total_latency", 0.0);
    t.timestamp = parse_instant(j.at("timestamp").get<std::string>());
    t.failed_at.reset();
    if (j.contains("failed_at") && !j["failed_at"].is_null()) {
        t.failed_at = parse_stage(j["failed_at"].get<std::string>());
    }
    t.error = j.value("error", "");
    t.served_variants = j.value("served_variants", std::map<std::string, std::string>{});
}

}  // namespace flywheel
