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

#include "flywheel/analyzer.hpp"

#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(AttributionMethod m) noexcept {
    switch (m) {
        case AttributionMethod::judge: return "judge";
        case AttributionMethod::heuristic: return "heuristic";
        case AttributionMethod::sme_override: return "sme_override";
    }
    return "";
}

std::vector<JudgedRecord> classify_routing_errors(const std::vector<UnifiedRecord>& records,
                                                  const Gateway& gateway,
                                                  const std::optional<std::string>& backend) {
    std::vector<JudgedRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        JudgedRecord jr;
        jr.trace_id = r.trace.trace_id;
        if (!r.trace.expert_selected) {
            jr.error = "no expert was selected";
            out.push_back(std::move(jr));
            continue;
        }
        const std::string alias(judge_alias(*r.trace.expert_selected));
        CompletionRequest req;
        req.task = CompletionTask::judge;
        req.prompt = build_judge_prompt(r.trace.query, {alias});
        req.key = judge_script_key(r.trace.query, alias);
        req.params.temperature = 0.0;
        try {
            auto result = backend ? gateway.complete(req, *backend) : gateway.complete(req);
            auto verdict = parse_judge_verdict(result.text);
            verdict.trace_id = jr.trace_id;
            jr.verdict = std::move(verdict);
        } catch (const Error& e) {
            jr.error = std::string(to_string(e.code())) + ": " + e.what();
        }
        out.push_back(std::move(jr));
    }
    return out;
}

namespace {

bool acronym_lost(const ResponseTrace& t) {
    const auto acronyms = text::uppercase_acronyms(t.query, 3);
    if (acronyms.empty()) return false;
    std::vector<std::set<std::string>> rewrites;
    for (const auto& v : t.query_variations) rewrites.push_back(text::token_set(v));
    if (!t.rephrased_query.empty() && text::normalize_key(t.rephrased_query) != text::normalize_key(t.query)) {
        rewrites.push_back(text::token_set(t.rephrased_query));
    }
    if (rewrites.empty()) return false;
    for (const auto& a : acronyms) {
        const auto token = text::to_lower(a);
        bool kept = false;
        for (const auto& w : rewrites) kept = kept || w.count(token) > 0;
        if (!kept) return true;
    }
    return false;
}

}  // namespace

AttributionResult attribute_failure_stage(const UnifiedRecord& record,
                                          const std::optional<JudgeVerdict>& verdict) {
    const auto& t = record.trace;
    AttributionResult a;
    a.trace_id = t.trace_id;
    if (verdict && !verdict->routing_correct) {
        a.stage = StageName::router;
        a.method = AttributionMethod::judge;
        a.confidence = 0.9;
    } else if (acronym_lost(t)) {
        a.stage = StageName::rephrasal;
        a.confidence = 0.7;
    } else if (t.ir_results.empty()) {
        a.stage = StageName::retrieval;
        a.confidence = 0.8;
    } else if (t.citations.empty() && !text::is_blank(t.response_text)) {
        a.stage = StageName::citation;
        a.confidence = 0.6;
    }
    return a;
}

std::int64_t percent_hundredths(std::int64_t count, std::int64_t total) {
    if (total <= 0) throw Error(ErrorCode::InvalidArgument, "percentage of an empty total");
    return (count * 20000 + total) / (2 * total);
}

std::string format_percent(std::int64_t hundredths) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld%%", static_cast<long long>(hundredths / 100),
                  static_cast<long long>(hundredths % 100));
    return buf;
}

std::int64_t ErrorReport::count(StageName s) const {
    auto it = stage_counts.find(s);
    return it == stage_counts.end() ? 0 : it->second;
}

std::int64_t ErrorReport::percent_hundredths(StageName s) const {
    return flywheel::percent_hundredths(count(s), total_negatives);
}

std::int64_t ErrorReport::unattributed_hundredths() const {
    return flywheel::percent_hundredths(unattributed, total_negatives);
}

std::int64_t ErrorReport::other_count(const std::vector<StageName>& excluded) const {
    std::int64_t n = total_negatives;
    for (auto s : excluded) n -= count(s);
    return n;
}

std::string ErrorReport::render_table() const {
    std::ostringstream os;
    char line[96];
    auto row = [&](const std::string& label, std::int64_t n, const std::string& pct) {
        std::snprintf(line, sizeof line, "%-18s %8lld %9s\n", label.c_str(), static_cast<long long>(n),
                      pct.c_str());
        os << line;
    };
    std::snprintf(line, sizeof line, "%-18s %8s %9s\n", "Stage", "Count", "Percent");
    os << line;
    for (auto s : kAllStages) {
        if (count(s) == 0) continue;
        row(std::string(to_string(s)), count(s), format_percent(percent_hundredths(s)));
    }
    row("unattributed", unattributed, format_percent(unattributed_hundredths()));
    row("total", total_negatives, format_percent(10000));
    return os.str();
}

std::string ErrorReport::render_lines() const {
    std::ostringstream os;
    auto pct = [&](std::int64_t n) {
        return total_negatives > 0 ? format_percent(flywheel::percent_hundredths(n, total_negatives))
                                   : std::string("0.00%");
    };
    for (auto s : kAllStages) os << to_string(s) << '\t' << count(s) << '\t' << pct(count(s)) << '\n';
    os << "unattributed\t" << unattributed << '\t' << pct(unattributed) << '\n';
    os << "total\t" << total_negatives << '\t' << pct(total_negatives) << '\n';
    return os.str();
}

void to_json(json& j, const ErrorReport& r) {
    json counts = json::object();
    json percents = json::object();
    for (auto s : kAllStages) {
        counts[std::string(to_string(s))] = r.count(s);
        percents[std::string(to_string(s))] =
            r.total_negatives > 0 ? format_percent(r.percent_hundredths(s)) : "0.00%";
    }
    j = json{{"window", {{"from", r.window.from}, {"to", r.window.to}}},
             {"total_negatives", r.total_negatives},
             {"stage_counts", counts},
             {"stage_percentages", percents},
             {"unattributed", r.unattributed},
             {"unattributed_percentage",
              r.total_negatives > 0 ? format_percent(r.unattributed_hundredths()) : "0.00%"},
             {"judge_flagged", r.judge_flagged},
             {"sme_confirmed", r.sme_confirmed},
             {"unjudged", r.unjudged}};
}

void from_json(const json& j, ErrorReport& r) {
    r.window.from = j.at("window").at("from").get<Instant>();
    r.window.to = j.at("window").at("to").get<Instant>();
    r.total_negatives = j.at("total_negatives").get<std::int64_t>();
    r.stage_counts.clear();
    for (auto s : kAllStages) {
        r.stage_counts[s] = j.at("stage_counts").value(std::string(to_string(s)), std::int64_t{0});
    }
    r.unattributed = j.at("unattributed").get<std::int64_t>();
    r.judge_flagged = j.value("judge_flagged", std::int64_t{0});
    r.sme_confirmed = j.value("sme_confirmed", std::int64_t{0});
    r.unjudged = j.value("unjudged", std::int64_t{0});
}

ErrorReport error_report(const std::vector<UnifiedRecord>& records,
                         const std::vector<AttributionResult>& attributions, const TimeWindow& window) {
    std::unordered_map<std::string, const AttributionResult*> by_trace;
    for (const auto& a : attributions) by_trace[a.trace_id] = &a;

    ErrorReport report;
    report.window = window;
    for (auto s : kAllStages) report.stage_counts[s] = 0;
    for (const auto& r : records) {
        if (r.sentiment != Sentiment::negative) continue;
        ++report.total_negatives;
        auto it = by_trace.find(r.trace.trace_id);
        if (it == by_trace.end() || !it->second->stage) {
            ++report.unattributed;
            continue;
        }
        const auto& a = *it->second;
        ++report.stage_counts[*a.stage];
        if (a.method == AttributionMethod::judge) ++report.judge_flagged;
        if (a.method == AttributionMethod::sme_override) ++report.sme_confirmed;
    }
    if (report.total_negatives == 0) throw Error(ErrorCode::EmptyInput, "no negative records in window");
    return report;
}

}  // namespace flywheel
