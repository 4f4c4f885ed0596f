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

#include "flywheel/judge.hpp"

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

namespace {

const char* const kExemplars = R"EXEMPLARS(Question: How do I submit a referral?
Tools: ['it_benefits_help', 'nvinfo_policies_expert']
Reasoning: This question is related to NVIDIA policy which means it should be sent to either 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: YES

Question: When can I sign up for a new health plan?
Tools: ['finance_expert']
Reasoning: This question is related to employee benefits which means it should be sent to 'it_benefits_help' instead of 'finance_expert'.
Answer: NO

Question: what was NVIDIA's Q3 revenue in fiscal 2024?
Tools: ['finance_expert']
Reasoning: This question is related to NVIDIA's earnings which means it should go to 'finance_expert'.
Answer: YES

Question: Is Mercedes Benz using NVIDIA's digital twin technology?
Tools: ['it_benefits_help', 'nvinfo_policies_expert']
Reasoning: This question is related to NVIDIA's products and therefore should have gone to 'it_benefits_help'.
Answer: YES

Question: What is the vacation policy at NVIDIA?
Tools: ['nvinfo_holiday_expert']
Reasoning: This question is related to NVIDIA policy which means it should be sent to either 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: NO

Question: When is the next free day at NVIDIA?
Tools: ['nvinfo_holiday_expert']
Reasoning: The user is trying to find the date of a holiday which means that the question should be sent to ['nvinfo_holiday_expert'].
Answer: YES

Question: When is the first open stock sale period in 2025?
Tools: ['finance_expert']
Reasoning: This question is related to NVIDIA's company finances and should therefore be sent to 'finance_expert'.
Answer: YES

Question: How many unused vacation days can I carry over?
Tools: ['it_benefits_help', 'nvinfo_policies_expert']
Reasoning: This question is related to NVIDIA policy and employee benefits which means it should be sent to either 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: YES

Question: Who heads up wwfo?
Tools: ['finance_expert']
Reasoning: This question is related to NVIDIA's leadership which means that it should be sent to 'finance_expert'.
Answer: YES

Question: Who is John Smith?
Tools: ['finance_expert']
Reasoning: The user is trying to find information about a specific person which means that this question should go to 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: NO

Question: What are the latest hardware offerings by nvidia?
Tools: ['it_benefits_help', 'nvinfo_policies_expert']
Reasoning: This question is related to NVIDIA's products and therefore should have gone to 'it_benefits_help'.
Answer: YES

Question: What is gb200 nvl72?
Tools: ['finance_expert']
Reasoning: This question is related to NVIDIA's products and therefore should have gone to 'it_benefits_help'.
Answer: NO

Question: When will the 2025 free days be officially announced?
Tools: ['it_benefits_help', 'nvinfo_policies_expert']
Reasoning: This question is related to NVIDIA's policies or benefits, so it should be sent to 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: YES

Question: Does nvidia offer financial advice services?
Tools: ['finance_expert']
Reasoning: This question is related to NVIDIA's policies or benefits, so it should be sent to 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: NO

Question: What was the year-over-year (YoY) and quarter-over-quarter (QoQ) growth for Q2 Fiscal 2025?
Tools: ['finance_expert']
Reasoning: This question is related to NVIDIA's earnings and should therefore be routed to 'finance_expert'.
Answer: YES

Question: How do I order a mouse?
Tools: ['it_benefits_help', 'nvinfo_policies_expert']
Reasoning: This question is related to procuring a work accessory, which means that it should go to either 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: YES

Question: I'm getting a VPN error
Tools: ['finance_expert']
Reasoning: This question is related to an IT issue, which means that it should go to either 'it_benefits_help' or 'nvinfo_policies_expert'.
Answer: NO)EXEMPLARS";

}  // namespace

void to_json(json& j, const JudgeVerdict& v) {
    j = json{{"trace_id", v.trace_id},
             {"reasoning", v.reasoning},
             {"routing_correct", v.routing_correct},
             {"raw", v.raw}};
}

void from_json(const json& j, JudgeVerdict& v) {
    v.trace_id = j.value("trace_id", "");
    v.reasoning = j.value("reasoning", "");
    v.routing_correct = j.at("routing_correct").get<bool>();
    v.raw = j.value("raw", "");
}

const std::string& judge_exemplars() {
    static const std::string text = kExemplars;
    return text;
}

std::string render_tool_list(const std::vector<std::string>& aliases) {
    std::string out = "[";
    for (std::size_t i = 0; i < aliases.size(); ++i) {
        if (i) out += ", ";
        out += "'" + aliases[i] + "'";
    }
    return out + "]";
}

std::string build_judge_prompt(const std::string& query, const std::vector<std::string>& tools) {
    if (tools.empty()) throw Error(ErrorCode::EmptyTools, "judge prompt needs at least one tool");
    for (const auto& t : tools) {
        bool known = false;
        for (auto e : kAllExperts) known = known || judge_alias(e) == t;
        if (!known) throw Error(ErrorCode::UnknownAlias, "unknown judge alias '" + t + "'");
    }
    return judge_exemplars() + "\n\nQUERY: " + query + "\nTOOLS: " + render_tool_list(tools);
}

std::string judge_script_key(const std::string& query, const std::string& alias) {
    return alias + " :: " + query;
}

JudgeVerdict parse_judge_verdict(const std::string& raw) {
    JudgeVerdict v;
    v.raw = raw;
    bool answered = false;
    for (const auto& line : text::split_lines(raw)) {
        const auto t = text::trim(line);
        if (text::starts_with_icase(t, "reasoning:")) {
            v.reasoning = text::trim(t.substr(10));
        } else if (text::starts_with_icase(t, "answer:")) {
            auto tokens = text::tokenize(t.substr(7));
            if (tokens.empty()) continue;
            if (tokens.front() == "yes") {
                v.routing_correct = true;
                answered = true;
            } else if (tokens.front() == "no") {
                v.routing_correct = false;
                answered = true;
            }
        }
    }
    if (!answered) throw Error(ErrorCode::MalformedVerdict, "no Answer line in judge output");
    return v;
}

}  // namespace flywheel
