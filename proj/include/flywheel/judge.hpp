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

#include <string>
#include <vector>

#include "flywheel/types.hpp"

namespace flywheel {

struct JudgeVerdict {
    std::string trace_id;
    std::string reasoning;
    bool routing_correct = false;
    std::string raw;

    bool operator==(const JudgeVerdict&) const = default;
};

void to_json(json& j, const JudgeVerdict& v);
void from_json(const json& j, JudgeVerdict& v);

/// The seventeen few-shot routing exemplars, each block four lines
/// (Question/Tools/Reasoning/Answer), blocks separated by one blank line.
const std::string& judge_exemplars();

/// Renders the tool list as ['a', 'b'].
std::string render_tool_list(const std::vector<std::string>& aliases);

/// Exemplars, blank line, "QUERY: <query>", newline, "TOOLS: [...]".
/// Throws EmptyTools or UnknownAlias.
std::string build_judge_prompt(const std::string& query, const std::vector<std::string>& tools);

/// Scripted-backend lookup key for judging `query` against `alias`.
std::string judge_script_key(const std::string& query, const std::string& alias);

/// routing_correct comes from the last "Answer: YES|NO" line (any case);
/// reasoning from the last "Reasoning:" line. Throws MalformedVerdict.
JudgeVerdict parse_judge_verdict(const std::string& raw);

}  // namespace flywheel
