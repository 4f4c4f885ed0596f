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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flywheel/gateway.hpp"
#include "flywheel/judge.hpp"
#include "flywheel/monitor.hpp"

namespace flywheel {

enum class AttributionMethod { judge, heuristic, sme_override };
std::string_view to_string(AttributionMethod m) noexcept;

struct AttributionResult {
    std::string trace_id;
    std::optional<StageName> stage;  // absent means unattributed
    AttributionMethod method = AttributionMethod::heuristic;
    double confidence = 0.0;

    bool operator==(const AttributionResult&) const = default;
};

/// Judge outcome for one record. Records the judge could not score carry an
/// error instead of a verdict and count as unattributed downstream.
struct JudgedRecord {
    std::string trace_id;
    std::optional<JudgeVerdict> verdict;
    std::string error;

    bool flagged() const { return verdict && !verdict->routing_correct; }
};

/// Routing judge. Each record's query is judged against the alias of the
/// expert it was routed to.
std::vector<JudgedRecord> classify_routing_errors(const std::vector<UnifiedRecord>& records,
                                                  const Gateway& gateway,
                                                  const std::optional<std::string>& backend = {});

/// First matching rule wins:
///   1. the judge says routing was wrong                    -> router
///   2. an upper-case acronym (>= 3 letters) in the query is
///      missing from the rephrased query and every variation -> rephrasal
///   3. nothing was retrieved                               -> retrieval
///   4. a non-empty response without citations             -> citation
///   5. otherwise unattributed
AttributionResult attribute_failure_stage(const UnifiedRecord& record,
                                          const std::optional<JudgeVerdict>& verdict);

/// Hundredths of a percent, rounded half up: count/total*100 to 2 decimals.
std::int64_t percent_hundredths(std::int64_t count, std::int64_t total);
std::string format_percent(std::int64_t hundredths);  // "5.25%"

struct ErrorReport {
    TimeWindow window;
    std::int64_t total_negatives = 0;
    std::map<StageName, std::int64_t> stage_counts;  // every stage present, zero allowed
    std::int64_t unattributed = 0;
    std::int64_t judge_flagged = 0;  // raw judge NO verdicts
    std::int64_t sme_confirmed = 0;  // flags later confirmed by an SME
    std::int64_t unjudged = 0;

    std::int64_t count(StageName s) const;
    std::int64_t percent_hundredths(StageName s) const;
    std::int64_t unattributed_hundredths() const;
    /// Everything not attributed to the listed stages.
    std::int64_t other_count(const std::vector<StageName>& excluded) const;

    /// Fixed-width table: one row per non-zero stage, then Unattributed, then Total.
    std::string render_table() const;
    /// Tab-separated "stage count percent" for every stage, then unattributed and total.
    std::string render_lines() const;
    bool operator==(const ErrorReport&) const = default;
};

void to_json(json& j, const ErrorReport& r);
void from_json(const json& j, ErrorReport& r);

/// Tallies attributions of the negative records. Throws EmptyInput when
/// there are no negatives.
ErrorReport error_report(const std::vector<UnifiedRecord>& records,
                         const std::vector<AttributionResult>& attributions,
                         const TimeWindow& window = {});

}  // namespace flywheel
