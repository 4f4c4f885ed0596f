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
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/agent.hpp"
#include "flywheel/gateway.hpp"
#include "flywheel/monitor.hpp"
#include "flywheel/pii.hpp"
#include "flywheel/types.hpp"

namespace flywheel {

enum class DatasetTask { router, rephrasal };
enum class ExampleSource { organic, sme_correction, synthetic };
enum class SplitName { train, validation, test };

std::string_view to_string(DatasetTask t) noexcept;
std::string_view to_string(ExampleSource s) noexcept;
std::string_view to_string(SplitName s) noexcept;
std::optional<DatasetTask> parse_dataset_task(std::string_view s);
std::optional<ExampleSource> parse_source(std::string_view s);
std::optional<SplitName> parse_split(std::string_view s);

using ExampleTarget = std::variant<ExpertId, std::vector<std::string>>;

struct DatasetExample {
    std::string example_id;
    DatasetTask task = DatasetTask::router;
    std::string input;
    ExampleTarget target = ExpertId::sharepoint;
    ExampleSource source = ExampleSource::organic;
    std::optional<SplitName> split;

    bool operator==(const DatasetExample&) const = default;
};

void to_json(json& j, const DatasetExample& e);
/// Throws SchemaError on missing fields or a target that breaks the
/// invariants (router target must name an expert; rephrasal needs >= 2 entries).
void from_json(const json& j, DatasetExample& e);

/// An SME-confirmed routing label.
struct RouterCorrection {
    std::string query;
    ExpertId expert = ExpertId::sharepoint;
    std::string trace_id;
};

/// Organic examples from positively rated records (query -> routed expert),
/// then SME corrections. A correction replaces any organic example whose
/// normalized query collides with it.
std::vector<DatasetExample> assemble_router_groundtruth(
    const std::vector<UnifiedRecord>& positives, const std::vector<RouterCorrection>& corrections);

/// (task, normalized input, normalized target) as one string.
std::string dedup_key(const DatasetExample& e);

/// Key (task, normalized input, normalized target). First occurrence wins,
/// except an sme_correction displaces an organic duplicate in place.
std::vector<DatasetExample> dedupe(const std::vector<DatasetExample>& examples);

struct SplitResult {
    std::vector<DatasetExample> train;
    std::vector<DatasetExample> validation;
    std::vector<DatasetExample> test;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

/// Two ratios give train/test, three give train/validation/test. Each
/// partition gets floor(n * ratio); the remainder goes to train. Throws BadRatios.
SplitResult split(const std::vector<DatasetExample>& examples, const std::vector<double>& ratios,
                  std::uint64_t seed);

/// Assigns "<task>-<6 digit index>" ids in order, starting at `first_index`.
void assign_example_ids(std::vector<DatasetExample>& examples, std::size_t first_index = 1);

/// One example per line, ordered by example_id. Returns the count written.
std::size_t export_dataset(std::vector<DatasetExample> examples, const std::string& path);
/// Throws SchemaError naming the 1-based line number of a malformed line.
std::vector<DatasetExample> import_dataset(const std::string& path);

// ---- synthetic rephrasal data -------------------------------------------

struct SynthesisRecord {
    std::string question;
    std::string answer;
    std::string thought;
    std::string process;
    std::string action;  // always "EnterpriseKnowledge"
    std::vector<std::string> action_input;

    bool operator==(const SynthesisRecord&) const = default;
};

/// Key order as in the prompt: Question, Answer, Thought, Process, Action, Action Input.
nlohmann::ordered_json synthesis_record_json(const SynthesisRecord& r);
/// The three worked examples that ship with the generation prompt.
std::vector<SynthesisRecord> default_fewshots();
std::vector<SynthesisRecord> load_fewshots(const std::string& path);

/// Throws EmptyDocument when the body or url is blank, InvalidArgument when
/// there are no few-shots.
std::string build_synthesis_prompt(const Document& doc, const std::vector<SynthesisRecord>& fewshots);

/// Expects a JSON list of records. Throws ParseError when the payload is not
/// a list, SchemaError when a record is missing a key, has the wrong shape, or
/// carries fewer than two rephrased queries.
std::vector<SynthesisRecord> parse_synthesis_output(const std::string& raw);

DatasetExample to_rephrasal_example(const SynthesisRecord& r, const PiiScrubber& scrubber);

struct SynthesisOptions {
    std::size_t failure_budget = 10;  // gateway failures tolerated before aborting
    std::optional<std::string> backend;
};

struct SynthesisStats {
    std::size_t documents_used = 0;
    std::size_t parse_failures = 0;
    std::size_t gateway_failures = 0;
    std::vector<std::string> log;
};

/// Walks the corpus in order, one generation call per document, until
/// `target_count` unique examples exist or the corpus runs out.
std::vector<DatasetExample> generate_synthetic_dataset(const Corpus& corpus,
                                                       const std::vector<SynthesisRecord>& fewshots,
                                                       std::size_t target_count,
                                                       const Gateway& gateway,
                                                       const SynthesisOptions& options = {},
                                                       SynthesisStats* stats = nullptr);

}  // namespace flywheel
