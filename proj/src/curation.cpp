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

#include "flywheel/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "flywheel/error.hpp"
#include "flywheel/random.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(DatasetTask t) noexcept {
    return t == DatasetTask::router ? "router" : "rephrasal";
}

std::string_view to_string(ExampleSource s) noexcept {
    switch (s) {
        case ExampleSource::organic: return "organic";
        case ExampleSource::sme_correction: return "sme_correction";
        case ExampleSource::synthetic: return "synthetic";
    }
    return "";
}

std::string_view to_string(SplitName s) noexcept {
    switch (s) {
        case SplitName::train: return "train";
        case SplitName::validation: return "validation";
        case SplitName::test: return "test";
    }
    return "";
}

std::optional<DatasetTask> parse_dataset_task(std::string_view s) {
    if (s == "router") return DatasetTask::router;
    if (s == "rephrasal") return DatasetTask::rephrasal;
    return std::nullopt;
}

std::optional<ExampleSource> parse_source(std::string_view s) {
    for (auto v : {ExampleSource::organic, ExampleSource::sme_correction, ExampleSource::synthetic}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

std::optional<SplitName> parse_split(std::string_view s) {
    for (auto v : {SplitName::train, SplitName::validation, SplitName::test}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

void to_json(json& j, const DatasetExample& e) {
    j = json{{"example_id", e.example_id},
             {"task", std::string(to_string(e.task))},
             {"input", e.input},
             {"source", std::string(to_string(e.source))},
             {"split", e.split ? json(std::string(to_string(*e.split))) : json(nullptr)}};
    if (const auto* expert = std::get_if<ExpertId>(&e.target)) {
        j["target"] = std::string(to_string(*expert));
    } else {
        j["target"] = std::get<std::vector<std::string>>(e.target);
    }
}

void from_json(const json& j, DatasetExample& e) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::SchemaError, what); };
    if (!j.is_object()) fail("example is not an object");
    for (const char* key : {"example_id", "task", "input", "target", "source"}) {
        if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
    }
    try {
        e.example_id = j.at("example_id").get<std::string>();
        auto task = parse_dataset_task(j.at("task").get<std::string>());
        if (!task) fail("unknown task");
        e.task = *task;
        e.input = j.at("input").get<std::string>();
        auto source = parse_source(j.at("source").get<std::string>());
        if (!source) fail("unknown source");
        e.source = *source;
        e.split.reset();
        if (j.contains("split") && !j["split"].is_null()) {
            auto split = parse_split(j["split"].get<std::string>());
            if (!split) fail("unknown split");
            e.split = *split;
        }
        const auto& target = j.at("target");
        if (e.task == DatasetTask::router) {
            if (!target.is_string()) fail("router target must be an expert id");
            auto expert = parse_expert(target.get<std::string>());
            if (!expert) fail("unknown expert '" + target.get<std::string>() + "'");
            e.target = *expert;
        } else {
            auto list = target.get<std::vector<std::string>>();
            if (list.size() < 2) fail("rephrasal target needs at least two queries");
            e.target = std::move(list);
        }
    } catch (const json::exception& ex) {
        fail(ex.what());
    }
    if (text::is_blank(e.input)) fail("blank input");
}

std::vector<DatasetExample> assemble_router_groundtruth(
    const std::vector<UnifiedRecord>& positives, const std::vector<RouterCorrection>& corrections) {
    std::set<std::string> corrected;
    for (const auto& c : corrections) corrected.insert(text::normalize_for_dedup(c.query));

    std::vector<DatasetExample> out;
    for (const auto& r : positives) {
        if (!r.trace.expert_selected) continue;
        if (corrected.count(text::normalize_for_dedup(r.trace.query))) continue;
        DatasetExample e;
        e.task = DatasetTask::router;
        e.input = r.trace.query;
        e.target = *r.trace.expert_selected;
        e.source = ExampleSource::organic;
        out.push_back(std::move(e));
    }
    for (const auto& c : corrections) {
        DatasetExample e;
        e.task = DatasetTask::router;
        e.input = c.query;
        e.target = c.expert;
        e.source = ExampleSource::sme_correction;
        out.push_back(std::move(e));
    }
    return out;
}

std::string dedup_key(const DatasetExample& e) {
    std::string key = std::string(to_string(e.task)) + '\x1e' + text::normalize_for_dedup(e.input) + '\x1e';
    if (const auto* expert = std::get_if<ExpertId>(&e.target)) {
        key += to_string(*expert);
    } else {
        for (const auto& q : std::get<std::vector<std::string>>(e.target)) {
            key += text::normalize_for_dedup(q) + '\x1f';
        }
    }
    return key;
}

std::vector<DatasetExample> dedupe(const std::vector<DatasetExample>& examples) {
    std::vector<DatasetExample> out;
    std::map<std::string, std::size_t> seen;
    for (const auto& e : examples) {
        auto [it, inserted] = seen.emplace(dedup_key(e), out.size());
        if (inserted) {
            out.push_back(e);
        } else if (e.source == ExampleSource::sme_correction &&
                   out[it->second].source == ExampleSource::organic) {
            out[it->second] = e;
        }
    }
    return out;
}

SplitResult split(const std::vector<DatasetExample>& examples, const std::vector<double>& ratios,
                  std::uint64_t seed) {
    if (ratios.size() != 2 && ratios.size() != 3) {
        throw Error(ErrorCode::BadRatios, "expected two or three split ratios");
    }
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw Error(ErrorCode::BadRatios, "split ratios must be positive");
        sum += r;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw Error(ErrorCode::BadRatios, "split ratios must sum to 1");

    std::vector<DatasetExample> shuffled = examples;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const std::size_t n = shuffled.size();
    auto share = [n](double r) { return static_cast<std::size_t>(std::floor(n * r + 1e-9)); };
    const std::size_t test_n = share(ratios.back());
    const std::size_t val_n = ratios.size() == 3 ? share(ratios[1]) : 0;
    const std::size_t train_n = n - test_n - val_n;

    SplitResult result;
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = shuffled[i];
        if (i < train_n) {
            e.split = SplitName::train;
            result.train.push_back(std::move(e));
        } else if (i < train_n + val_n) {
            e.split = SplitName::validation;
            result.validation.push_back(std::move(e));
        } else {
            e.split = SplitName::test;
            result.test.push_back(std::move(e));
        }
    }
    return result;
}

void assign_example_ids(std::vector<DatasetExample>& examples, std::size_t first_index) {
    char buf[64];
    for (std::size_t i = 0; i < examples.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s-%06zu", std::string(to_string(examples[i].task)).c_str(),
                      first_index + i);
        examples[i].example_id = buf;
    }
}

std::size_t export_dataset(std::vector<DatasetExample> examples, const std::string& path) {
    std::stable_sort(examples.begin(), examples.end(),
                     [](const auto& a, const auto& b) { return a.example_id < b.example_id; });
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageError, "cannot write dataset '" + path + "'");
    for (const auto& e : examples) out << json(e).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::StorageError, "write failed for '" + path + "'");
    return examples.size();
}

std::vector<DatasetExample> import_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read dataset '" + path + "'");
    std::vector<DatasetExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_blank(line)) continue;
        try {
            out.push_back(json::parse(line).get<DatasetExample>());
        } catch (const std::exception& e) {
            throw Error(ErrorCode::SchemaError,
                        path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace flywheel
