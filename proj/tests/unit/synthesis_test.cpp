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

#include <gtest/gtest.h>

#include <sstream>

#include "flywheel/curation.hpp"
#include "flywheel/error.hpp"
#include "helpers.hpp"

using namespace flywheel;
using namespace flywheel::fixtures;

namespace {

Document doc(const std::string& id) {
    return {id, "https://intranet.example.com/" + id, "Title " + id, "Body of " + id + ".", "sharepoint"};
}

std::string payload(const std::string& id, int n = 3) {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (int i = 0; i < n; ++i) {
        SynthesisRecord r{"What is item " + std::to_string(i) + " in " + id + "?", "An answer", "thought",
                          "I need to use the Enterprise Knowledge tool", "EnterpriseKnowledge",
                          {id + " item " + std::to_string(i), "item " + std::to_string(i) + " " + id}};
        list.push_back(synthesis_record_json(r));
    }
    return list.dump();
}

Corpus corpus(int n) {
    std::vector<Document> docs;
    for (int i = 0; i < n; ++i) docs.push_back(doc("doc-" + std::to_string(i)));
    return Corpus(docs);
}

void script_synthesis(Gateway& g, int docs, const std::map<std::string, ScriptEntry>& overrides = {}) {
    BackendScript s{"synth", 0, {}};
    s.tasks[CompletionTask::synthesis] = task(1500.0);
    for (int i = 0; i < docs; ++i) {
        const auto id = "doc-" + std::to_string(i);
        auto it = overrides.find(id);
        s.add(CompletionTask::synthesis, id, it != overrides.end() ? it->second : reply(payload(id)));
    }
    g.register_script(s);
    g.bind(CompletionTask::synthesis, "synth");
}

std::vector<std::string> blocks(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line, cur;
    while (std::getline(in, line)) {
        if (line.empty()) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += (cur.empty() ? "" : "\n") + line;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

TEST(Fewshots, DefaultsRenderAsTheGoldenBlocks) {
    auto golden = blocks(read_file(fixture("synthesis_example_blocks.txt")));
    auto shots = default_fewshots();
    ASSERT_EQ(golden.size(), 3u);
    ASSERT_EQ(shots.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(synthesis_record_json(shots[i]).dump(2), golden[i]);
    EXPECT_EQ(load_fewshots(fixture("synthesis_fewshots.json")), shots);
}

TEST(Fewshots, LoadRejectsBadFiles) {
    TempDir dir;
    std::ofstream(dir / "obj.json") << "{}";
    std::ofstream(dir / "bad.json") << "[{\"Question\": \"q\"}]";
    EXPECT_THROW(load_fewshots((dir / "missing.json").string()), Error);
    try {
        load_fewshots((dir / "obj.json").string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
    }
    try {
        load_fewshots((dir / "bad.json").string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    }
}

TEST(SynthesisPrompt, EndsWithDocumentAndSentinel) {
    const auto d = doc("benefits-faq");
    const auto prompt = build_synthesis_prompt(d, default_fewshots());
    const std::string tail = "Generate 3 pairs by following the instructions based on the Input Document.\n"
                             "Strictly return only a Python list of pairs and nothing else.\n"
                             "Input Document: Body of benefits-faq.\n"
                             "Input Document url: https://intranet.example.com/benefits-faq\n"
                             "Output: ###";
    ASSERT_GE(prompt.size(), tail.size());
    EXPECT_EQ(prompt.substr(prompt.size() - tail.size()), tail);
    EXPECT_EQ(prompt.rfind("You are a data annotator generating questions, answers, and rephrased questions", 0), 0u);
    for (const auto& shot : default_fewshots()) {
        EXPECT_NE(prompt.find(synthesis_record_json(shot).dump(2)), std::string::npos);
    }
}

TEST(SynthesisPrompt, RendersEveryFewshotInOrder) {
    auto shots = default_fewshots();
    shots.push_back({"Where is the ESPP portal?", "Finance site", "ESPP portal lookup.",
                     "I need to use the Enterprise Knowledge tool", "EnterpriseKnowledge",
                     {"espp portal", "stock purchase plan site"}});
    const auto prompt = build_synthesis_prompt(doc("d"), shots);
    std::size_t count = 0, pos = 0, last = 0;
    const std::string marker = "Input Document: <Content of input document>\n";
    while ((pos = prompt.find(marker, pos)) != std::string::npos) {
        ++count;
        pos += marker.size();
    }
    EXPECT_EQ(count, 4u);
    for (const auto& s : shots) {
        auto at = prompt.find("\"Question\": " + json(s.question).dump());
        ASSERT_NE(at, std::string::npos);
        EXPECT_GT(at, last);
        last = at;
    }
}

TEST(SynthesisPrompt, Preconditions) {
    auto d = doc("d");
    d.body = "  ";
    try {
        build_synthesis_prompt(d, default_fewshots());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDocument);
    }
    d = doc("d");
    d.url.clear();
    EXPECT_THROW(build_synthesis_prompt(d, default_fewshots()), Error);
    try {
        build_synthesis_prompt(doc("d"), {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
}

TEST(SynthesisParse, ValidPayloadAndFences) {
    auto records = parse_synthesis_output(payload("doc-1"));
    ASSERT_EQ(records.size(), 3u);
    EXPECT_EQ(records[2].action_input[0], "doc-1 item 2");
    EXPECT_EQ(parse_synthesis_output("```json\n" + payload("doc-1") + "\n```"), records);
    EXPECT_TRUE(parse_synthesis_output("[]").empty());
}

TEST(SynthesisParse, SchemaAndParseErrors) {
    auto base = json::parse(payload("d", 1))[0];
    auto expect_code = [](const std::string& raw, ErrorCode code) {
        try {
            parse_synthesis_output(raw);
            FAIL() << raw;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), code) << raw;
        }
    };
    expect_code(base.dump(), ErrorCode::ParseError);
    expect_code("not json", ErrorCode::ParseError);
    for (const char* key : {"Question", "Answer", "Thought", "Process", "Action", "Action Input"}) {
        auto j = base;
        j.erase(key);
        expect_code(json::array({j}).dump(), ErrorCode::SchemaError);
    }
    auto j = base;
    j["Action Input"] = json::array({"one"});
    expect_code(json::array({j}).dump(), ErrorCode::SchemaError);
    j["Action Input"] = "a, b";
    expect_code(json::array({j}).dump(), ErrorCode::SchemaError);
    j = base;
    j["Action"] = "WebSearch";
    expect_code(json::array({j}).dump(), ErrorCode::SchemaError);
    j = base;
    j["Answer"] = 3;
    expect_code(json::array({j}).dump(), ErrorCode::SchemaError);
}

TEST(SynthesisExample, ScrubsPii) {
    SynthesisRecord r{"Email jane.doe@corp.com about nv123456", "a", "t", "p", "EnterpriseKnowledge",
                      {"call +14085551234", "badge nv654321"}};
    auto e = to_rephrasal_example(r, PiiScrubber());
    EXPECT_EQ(e.input, "Email [EMAIL] about [EMPID]");
    EXPECT_EQ(std::get<std::vector<std::string>>(e.target), (std::vector<std::string>{"call [PHONE]", "badge [EMPID]"}));
    EXPECT_EQ(e.source, ExampleSource::synthetic);
    EXPECT_EQ(e.task, DatasetTask::rephrasal);
}

TEST(SynthesisDataset, TwentyDocumentsGiveSixty) {
    Gateway g;
    script_synthesis(g, 20);
    SynthesisStats stats;
    auto out = generate_synthetic_dataset(corpus(20), default_fewshots(), 60, g, {}, &stats);
    EXPECT_EQ(out.size(), 60u);
    EXPECT_EQ(stats.documents_used, 20u);
    for (const auto& e : out) {
        EXPECT_GE(std::get<std::vector<std::string>>(e.target).size(), 2u);
        EXPECT_EQ(json(e).get<DatasetExample>(), e);
    }
    EXPECT_EQ(dedupe(out), out);
}

TEST(SynthesisDataset, StopsAtTargetAndCorpusEnd) {
    Gateway g;
    script_synthesis(g, 20);
    SynthesisStats stats;
    auto out = generate_synthetic_dataset(corpus(20), default_fewshots(), 7, g, {}, &stats);
    EXPECT_EQ(out.size(), 7u);
    EXPECT_EQ(stats.documents_used, 3u);
    EXPECT_EQ(generate_synthetic_dataset(corpus(5), default_fewshots(), 100, g).size(), 15u);
    EXPECT_TRUE(generate_synthetic_dataset(Corpus(), default_fewshots(), 10, g).empty());
}

TEST(SynthesisDataset, SkipsMalformedAndDuplicates) {
    ScriptEntry failing;
    failing.error = "upstream timeout";
    Gateway g;
    script_synthesis(g, 6, {{"doc-1", reply("[{\"Question\": \"q\"}]")},
                                   {"doc-2", reply("Sorry, I cannot help.")},
                                   {"doc-3", reply(payload("doc-0"))},
                                   {"doc-4", failing}});
    SynthesisStats stats;
    auto out = generate_synthetic_dataset(corpus(6), default_fewshots(), 100, g, {}, &stats);
    EXPECT_EQ(out.size(), 6u);
    EXPECT_EQ(stats.parse_failures, 2u);
    EXPECT_EQ(stats.gateway_failures, 1u);
    EXPECT_EQ(stats.log.size(), 3u);
    EXPECT_EQ(stats.log[0].rfind("doc-1: ", 0), 0u);
}

TEST(SynthesisDataset, GatewayFailuresAbortPastBudget) {
    ScriptEntry failing;
    failing.error = "upstream timeout";
    std::map<std::string, ScriptEntry> overrides;
    for (int i = 0; i < 4; ++i) overrides["doc-" + std::to_string(i)] = failing;
    Gateway g;
    script_synthesis(g, 6, overrides);
    SynthesisOptions options;
    options.failure_budget = 3;
    try {
        generate_synthetic_dataset(corpus(6), default_fewshots(), 100, g, options);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ScriptedError);
    }
    options.failure_budget = 4;
    EXPECT_EQ(generate_synthetic_dataset(corpus(6), default_fewshots(), 100, g, options).size(), 6u);

    Gateway unbound;
    options.failure_budget = 0;
    EXPECT_THROW(generate_synthetic_dataset(corpus(2), default_fewshots(), 10, unbound, options), Error);
    Gateway named;
    BackendScript s{"named", 0, {}};
    s.tasks[CompletionTask::synthesis] = task(1500.0);
    s.add(CompletionTask::synthesis, "doc-0", reply(payload("doc-0")));
    s.add(CompletionTask::synthesis, "doc-1", reply(payload("doc-1")));
    named.register_script(s);
    options.backend = "named";
    EXPECT_EQ(generate_synthetic_dataset(corpus(2), default_fewshots(), 10, named, options).size(), 6u);
}
