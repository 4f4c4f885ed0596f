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

#include <fstream>
#include <set>
#include <sstream>

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

namespace {

const char* const kPreamble =
    R"(You are a data annotator generating questions, answers, and rephrased questions from an input document and its URL.

Guidelines
- Identify key phrases and entities in the document and generate questions around them.
- Generate questions answerable using information contained in the input document.
- Do not write questions that require viewing the document to understand the question.
- Avoid phrases like "according to the document/author", "in this document", etc.
- Questions may also be key phrases found in the document.
- Ensure the document contains the complete answer to your question.
- Provide enough context in the question to lead to the specific answer in the document.
- Vary phrasing, vocabulary, complexity, and type of questions.
- Do not copy exact phrasing; use your own words.
- Prefix questions with Question: and answers with Answer:.
- Rephrase each question at least twice (query decomposition/expansion) to aid search.
- Final output must be a Python list.
- Rephrased queries are short, concise keyword/entity mixes; you may replace nvidia with employer or company.
- Provide two or more rephrased queries preserving intent and timeframe.
- If the question asks for "the next X date" without time context, append YYYY (current or next year) in rephrased queries.
  Example: Question: "when is the next NTech conference" -> "upcoming ntech 2024", "ntech dates 2024", "ntech schedule 2025".

Use the EnterpriseKnowledge tool when
The user asks for non-sensitive information such as organization info, direct reports, phone numbers, benefits alternate ID, email addresses, working addresses, tax explanations, updating SSN instructions, or stock trading policies.

Your action format MUST be
Thought: Provide a short analysis of your understanding from the Question.
Process: I need to use the Enterprise Knowledge tool
Action: EnterpriseKnowledge
Action Input: A single line Python list of rephrased queries MUST be generated.

Strict JSON schema (return nothing else)
{
  "type": "object",
  "properties": {
    "Question": {
      "type": "string",
      "description": "Generated Question from the input document."
    },
    "Answer": {
      "type": "string",
      "description": "Corresponding Answer from the input document that answers the Question."
    },
    "Thought": {
      "type": "string",
      "description": "Short analysis of your understanding from the Question."
    },
    "Process": {
      "type": "string",
      "description": "I need to use the Enterprise Knowledge tool."
    },
    "Action": {
      "type": "string",
      "description": "EnterpriseKnowledge"
    },
    "Action Input": {
      "type": "list",
      "description": "A single line Python list of rephrased queries."
    }
  }
}

Examples
)";

const char* const kKeys[] = {"Question", "Answer", "Thought", "Process", "Action", "Action Input"};

SynthesisRecord record_from_json(const json& j) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::SchemaError, what); };
    if (!j.is_object()) fail("synthesis record is not an object");
    for (const char* key : kKeys) {
        if (!j.contains(key)) fail(std::string("synthesis record missing '") + key + "'");
    }
    for (const char* key : {"Question", "Answer", "Thought", "Process", "Action"}) {
        if (!j.at(key).is_string()) fail(std::string("'") + key + "' must be a string");
    }
    SynthesisRecord r;
    r.question = j["Question"].get<std::string>();
    r.answer = j["Answer"].get<std::string>();
    r.thought = j["Thought"].get<std::string>();
    r.process = j["Process"].get<std::string>();
    r.action = j["Action"].get<std::string>();
    if (r.action != "EnterpriseKnowledge") fail("unexpected Action '" + r.action + "'");
    if (text::is_blank(r.question)) fail("blank Question");
    const auto& input = j["Action Input"];
    if (!input.is_array()) fail("'Action Input' must be a list");
    for (const auto& q : input) {
        if (!q.is_string() || text::is_blank(q.get<std::string>())) {
            fail("'Action Input' entries must be non-blank strings");
        }
        r.action_input.push_back(q.get<std::string>());
    }
    if (r.action_input.size() < 2) fail("'Action Input' needs at least two rephrased queries");
    return r;
}

std::string strip_code_fence(const std::string& raw) {
    auto s = text::trim(raw);
    if (s.rfind("```", 0) != 0) return s;
    auto first_nl = s.find('\n');
    if (first_nl == std::string::npos) return s;
    auto last = s.rfind("```");
    if (last <= first_nl) return s;
    return s.substr(first_nl + 1, last - first_nl - 1);
}

}  // namespace

nlohmann::ordered_json synthesis_record_json(const SynthesisRecord& r) {
    nlohmann::ordered_json j;
    j["Question"] = r.question;
    j["Answer"] = r.answer;
    j["Thought"] = r.thought;
    j["Process"] = r.process;
    j["Action"] = r.action;
    j["Action Input"] = r.action_input;
    return j;
}

std::vector<SynthesisRecord> default_fewshots() {
    const std::string process = "I need to use the Enterprise Knowledge tool";
    return {
        {"I am based in the Netherlands, when is pay day?", "25th of every month",
         "Payroll timing question; include location keywords in rephrased queries.", process,
         "EnterpriseKnowledge", {"payday schedule netherlands", "netherlands pay days"}},
        {"point me to gpu fcv page?", "https://nvidia.sharepoint.com/sites/TechnicalTraining/ASIC",
         "Needs GPU FCV (Full Chip Verification) page.", process, "EnterpriseKnowledge",
         {"gpu fcv page company", "fcv gpu url"}},
        {"ok, i'm looking for an nvidia icon for biotech / pharmaceuticals to use in a presentation. "
         "can you help me find that?",
         "https://nvidia.sharepoint.com/sites/nvinfo/brand/Pages/default.aspx",
         "Needs a company icon for biotech/pharma use.", process, "EnterpriseKnowledge",
         {"company icons", "company logos biotech"}},
    };
}

std::vector<SynthesisRecord> load_fewshots(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read few-shot file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::ParseError, path + ": expected a list of records");
    std::vector<SynthesisRecord> out;
    for (const auto& item : j) out.push_back(record_from_json(item));
    return out;
}

std::string build_synthesis_prompt(const Document& doc, const std::vector<SynthesisRecord>& fewshots) {
    if (text::is_blank(doc.body)) throw Error(ErrorCode::EmptyDocument, "document '" + doc.doc_id + "' has no body");
    if (text::is_blank(doc.url)) throw Error(ErrorCode::EmptyDocument, "document '" + doc.doc_id + "' has no url");
    if (fewshots.empty()) throw Error(ErrorCode::InvalidArgument, "synthesis prompt needs few-shot examples");

    std::ostringstream os;
    os << kPreamble;
    for (std::size_t i = 0; i < fewshots.size(); ++i) {
        if (i) os << '\n';
        os << "Input Document: <Content of input document>\n"
           << "Input Document url: <url of input document>\n"
           << "Output\n"
           << synthesis_record_json(fewshots[i]).dump(2) << '\n';
    }
    os << "\nTask output format\n"
       << "Generate 3 pairs by following the instructions based on the Input Document.\n"
       << "Strictly return only a Python list of pairs and nothing else.\n"
       << "Input Document: " << doc.body << '\n'
       << "Input Document url: " << doc.url << '\n'
       << "Output: ###";
    return os.str();
}

std::vector<SynthesisRecord> parse_synthesis_output(const std::string& raw) {
    json j;
    try {
        j = json::parse(strip_code_fence(raw));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("synthesis output is not JSON: ") + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::ParseError, "synthesis output is not a list");
    std::vector<SynthesisRecord> out;
    for (const auto& item : j) out.push_back(record_from_json(item));
    return out;
}

DatasetExample to_rephrasal_example(const SynthesisRecord& r, const PiiScrubber& scrubber) {
    DatasetExample e;
    e.task = DatasetTask::rephrasal;
    e.input = scrubber.scrub(r.question);
    std::vector<std::string> target;
    for (const auto& q : r.action_input) target.push_back(scrubber.scrub(q));
    e.target = std::move(target);
    e.source = ExampleSource::synthetic;
    return e;
}

std::vector<DatasetExample> generate_synthetic_dataset(const Corpus& corpus,
                                                       const std::vector<SynthesisRecord>& fewshots,
                                                       std::size_t target_count, const Gateway& gateway,
                                                       const SynthesisOptions& options,
                                                       SynthesisStats* stats) {
    SynthesisStats local;
    SynthesisStats& st = stats ? *stats : local;
    const PiiScrubber scrubber;
    std::vector<DatasetExample> out;
    std::set<std::string> seen;
    for (const auto& doc : corpus.documents()) {
        if (out.size() >= target_count) break;
        ++st.documents_used;
        CompletionRequest req;
        req.task = CompletionTask::synthesis;
        req.key = doc.doc_id;
        req.params.temperature = 0.7;
        req.params.max_tokens = 1024;
        std::vector<SynthesisRecord> records;
        try {
            req.prompt = build_synthesis_prompt(doc, fewshots);
            auto result = options.backend ? gateway.complete(req, *options.backend) : gateway.complete(req);
            records = parse_synthesis_output(result.text);
        } catch (const Error& e) {
            if (is_gateway_failure(e.code())) {
                ++st.gateway_failures;
                st.log.push_back(doc.doc_id + ": " + e.what());
                if (st.gateway_failures > options.failure_budget) throw;
            } else {
                ++st.parse_failures;
                st.log.push_back(doc.doc_id + ": " + e.what());
            }
            continue;
        }
        for (const auto& r : records) {
            if (out.size() >= target_count) break;
            auto e = to_rephrasal_example(r, scrubber);
            if (seen.insert(dedup_key(e)).second) out.push_back(std::move(e));
        }
    }
    return out;
}

}  // namespace flywheel
