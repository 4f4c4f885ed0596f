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

#include "flywheel/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flywheel/error.hpp"
#include "flywheel/pii.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

// ---- corpus --------------------------------------------------------------

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    tokens_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        const auto& d = docs_[i];
        if (d.doc_id.empty()) throw Error(ErrorCode::ValidationError, "document without doc_id");
        if (text::is_blank(d.body)) {
            throw Error(ErrorCode::ValidationError, "document '" + d.doc_id + "' has an empty body");
        }
        if (!index_.emplace(d.doc_id, i).second) {
            throw Error(ErrorCode::ValidationError, "duplicate doc_id '" + d.doc_id + "'");
        }
        tokens_.push_back(text::token_set(d.title + " " + d.body));
    }
}

const Document* Corpus::find(const std::string& doc_id) const {
    auto it = index_.find(doc_id);
    return it == index_.end() ? nullptr : &docs_[it->second];
}

Corpus Corpus::with_category(const std::string& category) const {
    std::vector<Document> subset;
    for (const auto& d : docs_) {
        if (d.category == category) subset.push_back(d);
    }
    return Corpus(std::move(subset));
}

Corpus Corpus::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read corpus " + path);
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        try {
            docs.push_back(json::parse(line).get<Document>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaError,
                        path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return Corpus(std::move(docs));
}

void Corpus::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::StorageError, "cannot write corpus " + path);
    for (const auto& d : docs_) out << json(d).dump() << '\n';
}

// ---- retrieval -----------------------------------------------------------

double TokenOverlapScorer::score(const std::set<std::string>& query_tokens,
                                 const std::set<std::string>& doc_tokens) const {
    if (doc_tokens.empty()) return 0.0;
    std::size_t overlap = 0;
    for (const auto& t : query_tokens) overlap += doc_tokens.count(t);
    return static_cast<double>(overlap) / std::sqrt(static_cast<double>(doc_tokens.size()));
}

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

std::vector<ScoredDoc> retrieve(const std::vector<std::string>& queries, const Corpus& corpus,
                                std::size_t k, const Scorer& scorer) {
    if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus is empty");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");
    std::vector<ScoredDoc> merged;
    for (const auto& q : queries) {
        auto qt = text::token_set(q);
        std::vector<ScoredDoc> hits;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            double s = scorer.score(qt, corpus.tokens(i));
            if (s > 0.0) {
                const auto& d = corpus.documents()[i];
                hits.push_back({d.doc_id, s, d.url});
            }
        }
        std::sort(hits.begin(), hits.end(), ranks_before);
        if (hits.size() > k) hits.resize(k);
        merged.insert(merged.end(), hits.begin(), hits.end());
    }
    std::stable_sort(merged.begin(), merged.end(), ranks_before);
    return merged;
}

std::vector<ScoredDoc> rerank_dedup(const std::vector<ScoredDoc>& results) {
    std::map<std::string, ScoredDoc> best;
    for (const auto& r : results) {
        auto [it, inserted] = best.emplace(r.doc_id, r);
        if (!inserted && r.score > it->second.score) it->second = r;
    }
    std::vector<ScoredDoc> out;
    out.reserve(best.size());
    for (auto& [_, r] : best) out.push_back(std::move(r));
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

// ---- prompts -------------------------------------------------------------

namespace prompts {

std::string router(const std::string& query, const std::vector<std::string>& history) {
    std::ostringstream p;
    p << "You route questions for an enterprise knowledge assistant.\n"
         "Pick the single expert best suited to answer the user query.\n"
         "Experts:";
    for (ExpertId e : kAllExperts) p << ' ' << to_string(e);
    p << "\n";
    if (!history.empty()) {
        p << "Conversation so far:\n";
        for (const auto& h : history) p << "- " << h << "\n";
    }
    p << "Query: " << query << "\n"
      << "Reply with the expert id, optionally followed by a confidence in [0,1].";
    return p.str();
}

std::string conversational_rephrase(const std::vector<std::string>& history,
                                    const std::string& query) {
    std::ostringstream p;
    p << "Rewrite the last user message as a standalone question using the conversation.\n"
         "Conversation:\n";
    for (const auto& h : history) p << "- " << h << "\n";
    p << "Last message: " << query << "\nStandalone question:";
    return p.str();
}

std::string variations(const std::string& query, std::size_t k) {
    std::ostringstream p;
    p << "Rephrase the query into at most " << k
      << " short keyword searches that preserve its intent, acronyms and timeframe.\n"
         "Return a JSON list of strings.\nQuery: "
      << query;
    return p.str();
}

std::string answer(const std::string& query, const std::vector<Document>& docs) {
    std::ostringstream p;
    p << "Answer the question using only the documents below. Be concise.\n";
    for (const auto& d : docs) {
        p << "[" << d.doc_id << "] " << d.title << " (" << d.url << ")\n" << d.body << "\n";
    }
    p << "Question: " << query << "\nAnswer:";
    return p.str();
}

}  // namespace prompts

std::pair<ExpertId, double> parse_route(const std::string& raw) {
    std::string cleaned;
    for (char c : raw) {
        if (c == '\'' || c == '"' || c == '[' || c == ']' || c == ',' || c == ':') {
            cleaned.push_back(' ');
        } else {
            cleaned.push_back(c);
        }
    }
    std::istringstream in(cleaned);
    std::string name;
    in >> name;
    auto expert = expert_from_alias(name);
    if (!expert) throw Error(ErrorCode::GatewayError, "unparseable router output: '" + raw + "'");
    double confidence = 1.0;
    std::string conf;
    if (in >> conf) {
        try {
            confidence = std::clamp(std::stod(conf), 0.0, 1.0);
        } catch (const std::exception&) {
            confidence = 1.0;
        }
    }
    return {*expert, confidence};
}

std::vector<std::string> parse_query_list(const std::string& raw) {
    std::string body = text::trim(raw);
    std::vector<std::string> items;
    if (!body.empty() && body.front() == '[') {
        try {
            auto j = json::parse(body);
            for (const auto& v : j) {
                if (v.is_string()) items.push_back(v.get<std::string>());
            }
            return items;
        } catch (const json::exception&) {
            // fall through to line mode
        }
    }
    for (auto line : text::split_lines(body)) {
        line = text::trim(line);
        if (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0) line = text::trim(line.substr(2));
        if (!line.empty()) items.push_back(line);
    }
    return items;
}

// ---- agent ---------------------------------------------------------------

Agent::Agent(std::shared_ptr<const Gateway> gateway, AgentConfig config,
             std::shared_ptr<const Scorer> scorer, std::shared_ptr<Clock> clock,
             std::shared_ptr<IdGenerator> ids)
    : gateway_(std::move(gateway)),
      config_(std::move(config)),
      scorer_(scorer ? std::move(scorer) : std::make_shared<TokenOverlapScorer>()),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      ids_(ids ? std::move(ids) : std::make_shared<IdGenerator>()) {}

CompletionResult Agent::call(CompletionTask task, std::string prompt, std::string key,
                             const std::optional<std::string>& backend) const {
    CompletionRequest req;
    req.task = task;
    req.prompt = std::move(prompt);
    req.key = std::move(key);
    return backend ? gateway_->complete(req, *backend) : gateway_->complete(req);
}

namespace {

void require_query(const std::string& query) {
    if (text::is_blank(query)) throw Error(ErrorCode::InvalidQuery, "query is blank");
}

std::vector<std::string> window(const std::vector<std::string>& history, std::size_t n) {
    if (history.size() <= n) return history;
    return {history.end() - static_cast<std::ptrdiff_t>(n), history.end()};
}

struct StageLog {
    double latency_ms = 0.0;
    std::vector<std::string> prompts;
};

}  // namespace

std::pair<ExpertId, double> Agent::route(const std::string& query,
                                         const std::vector<std::string>& history,
                                         const ServingPlan& plan) const {
    require_query(query);
    auto prompt = prompts::router(query, window(history, config_.history_window));
    auto result = call(CompletionTask::router, std::move(prompt), text::trim(query),
                       plan.router_backend);
    return parse_route(result.text);
}

std::string Agent::rephrase_conversational(const std::vector<std::string>& history,
                                           const std::string& query,
                                           const ServingPlan& plan) const {
    require_query(query);
    if (history.empty()) return query;
    auto prompt = prompts::conversational_rephrase(window(history, config_.history_window), query);
    auto result = call(CompletionTask::rephrasal, std::move(prompt), text::trim(query),
                       plan.rephrasal_backend);
    auto out = text::trim(result.text);
    return out.empty() ? query : out;
}

std::vector<std::string> Agent::generate_variations(const std::string& query, std::size_t k,
                                                    const ServingPlan& plan) const {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    require_query(query);
    auto result = call(CompletionTask::variations, prompts::variations(query, k), text::trim(query),
                       plan.rephrasal_backend);
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& v : parse_query_list(result.text)) {
        v = text::trim(v);
        if (v.empty() || !seen.insert(text::normalize_key(v)).second) continue;
        out.push_back(std::move(v));
        if (out.size() == k) break;
    }
    if (out.empty()) out.push_back(text::trim(query));
    return out;
}

Answer Agent::generate_answer(const std::string& query, const std::vector<Document>& docs,
                              const ServingPlan& plan) const {
    require_query(query);
    Answer a;
    if (docs.empty()) {
        a.response_text = config_.no_answer_message;
        a.agent_thought = "No documents were retrieved; returning the no-answer message.";
        return a;
    }
    auto result = call(CompletionTask::answer, prompts::answer(query, docs), text::trim(query),
                       plan.answer_backend);
    a.response_text = text::trim(result.text);
    std::ostringstream thought;
    thought << "Answered from " << docs.size() << " document(s):";
    std::set<std::string> seen;
    for (const auto& d : docs) {
        thought << ' ' << d.doc_id;
        if (!text::is_blank(d.url) && seen.insert(d.url).second) a.citations.push_back(d.url);
    }
    a.agent_thought = thought.str();
    for (const auto& d : docs) {
        if (a.followups.size() == 2) break;
        if (!d.title.empty()) a.followups.push_back("Tell me more about " + d.title);
    }
    return a;
}

ResponseTrace Agent::answer_query(const std::string& session_id, std::int64_t turn_index,
                                  const std::string& query,
                                  const std::vector<std::string>& history, const Corpus& corpus,
                                  const ServingPlan& plan) const {
    require_query(query);
    if (session_id.empty()) throw Error(ErrorCode::InvalidArgument, "session id is empty");
    if (turn_index < 0) throw Error(ErrorCode::InvalidArgument, "negative turn index");

    ResponseTrace t;
    t.trace_id = ids_->next("tr");
    t.session_id = session_id;
    t.turn_index = turn_index;
    t.query = query;
    t.timestamp = clock_->now();
    t.served_variants = plan.served_variants;
    const auto hist = window(history, config_.history_window);

    auto fail = [&](StageName stage, const std::exception& e) {
        t.failed_at = stage;
        t.error = e.what();
        t.stage_latencies.try_emplace(stage, 0.0);
        t.response_text = config_.no_answer_message;
        t.agent_thought = "Stage " + std::string(to_string(stage)) + " failed: " + e.what();
        t.citations.clear();
        t.followups.clear();
    };
    auto finish = [&]() -> ResponseTrace {
        double sum = 0.0;
        for (const auto& [_, ms] : t.stage_latencies) sum += ms;
        t.total_latency = sum + config_.pipeline_overhead_ms;
        t.guardrail_metrics["pii_free"] = scrub_pii(t.response_text) == t.response_text;
        return t;
    };

    // 1. router
    try {
        auto prompt = prompts::router(query, hist);
        t.prompts.push_back(prompt);
        auto r = call(CompletionTask::router, prompt, text::trim(query), plan.router_backend);
        t.stage_latencies[StageName::router] = r.latency_ms;
        auto [expert, confidence] = parse_route(r.text);
        t.expert_selected = expert;
        t.route_confidence = confidence;
    } catch (const Error& e) {
        fail(StageName::router, e);
        return finish();
    }

    // 2. conversational rephrase + query variations
    try {
        double ms = 0.0;
        t.rephrased_query = query;
        if (!hist.empty()) {
            auto prompt = prompts::conversational_rephrase(hist, query);
            t.prompts.push_back(prompt);
            auto r = call(CompletionTask::rephrasal, prompt, text::trim(query), plan.rephrasal_backend);
            ms += r.latency_ms;
            auto out = text::trim(r.text);
            if (!out.empty()) t.rephrased_query = out;
        }
        auto prompt = prompts::variations(t.rephrased_query, config_.variations_k);
        t.prompts.push_back(prompt);
        auto r = call(CompletionTask::variations, prompt, text::trim(t.rephrased_query),
                      plan.rephrasal_backend);
        ms += r.latency_ms;
        std::set<std::string> seen;
        for (auto& v : parse_query_list(r.text)) {
            v = text::trim(v);
            if (v.empty() || !seen.insert(text::normalize_key(v)).second) continue;
            t.query_variations.push_back(std::move(v));
            if (t.query_variations.size() == config_.variations_k) break;
        }
        if (t.query_variations.empty()) t.query_variations.push_back(t.rephrased_query);
        t.stage_latencies[StageName::rephrasal] = ms;
    } catch (const Error& e) {
        fail(StageName::rephrasal, e);
        return finish();
    }

    // 3. retrieval, scoped to the selected expert's knowledge source
    std::vector<ScoredDoc> raw;
    Corpus scoped;
    try {
        const Corpus* source = &corpus;
        if (config_.scope_retrieval_to_expert) {
            scoped = corpus.with_category(std::string(to_string(*t.expert_selected)));
            source = &scoped;
        }
        raw = retrieve(t.query_variations, *source, config_.retrieve_k, *scorer_);
        t.stage_latencies[StageName::retrieval] = config_.retrieval_cost_ms;
    } catch (const Error& e) {
        fail(StageName::retrieval, e);
        return finish();
    }

    // 4. rerank + dedup
    t.ir_results = rerank_dedup(raw);
    t.stage_latencies[StageName::rerank] = config_.rerank_cost_ms;
    t.category = t.ir_results.empty() ? std::string(to_string(*t.expert_selected))
                                      : corpus.find(t.ir_results.front().doc_id)->category;

    std::vector<Document> context;
    for (const auto& r : t.ir_results) {
        if (context.size() == config_.context_docs) break;
        context.push_back(*corpus.find(r.doc_id));
    }

    // 5. answer generation
    Answer answer;
    try {
        if (context.empty()) {
            answer.response_text = config_.no_answer_message;
            answer.agent_thought = "No documents were retrieved; returning the no-answer message.";
            t.stage_latencies[StageName::answer_generation] = 0.0;
        } else {
            auto prompt = prompts::answer(query, context);
            t.prompts.push_back(prompt);
            auto r = call(CompletionTask::answer, prompt, text::trim(query), plan.answer_backend);
            t.stage_latencies[StageName::answer_generation] = r.latency_ms;
            answer = Answer{};
            answer.response_text = text::trim(r.text);
            std::ostringstream thought;
            thought << "Routed to " << to_string(*t.expert_selected) << "; answered from "
                    << context.size() << " document(s):";
            for (const auto& d : context) thought << ' ' << d.doc_id;
            answer.agent_thought = thought.str();
            for (const auto& d : context) {
                if (answer.followups.size() == 2) break;
                if (!d.title.empty()) answer.followups.push_back("Tell me more about " + d.title);
            }
        }
    } catch (const Error& e) {
        fail(StageName::answer_generation, e);
        return finish();
    }
    t.response_text = answer.response_text;
    t.agent_thought = answer.agent_thought;
    t.followups = answer.followups;

    // 6. grounding check: share of answer tokens found in the context
    {
        std::set<std::string> context_tokens;
        for (const auto& d : context) {
            auto toks = text::token_set(d.title + " " + d.body);
            context_tokens.insert(toks.begin(), toks.end());
        }
        auto answer_tokens = text::token_set(t.response_text);
        std::size_t grounded = 0;
        for (const auto& tok : answer_tokens) grounded += context_tokens.count(tok);
        bool ok = context.empty() || answer_tokens.empty() ||
                  2 * grounded >= answer_tokens.size();
        t.guardrail_metrics["grounded"] = ok;
        t.stage_latencies[StageName::hallucination] = config_.hallucination_cost_ms;
    }

    // 7. citations: context urls, blank ones skipped
    {
        std::set<std::string> seen;
        for (const auto& d : context) {
            if (!text::is_blank(d.url) && seen.insert(d.url).second) t.citations.push_back(d.url);
        }
        t.stage_latencies[StageName::citation] = config_.citation_cost_ms;
    }
    return finish();
}

}  // namespace flywheel
