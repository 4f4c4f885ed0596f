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

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flywheel/clock.hpp"
#include "flywheel/gateway.hpp"
#include "flywheel/types.hpp"

namespace flywheel {

/// Immutable document collection with precomputed token sets.
class Corpus {
public:
    Corpus() = default;
    /// Throws ValidationError on duplicate doc_id or empty body.
    explicit Corpus(std::vector<Document> docs);

    const std::vector<Document>& documents() const noexcept { return docs_; }
    const std::set<std::string>& tokens(std::size_t i) const { return tokens_.at(i); }
    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Document* find(const std::string& doc_id) const;

    Corpus with_category(const std::string& category) const;

    /// One JSON object per line with doc_id, url, title, body, category.
    static Corpus load(const std::string& path);
    void save(const std::string& path) const;

private:
    std::vector<Document> docs_;
    std::vector<std::set<std::string>> tokens_;
    std::map<std::string, std::size_t> index_;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const std::set<std::string>& query_tokens,
                         const std::set<std::string>& doc_tokens) const = 0;
};

/// |query ∩ doc| / sqrt(|doc|) over case-folded token sets.
class TokenOverlapScorer final : public Scorer {
public:
    double score(const std::set<std::string>& query_tokens,
                 const std::set<std::string>& doc_tokens) const override;
};

/// Score desc, then doc_id ascending.
bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) noexcept;

std::vector<ScoredDoc> retrieve(const std::vector<std::string>& queries, const Corpus& corpus,
                                std::size_t k, const Scorer& scorer = TokenOverlapScorer{});

/// Keeps one entry per doc_id carrying its maximum score, in ranking order.
std::vector<ScoredDoc> rerank_dedup(const std::vector<ScoredDoc>& results);

namespace prompts {
std::string router(const std::string& query, const std::vector<std::string>& history);
std::string conversational_rephrase(const std::vector<std::string>& history,
                                    const std::string& query);
std::string variations(const std::string& query, std::size_t k);
std::string answer(const std::string& query, const std::vector<Document>& docs);
}  // namespace prompts

/// Parses "<expert> [confidence]"; the expert may be a canonical id or alias.
std::pair<ExpertId, double> parse_route(const std::string& text);
/// Accepts a JSON array of strings or one item per line.
std::vector<std::string> parse_query_list(const std::string& text);

struct AgentConfig {
    std::string no_answer_message = "I don't have enough information to answer this question";
    std::size_t history_window = 6;
    std::size_t variations_k = 3;
    std::size_t retrieve_k = 5;
    std::size_t context_docs = 5;
    bool scope_retrieval_to_expert = true;
    /// Fixed costs of the stages that make no model call, in ms.
    double retrieval_cost_ms = 4.0;
    double rerank_cost_ms = 1.0;
    double hallucination_cost_ms = 1.0;
    double citation_cost_ms = 1.0;
    double pipeline_overhead_ms = 2.0;
};

/// Backend overrides for one request, keyed by the variant task they serve.
struct ServingPlan {
    std::optional<std::string> router_backend;
    std::optional<std::string> rephrasal_backend;
    std::optional<std::string> answer_backend;
    std::map<std::string, std::string> served_variants;
};

struct Answer {
    std::string response_text;
    std::string agent_thought;
    std::vector<std::string> citations;
    std::vector<std::string> followups;
};

/// The instrumented MoE RAG pipeline. Stateless per request.
class Agent {
public:
    Agent(std::shared_ptr<const Gateway> gateway, AgentConfig config = {},
          std::shared_ptr<const Scorer> scorer = nullptr,
          std::shared_ptr<Clock> clock = nullptr, std::shared_ptr<IdGenerator> ids = nullptr);

    std::pair<ExpertId, double> route(const std::string& query,
                                      const std::vector<std::string>& history,
                                      const ServingPlan& plan = {}) const;
    std::string rephrase_conversational(const std::vector<std::string>& history,
                                        const std::string& query,
                                        const ServingPlan& plan = {}) const;
    std::vector<std::string> generate_variations(const std::string& query, std::size_t k,
                                                 const ServingPlan& plan = {}) const;
    Answer generate_answer(const std::string& query, const std::vector<Document>& docs,
                           const ServingPlan& plan = {}) const;

    /// Runs the whole pipeline. Stage failures are recorded in the trace
    /// (failed_at, error) with the no-answer response; they never throw.
    ResponseTrace answer_query(const std::string& session_id, std::int64_t turn_index,
                               const std::string& query,
                               const std::vector<std::string>& history, const Corpus& corpus,
                               const ServingPlan& plan = {}) const;

    const AgentConfig& config() const noexcept { return config_; }

private:
    CompletionResult call(CompletionTask task, std::string prompt, std::string key,
                          const std::optional<std::string>& backend) const;

    std::shared_ptr<const Gateway> gateway_;
    AgentConfig config_;
    std::shared_ptr<const Scorer> scorer_;
    std::shared_ptr<Clock> clock_;
    std::shared_ptr<IdGenerator> ids_;
};

}  // namespace flywheel
