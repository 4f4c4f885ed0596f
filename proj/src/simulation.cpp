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

#include "flywheel/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "flywheel/error.hpp"
#include "flywheel/random.hpp"
#include "flywheel/text.hpp"

namespace fs = std::filesystem;

namespace flywheel {

fs::path DeploymentConfig::resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_relative() ? base_dir / path : path;
}

namespace {

json rollout_policy_json(const RolloutPolicy& p) {
    return json{{"ramp", p.ramp},
                {"accuracy_epsilon", p.accuracy_epsilon},
                {"latency_regression", p.latency_regression},
                {"negative_feedback_regression", p.negative_feedback_regression}};
}

RolloutPolicy rollout_policy_from(const json& j) {
    RolloutPolicy p;
    p.ramp = j.value("ramp", p.ramp);
    p.accuracy_epsilon = j.value("accuracy_epsilon", p.accuracy_epsilon);
    p.latency_regression = j.value("latency_regression", p.latency_regression);
    p.negative_feedback_regression = j.value("negative_feedback_regression", p.negative_feedback_regression);
    for (std::size_t i = 0; i < p.ramp.size(); ++i) {
        if (p.ramp[i] < 1 || p.ramp[i] > 99 || (i && p.ramp[i] <= p.ramp[i - 1])) {
            throw Error(ErrorCode::SchemaError, "rollout ramp must increase strictly within 1..99");
        }
    }
    return p;
}

}  // namespace

DeploymentConfig load_deployment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read deployment config '" + path + "'");
    DeploymentConfig c;
    try {
        auto j = json::parse(in);
        c.base_dir = fs::absolute(path).parent_path();
        c.store = j.value("store", c.store);
        c.corpus = j.value("corpus", c.corpus);
        c.scripts = j.value("scripts", c.scripts);
        c.bindings = j.value("bindings", c.bindings);
        c.port = j.value("port", c.port);
        c.seed = j.value("seed", c.seed);
        c.token = j.value("token", c.token);
        c.fsync = j.value("fsync", c.fsync);
        if (j.contains("rollout")) c.rollout = rollout_policy_from(j.at("rollout"));
        c.approval_required = j.value("approval_required", c.approval_required);
        c.active_variants = j.value("active_variants", c.active_variants);
        if (j.contains("cycle")) c.cycle = j.at("cycle").get<CycleConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, path + ": " + e.what());
    }
    for (auto* p : {&c.cycle.testset_path, &c.cycle.regression_set_path, &c.cycle.auto_label_from}) {
        if (*p) *p = c.resolve(**p).string();
    }
    if (const char* token = std::getenv("FLYWHEEL_TOKEN"); token && *token) c.token = token;
    return c;
}

void save_deployment_config(const DeploymentConfig& c, const std::string& path) {
    json j = {{"store", c.store},
              {"corpus", c.corpus},
              {"scripts", c.scripts},
              {"bindings", c.bindings},
              {"port", c.port},
              {"seed", c.seed},
              {"token", c.token},
              {"fsync", c.fsync},
              {"rollout", rollout_policy_json(c.rollout)},
              {"approval_required", c.approval_required},
              {"active_variants", c.active_variants},
              {"cycle", c.cycle}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageError, "cannot write deployment config '" + path + "'");
    out << j.dump(2) << '\n';
}

Deployment open_deployment(const DeploymentConfig& c, std::shared_ptr<Clock> clock) {
    if (!clock) clock = std::make_shared<SystemClock>();
    auto store = std::make_shared<LogEventStore>(c.resolve(c.store), LogEventStore::Options{c.fsync}, clock);
    auto gateway = std::make_shared<Gateway>();
    const auto scripts_dir = c.resolve(c.scripts);
    if (fs::is_directory(scripts_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(scripts_dir)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) gateway->register_script(load_script(f.string()));
    }
    if (auto remote = RemoteConfig::from_env(); !remote.base_url.empty()) {
        gateway->register_backend(std::make_shared<RemoteBackend>("remote", remote));
    }
    for (const auto& [task_name, backend] : c.bindings) {
        auto task = parse_task(task_name);
        if (!task) throw Error(ErrorCode::SchemaError, "unknown task '" + task_name + "' in bindings");
        gateway->bind(*task, backend);
    }
    auto corpus = Corpus::load(c.resolve(c.corpus).string());
    auto ids = std::make_shared<IdGenerator>(splitmix64(c.seed ^ splitmix64(store->size() + 1)));
    auto d = Deployment::create(store, gateway, std::move(corpus), clock, ids, AgentConfig{}, MonitorConfig{},
                                c.rollout);
    for (const auto& [task_name, variant] : c.active_variants) {
        auto task = parse_variant_task(task_name);
        if (!task) throw Error(ErrorCode::SchemaError, "unknown task '" + task_name + "' in active_variants");
        auto it = c.approval_required.find(task_name);
        const bool approval = it != c.approval_required.end() && it->second;
        auto state = d.rollouts->state(*task);
        if (!state) {
            d.rollouts->initialize(*task, variant, approval);
        } else if (state->approval_required != approval) {
            d.rollouts->set_approval_required(*task, approval);
        }
    }
    return d;
}

void to_json(json& j, const InjectedError& e) {
    j = json{{"trace_id", e.trace_id},
             {"session_id", e.session_id},
             {"kind", std::string(to_string(e.kind))},
             {"query", e.query},
             {"correct_expert", std::string(to_string(e.correct_expert))},
             {"served_expert", e.served_expert ? json(std::string(to_string(*e.served_expert))) : json(nullptr)},
             {"correct_variations", e.correct_variations}};
}

void from_json(const json& j, InjectedError& e) {
    e.trace_id = j.at("trace_id").get<std::string>();
    e.session_id = j.value("session_id", "");
    auto kind = parse_dataset_task(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::SchemaError, "unknown injected error kind");
    e.kind = *kind;
    e.query = j.value("query", "");
    auto expert = parse_expert(j.at("correct_expert").get<std::string>());
    if (!expert) throw Error(ErrorCode::SchemaError, "unknown expert in ground truth");
    e.correct_expert = *expert;
    e.served_expert.reset();
    if (j.contains("served_expert") && !j.at("served_expert").is_null()) {
        e.served_expert = parse_expert(j.at("served_expert").get<std::string>());
    }
    e.correct_variations = j.value("correct_variations", std::vector<std::string>{});
}

std::vector<InjectedError> load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageError, "cannot read ground truth '" + path + "'");
    std::vector<InjectedError> out;
    std::string line;
    while (std::getline(in, line)) {
        if (text::is_blank(line)) continue;
        out.push_back(json::parse(line).get<InjectedError>());
    }
    return out;
}

// ---- simulated world -------------------------------------------------------

namespace {

using Strings = std::vector<std::string>;

struct Topic {
    ExpertId expert;
    std::string keyword;  // used in judge reasoning
    std::vector<std::pair<std::string, std::vector<Strings>>> templates;
    Strings doc_titles;
};

std::vector<Topic> world_topics() {
    const Strings countries = {"Netherlands", "Israel", "India", "Germany", "Taiwan", "United States", "Canada"};
    const Strings orgs = {"WWFO", "GPU architecture", "RESS", "legal", "recruiting", "IT", "developer relations", "ASIC"};
    return {
        {ExpertId::financial_info,
         "company earnings",
         {{"What was the {} in {} fiscal {}?",
           {{"revenue", "gross margin", "operating income", "data center revenue", "EPS"},
            {"Q1", "Q2", "Q3", "Q4"},
            {"2023", "2024", "2025"}}},
          {"How did {} change year over year in {} fiscal {}?",
           {{"revenue", "gross margin", "operating expenses", "gaming revenue", "EPS"},
            {"Q1", "Q2", "Q3", "Q4"},
            {"2023", "2024", "2025"}}}},
         {"Quarterly revenue summary", "Gross margin trends", "Operating income by segment", "EPS history",
          "Data center revenue", "Gaming revenue", "Operating expenses", "Fiscal calendar"}},
        {ExpertId::it_benefits_help,
         "IT support and employee benefits",
         {{"How do I {} my {}?",
           {{"order", "replace", "return", "set up", "reset"},
            {"laptop", "monitor", "mouse", "VPN token", "HSA account", "ESPP enrollment", "badge", "headset"}}},
          {"Who do I contact about {} issues in {}?",
           {{"VPN", "laptop", "HSA", "ESPP", "badge", "printer", "headset", "payroll"},
            {"Santa Clara", "Austin", "Pune", "Tel Aviv", "Munich", "Taipei"}}}},
         {"Ordering equipment", "VPN access", "HSA contributions", "ESPP enrollment", "Badge services",
          "Laptop refresh", "Payroll support", "Printer setup"}},
        {ExpertId::sharepoint,
         "internal sites",
         {{"Where can I find the {} {} page?",
           {{"GPU FCV", "RESS", "brand", "technical training", "ASIC", "Nsight"},
            {"wiki", "onboarding", "templates", "roadmap", "schedule"}}},
          {"Point me to the {} {} site",
           {{"GPU FCV", "RESS", "brand", "technical training", "ASIC", "Nsight"},
            {"wiki", "onboarding", "templates", "roadmap", "schedule"}}}},
         {"GPU FCV portal", "RESS team site", "Brand icons and logos", "Technical training catalog", "ASIC design wiki",
          "Nsight documentation", "Onboarding hub", "Presentation templates"}},
        {ExpertId::holidays,
         "company holidays",
         {{"When is the next {} in {}?", {{"free day", "new year holiday", "summer break", "winter break", "national holiday"}, countries}},
          {"How many {} days do I get in {} in {}?", {{"vacation", "PTO", "sick", "floating"}, countries, {"2024", "2025", "2026"}}}},
         {"Holiday calendar Netherlands", "Holiday calendar Israel", "Holiday calendar India", "Holiday calendar Germany",
          "Holiday calendar Taiwan", "Holiday calendar United States", "Holiday calendar Canada", "PTO and vacation days"}},
        {ExpertId::cafe_menu,
         "cafe menus",
         {{"What is on the {} menu at the {} on {}?",
           {{"breakfast", "lunch", "dinner"},
            {"Endeavor cafe", "Voyager cafe", "Building E cafe", "Austin cafe"},
            {"Monday", "Tuesday", "Wednesday", "Thursday", "Friday"}}}},
         {"Endeavor cafe menu", "Voyager cafe menu", "Building E cafe menu", "Austin cafe menu", "Weekly specials",
          "Breakfast options", "Lunch stations", "Dinner service"}},
        {ExpertId::people,
         "people and organization",
         {{"Who leads the {} team?", {orgs}},
          {"Who is the manager of the {} {}?", {orgs, {"engineers", "program managers", "interns"}}},
          {"What is the phone extension for the {} front desk?", {orgs}}},
         {"WWFO leadership", "GPU architecture org chart", "RESS team directory", "Legal department", "Recruiting team",
          "IT department", "Developer relations", "ASIC team directory"}},
        {ExpertId::policies,
         "company policy",
         {{"What is the policy on {} in {}?",
           {{"remote work", "travel expenses", "stock trading", "referral bonus", "relocation", "parental leave",
             "vacation carryover"},
            countries}},
          {"Am I allowed to {} under the current policy?",
           {{"expense a home office chair", "trade company stock this week", "carry over unused vacation days",
             "refer a former colleague", "work abroad for a month", "bring a guest to the office"}}}},
         {"Remote work policy", "Travel and expense policy", "Insider trading policy", "Referral program",
          "Relocation policy", "Parental leave policy", "Vacation carryover rules", "Visitor policy"}},
    };
}

std::string fill(const std::string& tmpl, const Strings& values) {
    std::string out;
    std::size_t v = 0;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl.compare(i, 2, "{}") == 0 && v < values.size()) {
            out += values[v++];
            ++i;
        } else {
            out += tmpl[i];
        }
    }
    return out;
}

void expand(const std::string& tmpl, const std::vector<Strings>& slots, std::size_t depth, Strings& current,
            Strings& out) {
    if (depth == slots.size()) {
        out.push_back(fill(tmpl, current));
        return;
    }
    for (const auto& v : slots[depth]) {
        current.push_back(v);
        expand(tmpl, slots, depth + 1, current, out);
        current.pop_back();
    }
}

Strings query_pool(const Topic& topic) {
    static const Strings prefixes = {"", "Quick question: ", "Hi, ", "Hello! ", "Hey, ", "Please help: "};
    Strings base;
    for (const auto& [tmpl, slots] : topic.templates) {
        Strings current;
        expand(tmpl, slots, 0, current, base);
    }
    Strings out;
    for (const auto& p : prefixes) {
        for (const auto& q : base) out.push_back(p + q);
    }
    return out;
}

const std::map<std::string, std::string>& wrong_expansions() {
    static const std::map<std::string, std::string> m = {
        {"RESS", "renewable energy storage systems"}, {"VPN", "virtual phone network"},
        {"HSA", "home security alarm"},               {"ESPP", "external service provider program"},
        {"FCV", "fuel cell vehicle"},                 {"ASIC", "association of screen industries"},
        {"WWFO", "world wide fund office"},           {"EPS", "electric power steering"},
        {"PTO", "parent teacher organization"},
    };
    return m;
}

std::optional<std::string> known_acronym(const std::string& query) {
    for (const auto& a : text::uppercase_acronyms(query, 3)) {
        if (wrong_expansions().count(a)) return a;
    }
    return std::nullopt;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

std::string keywords_of(const std::string& query) {
    static const std::set<std::string> stop = {"what", "is", "the", "in", "on", "at", "do", "i", "my", "how", "who",
                                               "to", "of", "for", "a", "an", "can", "when", "where", "quick",
                                               "question", "hi", "hello", "hey", "please", "help", "me", "am",
                                               "under", "current", "did", "does", "get", "many", "find", "about"};
    Strings kept;
    for (const auto& t : text::tokenize(query)) {
        if (!stop.count(t)) kept.push_back(t);
    }
    return text::join(kept, " ");
}

struct PlannedTrace {
    std::size_t session = 0;
    int turn = 0;
    ExpertId expert = ExpertId::sharepoint;
    ExpertId served = ExpertId::sharepoint;
    std::string query;
    bool routing_error = false;
    bool rephrasal_error = false;
    Strings correct_variations;
};

std::string slug(const std::string& s) {
    std::string out;
    for (char c : text::to_lower(s)) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += c;
        } else if (!out.empty() && out.back() != '-') {
            out += '-';
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

ScriptEntry entry(std::string text) {
    ScriptEntry e;
    e.text = std::move(text);
    return e;
}

TaskScript task_script(double latency_ms, std::optional<std::string> fallback = std::nullopt) {
    TaskScript t;
    t.latency_ms = latency_ms;
    if (fallback) t.fallback = FallbackRule{*fallback, std::nullopt};
    return t;
}

std::string route_text(ExpertId e) { return std::string(to_string(e)) + " 0.92"; }

}  // namespace

SimulationSummary run_simulation(const SimulationOptions& options, const fs::path& dir) {
    for (double p : {options.routing_error_rate, options.rephrasal_error_rate, options.judge_noise,
                     options.followup_rate, options.positive_rate, options.other_negative_rate}) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rates must lie in [0, 1]");
    }
    if (options.positive_rate + options.other_negative_rate > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "positive and negative rates exceed 1");
    }
    fs::create_directories(dir);
    if (fs::exists(dir / "store")) throw Error(ErrorCode::StorageError, "output directory already holds a store");
    fs::create_directories(dir / "scripts");

    Rng rng(options.seed ^ 0x5157u);
    const auto topics = world_topics();

    // Corpus: one document per title, category = expert id.
    std::vector<Document> docs;
    for (const auto& topic : topics) {
        const std::string expert(to_string(topic.expert));
        const auto pool = query_pool(topic);
        for (std::size_t i = 0; i < topic.doc_titles.size(); ++i) {
            const auto& title = topic.doc_titles[i];
            Document d;
            d.doc_id = expert + "-" + std::to_string(i + 1);
            d.url = "https://intranet.example.com/" + expert + "/" + slug(title);
            d.title = title;
            d.category = expert;
            std::string body = title + ". This page covers " + topic.keyword + " for employees.";
            for (std::size_t k = i; k < pool.size() / 6; k += topic.doc_titles.size()) {
                body += " " + keywords_of(pool[k]) + ".";
            }
            d.body = body;
            docs.push_back(std::move(d));
        }
    }
    Corpus corpus(docs);
    corpus.save((dir / "corpus.jsonl").string());

    // Session plan.
    std::vector<Strings> pools;
    for (const auto& topic : topics) {
        auto pool = query_pool(topic);
        rng.shuffle(pool);
        pools.push_back(std::move(pool));
    }
    std::vector<std::size_t> next_query(topics.size(), 0);
    std::size_t overflow = 0;
    auto draw_query = [&](std::size_t t) {
        if (next_query[t] < pools[t].size()) return pools[t][next_query[t]++];
        return pools[t][rng.below(pools[t].size())] + " (ref " + std::to_string(++overflow) + ")";
    };
    std::vector<PlannedTrace> plan;
    for (std::size_t s = 0; s < options.sessions; ++s) {
        int turns = 1;
        while (turns < 3 && rng.unit() < options.followup_rate) ++turns;
        for (int t = 0; t < turns; ++t) {
            PlannedTrace p;
            p.session = s;
            p.turn = t;
            const auto topic = rng.below(topics.size());
            p.expert = topics[topic].expert;
            p.served = p.expert;
            p.query = draw_query(topic);
            plan.push_back(std::move(p));
        }
    }

    const std::size_t total = plan.size();
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    rng.shuffle(order);
    const auto routing_n = static_cast<std::size_t>(std::llround(options.routing_error_rate * static_cast<double>(total)));
    for (std::size_t k = 0; k < routing_n && k < total; ++k) {
        auto& p = plan[order[k]];
        p.routing_error = true;
        auto other = kAllExperts[rng.below(kAllExperts.size() - 1)];
        if (other == p.expert) other = kAllExperts.back();
        p.served = other;
    }
    const auto rephrasal_n =
        static_cast<std::size_t>(std::llround(options.rephrasal_error_rate * static_cast<double>(total)));
    std::size_t rephrasal_done = 0;
    for (std::size_t k = 0; k < total && rephrasal_done < rephrasal_n; ++k) {
        auto& p = plan[order[(k + routing_n) % total]];
        if (p.routing_error || !known_acronym(p.query)) continue;
        p.rephrasal_error = true;
        ++rephrasal_done;
    }
    for (auto& p : plan) {
        if (auto a = known_acronym(p.query)) {
            p.correct_variations = {keywords_of(p.query), text::to_lower(*a) + " " + topics[0].keyword};
            for (const auto& t : topics) {
                if (t.expert == p.expert) p.correct_variations[1] = text::to_lower(*a) + " " + t.keyword;
            }
        }
    }

    // Regression queries come from the unused part of the pools.
    std::vector<std::pair<std::string, ExpertId>> regression_queries;
    for (std::size_t i = 0; regression_queries.size() < 30; ++i) {
        const auto t = i % topics.size();
        regression_queries.emplace_back(draw_query(t), topics[t].expert);
    }

    // Scripted backends.
    BackendScript router_base{"router-base", options.seed, {}};
    BackendScript router_ft{"router-ft", options.seed, {}};
    router_base.tasks[CompletionTask::router] = task_script(260.0, "sharepoint 0.20");
    router_ft.tasks[CompletionTask::router] = task_script(80.0, "sharepoint 0.20");

    BackendScript rephrasal_base{"rephrasal-base", options.seed, {}};
    BackendScript rephrasal_ft{"rephrasal-ft", options.seed, {}};
    for (auto* s : {&rephrasal_base, &rephrasal_ft}) {
        const double ms = s == &rephrasal_base ? 1900.0 : 1100.0;
        s->tasks[CompletionTask::rephrasal] = task_script(ms, "{key}");
        s->tasks[CompletionTask::variations] = task_script(ms, "{key}\n{key} company");
    }

    BackendScript answer{"answer", options.seed, {}};
    answer.tasks[CompletionTask::answer] = task_script(900.0, "Here is what I found about: {key}");

    BackendScript judge{"judge", options.seed, {}};
    judge.tasks[CompletionTask::judge] =
        task_script(400.0, "Reasoning: No specific concerns with this routing.\nAnswer: YES");

    BackendScript synthesis{"synthesis", options.seed, {}};
    synthesis.tasks[CompletionTask::synthesis] = task_script(3000.0);

    BackendScript regression_judge{"regression-judge", options.seed, {}};
    regression_judge.tasks[CompletionTask::regression_judge] =
        task_script(500.0, "Correctness: 3\nHelpfulness: 3\nConscientiousness: 3");

    Rng judge_rng(options.seed ^ 0x1d6eu);
    for (const auto& p : plan) {
        router_base.add(CompletionTask::router, p.query, entry(route_text(p.served)));
        router_ft.add(CompletionTask::router, p.query, entry(route_text(p.expert)));
        const auto topic = std::find_if(topics.begin(), topics.end(), [&](const Topic& t) { return t.expert == p.expert; });
        bool correct = !p.routing_error;
        if (judge_rng.unit() < options.judge_noise) correct = !correct;
        const std::string reasoning = "Reasoning: This question is related to " + topic->keyword +
                                      " which means it should be sent to '" + std::string(judge_alias(p.expert)) + "'.";
        judge.add(CompletionTask::judge, judge_script_key(p.query, std::string(judge_alias(p.served))),
                  entry(reasoning + "\nAnswer: " + (correct ? "YES" : "NO")));
        if (p.rephrasal_error) {
            const auto acronym = *known_acronym(p.query);
            const auto& wrong = wrong_expansions().at(acronym);
            const auto expanded = keywords_of(replace_all(p.query, acronym, wrong));
            rephrasal_base.add(CompletionTask::variations, p.query, entry(expanded + "\n" + wrong + " details"));
        }
        if (!p.correct_variations.empty()) {
            rephrasal_ft.add(CompletionTask::variations, p.query, entry(text::join(p.correct_variations, "\n")));
        }
    }
    {
        std::ofstream out(dir / "regression.jsonl", std::ios::trunc);
        for (std::size_t i = 0; i < regression_queries.size(); ++i) {
            const auto& [q, expert] = regression_queries[i];
            router_base.add(CompletionTask::router, q, entry(route_text(expert)));
            router_ft.add(CompletionTask::router, q, entry(route_text(expert)));
            const int correctness = i % 5 == 0 ? 5 : 4;
            regression_judge.add(CompletionTask::regression_judge, q,
                                 entry("Correctness: " + std::to_string(correctness) +
                                       "\nHelpfulness: 4\nConscientiousness: 5"));
            auto scoped = corpus.with_category(std::string(to_string(expert)));
            json item = {{"query", q},
                         {"ground_truth", "See the " + std::string(to_string(expert)) + " pages."},
                         {"expected_citations",
                          scoped.empty() ? Strings{} : Strings{scoped.documents().front().url}}};
            out << item.dump() << '\n';
        }
    }
    Rng synth_rng(options.seed ^ 0x5e7du);
    for (const auto& d : corpus.documents()) {
        nlohmann::ordered_json records = nlohmann::ordered_json::array();
        const auto terms = text::tokenize(d.body);
        for (int k = 0; k < 3; ++k) {
            const auto& term = terms.empty() ? d.title : terms[(k * 7 + 5) % terms.size()];
            SynthesisRecord r;
            r.question = "What does the " + d.title + " page say about " + term + " (" + std::to_string(k + 1) + ")?";
            r.answer = "See " + d.url;
            r.thought = "Looking for " + term + " on the " + d.title + " page.";
            r.process = "I need to use the Enterprise Knowledge tool";
            r.action = "EnterpriseKnowledge";
            r.action_input = {text::to_lower(d.title) + " " + term, term + " company page " + std::to_string(k + 1)};
            records.push_back(synthesis_record_json(r));
            rephrasal_ft.add(CompletionTask::variations, r.question, entry(text::join(r.action_input, "\n")));
            if (synth_rng.unit() < 0.74) {
                rephrasal_base.add(CompletionTask::variations, r.question, entry(text::join(r.action_input, "\n")));
            }
        }
        synthesis.add(CompletionTask::synthesis, d.doc_id, entry(records.dump()));
    }
    for (const auto* s : {&router_base, &router_ft, &rephrasal_base, &rephrasal_ft, &answer, &judge, &synthesis,
                          &regression_judge}) {
        save_script(*s, (dir / "scripts" / (s->id + ".json")).string());
    }

    // Deployment config.
    DeploymentConfig config;
    config.base_dir = fs::absolute(dir);
    config.seed = options.seed;
    config.bindings = {{"router", "router-base"},        {"rephrasal", "rephrasal-base"},
                       {"variations", "rephrasal-base"}, {"answer", "answer"},
                       {"judge", "judge"},               {"synthesis", "synthesis"},
                       {"regression_judge", "regression-judge"}};
    config.active_variants = {{"router", "router-70b"}, {"rephrasal", "rephrasal-70b"}};
    config.approval_required = {{"router", false}, {"rephrasal", true}};
    config.cycle.judge_backend = "judge";
    config.cycle.synthesis_backend = "synthesis";
    config.cycle.regression_judge_backend = "regression-judge";
    config.cycle.seed = options.seed;
    config.cycle.regression_set_path = "regression.jsonl";
    if (options.auto_label) config.cycle.auto_label_from = "ground_truth.jsonl";
    config.cycle.candidates = {{VariantTask::router, "router-70b", "router-8b-ft"},
                               {VariantTask::rephrasal, "rephrasal-70b", "rephrasal-8b-ft"}};
    config.fsync = false;

    const Instant start = parse_instant("2025-01-06T09:00:00.000Z");
    auto clock = std::make_shared<ManualClock>(start);
    Instant last = start;
    SimulationSummary summary;
    {
        auto d = open_deployment(config, clock);
        d.variants->register_variant({"router-70b", VariantTask::router, "router-base", "70B", start});
        d.variants->register_variant({"router-8b-ft", VariantTask::router, "router-ft", "8B", start});
        d.variants->register_variant({"rephrasal-70b", VariantTask::rephrasal, "rephrasal-base", "70B", start});
        d.variants->register_variant({"rephrasal-8b-ft", VariantTask::rephrasal, "rephrasal-ft", "8B", start});

        Rng feedback_rng(options.seed ^ 0xfeedu);
        std::ofstream truth(dir / "ground_truth.jsonl", std::ios::trunc);
        std::map<std::size_t, std::string> session_ids;
        std::map<std::size_t, Strings> histories;
        for (const auto& p : plan) {
            if (!session_ids.count(p.session)) session_ids[p.session] = d.ids->next("sess");
            const Instant at = start + static_cast<Instant>(p.session) * 2 * kMinute + p.turn * 45'000;
            clock->set(at);
            last = std::max(last, at);
            auto& history = histories[p.session];
            auto trace = d.serve(session_ids[p.session], p.turn, p.query, history);
            history.push_back(p.query);
            ++summary.traces;

            std::optional<FeedbackRecord> fb;
            if (p.routing_error || p.rephrasal_error) {
                fb = FeedbackRecord{};
                fb->signal = FeedbackSignal::down;
                fb->reasons = {FeedbackReason::relevance};
            } else {
                const double u = feedback_rng.unit();
                if (u < options.positive_rate) {
                    fb = FeedbackRecord{};
                    fb->signal = FeedbackSignal::up;
                    fb->reasons = {FeedbackReason::cited_source_usefulness};
                } else if (u < options.positive_rate + options.other_negative_rate) {
                    fb = FeedbackRecord{};
                    fb->signal = FeedbackSignal::down;
                    fb->reasons = {FeedbackReason::clarity_completeness};
                    if (feedback_rng.below(10) == 0) fb->free_text = "Please follow up with me at jane.doe@example.com";
                }
            }
            if (fb) {
                fb->trace_id = trace.trace_id;
                fb->timestamp = at + 20'000;
                clock->set(fb->timestamp);
                d.monitor->record_feedback(*fb);
                ++summary.feedback;
                summary.negatives += fb->signal == FeedbackSignal::down ? 1 : 0;
            }
            if (p.routing_error || p.rephrasal_error) {
                InjectedError e;
                e.trace_id = trace.trace_id;
                e.session_id = trace.session_id;
                e.kind = p.routing_error ? DatasetTask::router : DatasetTask::rephrasal;
                e.query = p.query;
                e.correct_expert = p.expert;
                e.served_expert = p.served;
                e.correct_variations = p.correct_variations;
                truth << json(e).dump() << '\n';
                (p.routing_error ? summary.routing_errors : summary.rephrasal_errors) += 1;
            }
        }
        summary.sessions = session_ids.size();
    }

    config.fsync = true;
    summary.config_path = dir / "deployment.json";
    summary.ground_truth_path = dir / "ground_truth.jsonl";
    save_deployment_config(config, summary.config_path.string());
    return summary;
}

}  // namespace flywheel
