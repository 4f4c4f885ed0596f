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

#include "flywheel/triage.hpp"

#include "flywheel/error.hpp"
#include "flywheel/text.hpp"

namespace flywheel {

std::string_view to_string(TriageStatus s) noexcept {
    switch (s) {
        case TriageStatus::pending: return "pending";
        case TriageStatus::confirmed_error: return "confirmed_error";
        case TriageStatus::dismissed: return "dismissed";
    }
    return "";
}

std::optional<TriageStatus> parse_triage_status(std::string_view s) {
    for (auto v : {TriageStatus::pending, TriageStatus::confirmed_error, TriageStatus::dismissed}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

namespace {

json label_json(const SmeLabel& label) {
    if (const auto* e = std::get_if<ExpertId>(&label)) return std::string(to_string(*e));
    return std::get<std::vector<std::string>>(label);
}

SmeLabel label_from_json(const json& j) {
    if (j.is_string()) {
        auto e = parse_expert(j.get<std::string>());
        if (!e) throw Error(ErrorCode::ValidationError, "unknown expert '" + j.get<std::string>() + "'");
        return *e;
    }
    if (j.is_array()) return j.get<std::vector<std::string>>();
    throw Error(ErrorCode::ValidationError, "label must be an expert id or a list of queries");
}

}  // namespace

void to_json(json& j, const TriageItem& t) {
    j = json{{"item_id", t.item_id},
             {"trace_id", t.trace_id},
             {"kind", std::string(to_string(t.kind))},
             {"query", t.query},
             {"expert_selected", t.expert_selected ? json(std::string(to_string(*t.expert_selected))) : json(nullptr)},
             {"verdict_summary", t.verdict_summary},
             {"status", std::string(to_string(t.status))},
             {"sme_label", t.sme_label ? label_json(*t.sme_label) : json(nullptr)},
             {"consumed_by", t.consumed_by ? json(*t.consumed_by) : json(nullptr)}};
}

void from_json(const json& j, TriageItem& t) {
    t.item_id = j.at("item_id").get<std::string>();
    t.trace_id = j.at("trace_id").get<std::string>();
    auto kind = parse_dataset_task(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::SchemaError, "unknown triage kind");
    t.kind = *kind;
    t.query = j.value("query", "");
    t.expert_selected.reset();
    if (j.contains("expert_selected") && !j.at("expert_selected").is_null()) {
        t.expert_selected = parse_expert(j.at("expert_selected").get<std::string>());
    }
    t.verdict_summary = j.value("verdict_summary", "");
    auto status = parse_triage_status(j.value("status", "pending"));
    if (!status) throw Error(ErrorCode::SchemaError, "unknown triage status");
    t.status = *status;
    t.sme_label.reset();
    if (j.contains("sme_label") && !j.at("sme_label").is_null()) t.sme_label = label_from_json(j.at("sme_label"));
    t.consumed_by.reset();
    if (j.contains("consumed_by") && !j.at("consumed_by").is_null()) {
        t.consumed_by = j.at("consumed_by").get<std::string>();
    }
}

TriageBoard::TriageBoard(std::shared_ptr<EventStore> store, std::shared_ptr<IdGenerator> ids)
    : store_(std::move(store)), ids_(std::move(ids)) {
    for (const auto& ev : store_->scan(EventKind::label, TimeWindow::all())) apply(json::parse(ev.payload));
}

void TriageBoard::apply(const json& event) {
    const auto op = event.at("op").get<std::string>();
    if (op == "open") {
        auto item = event.at("item").get<TriageItem>();
        by_trace_[{item.trace_id, item.kind}] = item.item_id;
        order_.push_back(item.item_id);
        items_[item.item_id] = std::move(item);
    } else if (op == "label") {
        auto& item = at(event.at("item_id").get<std::string>());
        item.sme_label = label_from_json(event.at("label"));
        item.status = TriageStatus::confirmed_error;
    } else if (op == "dismiss") {
        at(event.at("item_id").get<std::string>()).status = TriageStatus::dismissed;
    } else if (op == "consumed") {
        const auto cycle = event.at("cycle_id").get<std::string>();
        for (const auto& id : event.at("item_ids")) at(id.get<std::string>()).consumed_by = cycle;
    }
}

TriageItem& TriageBoard::at(const std::string& item_id) {
    auto it = items_.find(item_id);
    if (it == items_.end()) throw Error(ErrorCode::NotFound, "no triage item '" + item_id + "'");
    return it->second;
}

std::optional<TriageItem> TriageBoard::open(const std::string& trace_id, DatasetTask kind,
                                            const std::string& query, std::optional<ExpertId> expert_selected,
                                            const std::string& verdict_summary) {
    std::lock_guard lock(mu_);
    if (by_trace_.count({trace_id, kind})) return std::nullopt;
    TriageItem item;
    item.item_id = ids_->next("tri");
    item.trace_id = trace_id;
    item.kind = kind;
    item.query = query;
    item.expert_selected = expert_selected;
    item.verdict_summary = verdict_summary;
    json event = {{"op", "open"}, {"item", item}};
    store_->append(EventKind::label, event.dump());
    apply(event);
    return item;
}

std::vector<TriageItem> TriageBoard::list(std::optional<TriageStatus> status) const {
    std::lock_guard lock(mu_);
    std::vector<TriageItem> out;
    for (const auto& id : order_) {
        const auto& item = items_.at(id);
        if (!status || item.status == *status) out.push_back(item);
    }
    return out;
}

std::optional<TriageItem> TriageBoard::find(const std::string& item_id) const {
    std::lock_guard lock(mu_);
    auto it = items_.find(item_id);
    if (it == items_.end()) return std::nullopt;
    return it->second;
}

TriageItem TriageBoard::label(const std::string& item_id, const SmeLabel& label) {
    std::lock_guard lock(mu_);
    auto& item = at(item_id);
    if (item.status != TriageStatus::pending) {
        throw Error(ErrorCode::AlreadyLabeled, "triage item '" + item_id + "' is " +
                                                   std::string(to_string(item.status)));
    }
    if (item.kind == DatasetTask::router && !std::holds_alternative<ExpertId>(label)) {
        throw Error(ErrorCode::ValidationError, "routing items take an expert label");
    }
    if (item.kind == DatasetTask::rephrasal) {
        const auto* list = std::get_if<std::vector<std::string>>(&label);
        if (!list) throw Error(ErrorCode::ValidationError, "rephrasal items take a list of queries");
        std::size_t usable = 0;
        for (const auto& q : *list) usable += text::is_blank(q) ? 0 : 1;
        if (usable < 2 || usable != list->size()) {
            throw Error(ErrorCode::ValidationError, "rephrasal labels need at least two non-blank queries");
        }
    }
    json event = {{"op", "label"}, {"item_id", item_id}, {"label", label_json(label)}};
    store_->append(EventKind::label, event.dump());
    apply(event);
    return item;
}

TriageItem TriageBoard::dismiss(const std::string& item_id) {
    std::lock_guard lock(mu_);
    auto& item = at(item_id);
    if (item.status != TriageStatus::pending) {
        throw Error(ErrorCode::AlreadyLabeled, "triage item '" + item_id + "' is " +
                                                   std::string(to_string(item.status)));
    }
    json event = {{"op", "dismiss"}, {"item_id", item_id}};
    store_->append(EventKind::label, event.dump());
    apply(event);
    return item;
}

std::vector<TriageItem> TriageBoard::unconsumed(DatasetTask kind) const {
    std::lock_guard lock(mu_);
    std::vector<TriageItem> out;
    for (const auto& id : order_) {
        const auto& item = items_.at(id);
        if (item.kind == kind && item.status == TriageStatus::confirmed_error && !item.consumed_by) {
            out.push_back(item);
        }
    }
    return out;
}

void TriageBoard::mark_consumed(const std::vector<std::string>& item_ids, const std::string& cycle_id) {
    if (item_ids.empty()) return;
    std::lock_guard lock(mu_);
    for (const auto& id : item_ids) at(id);
    json event = {{"op", "consumed"}, {"item_ids", item_ids}, {"cycle_id", cycle_id}};
    store_->append(EventKind::label, event.dump());
    apply(event);
}

std::size_t TriageBoard::confirmed_count() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [_, item] : items_) n += item.status == TriageStatus::confirmed_error ? 1 : 0;
    return n;
}

}  // namespace flywheel
