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
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/curation.hpp"
#include "flywheel/event_store.hpp"

namespace flywheel {

enum class TriageStatus { pending, confirmed_error, dismissed };
std::string_view to_string(TriageStatus s) noexcept;
std::optional<TriageStatus> parse_triage_status(std::string_view s);

/// SME label: a corrected expert (routing) or corrected rephrasal list.
using SmeLabel = std::variant<ExpertId, std::vector<std::string>>;

struct TriageItem {
    std::string item_id;
    std::string trace_id;
    DatasetTask kind = DatasetTask::router;
    std::string query;
    std::optional<ExpertId> expert_selected;
    std::string verdict_summary;
    TriageStatus status = TriageStatus::pending;
    std::optional<SmeLabel> sme_label;
    std::optional<std::string> consumed_by;  // cycle that used the label

    bool operator==(const TriageItem&) const = default;
};

void to_json(json& j, const TriageItem& t);
void from_json(const json& j, TriageItem& t);

/// SME review queue. State is a projection of label events and can be
/// rebuilt from the store at any time.
class TriageBoard {
public:
    TriageBoard(std::shared_ptr<EventStore> store, std::shared_ptr<IdGenerator> ids);

    /// Opens an item unless one already exists for (trace_id, kind).
    std::optional<TriageItem> open(const std::string& trace_id, DatasetTask kind,
                                   const std::string& query,
                                   std::optional<ExpertId> expert_selected,
                                   const std::string& verdict_summary);

    std::vector<TriageItem> list(std::optional<TriageStatus> status = {}) const;
    std::optional<TriageItem> find(const std::string& item_id) const;

    /// Throws NotFound, AlreadyLabeled, or ValidationError (label shape does
    /// not match the item kind).
    TriageItem label(const std::string& item_id, const SmeLabel& label);
    TriageItem dismiss(const std::string& item_id);

    /// Confirmed, not yet consumed items of `kind`.
    std::vector<TriageItem> unconsumed(DatasetTask kind) const;
    void mark_consumed(const std::vector<std::string>& item_ids, const std::string& cycle_id);

    std::size_t confirmed_count() const;

private:
    void apply(const json& event);
    TriageItem& at(const std::string& item_id);

    std::shared_ptr<EventStore> store_;
    std::shared_ptr<IdGenerator> ids_;
    mutable std::mutex mu_;
    std::vector<std::string> order_;
    std::map<std::string, TriageItem> items_;
    std::map<std::pair<std::string, DatasetTask>, std::string> by_trace_;
};

}  // namespace flywheel
