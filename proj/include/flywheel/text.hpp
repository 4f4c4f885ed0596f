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

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace flywheel::text {

std::string trim(std::string_view s);
bool is_blank(std::string_view s);
std::string to_lower(std::string_view s);

/// Trim, collapse internal whitespace runs to one space, ASCII case-fold.
std::string normalize_key(std::string_view s);

/// normalize_key plus removal of trailing punctuation (. ? ! , ; :).
std::string normalize_for_dedup(std::string_view s);

/// Lower-cased alphanumeric runs, in order of appearance.
std::vector<std::string> tokenize(std::string_view s);
std::set<std::string> token_set(std::string_view s);

/// |a ∩ b| / |a ∪ b|; two empty sets score 0.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// Words made only of ASCII capitals, at least `min_len` long ("RESS", "NVIDIA").
std::vector<std::string> uppercase_acronyms(std::string_view s, std::size_t min_len = 3);

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);

}  // namespace flywheel::text
