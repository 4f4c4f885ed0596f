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

#include <regex>
#include <string>
#include <vector>

namespace flywheel {

struct PiiPattern {
    std::string regex;
    std::string replacement;
    bool icase = false;
};

/// Email, E.164-style / North-American phone numbers, and "nv" + 6-digit
/// employee ids, applied in that order.
std::vector<PiiPattern> default_pii_patterns();

/// Replaces PII matches with placeholder tokens. Idempotent as long as no
/// replacement token matches a pattern (true for the defaults).
class PiiScrubber {
public:
    PiiScrubber() : PiiScrubber(default_pii_patterns()) {}
    explicit PiiScrubber(const std::vector<PiiPattern>& patterns);

    std::string scrub(const std::string& text) const;

private:
    std::vector<std::pair<std::regex, std::string>> rules_;
};

inline std::string scrub_pii(const std::string& text) {
    static const PiiScrubber scrubber;
    return scrubber.scrub(text);
}

}  // namespace flywheel
