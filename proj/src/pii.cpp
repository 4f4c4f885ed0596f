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

#include "flywheel/pii.hpp"

#include "flywheel/error.hpp"

namespace flywheel {

std::vector<PiiPattern> default_pii_patterns() {
    return {
        {R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})", "[EMAIL]", false},
        {R"(\+[1-9][0-9]{7,14}\b|\(?\b[0-9]{3}\)?[-. ][0-9]{3}[-. ][0-9]{4}\b)", "[PHONE]", false},
        {R"(\bnv[0-9]{6}\b)", "[EMPID]", true},
    };
}

PiiScrubber::PiiScrubber(const std::vector<PiiPattern>& patterns) {
    for (const auto& p : patterns) {
        auto flags = std::regex::ECMAScript;
        if (p.icase) flags |= std::regex::icase;
        try {
            rules_.emplace_back(std::regex(p.regex, flags), p.replacement);
        } catch (const std::regex_error& e) {
            throw Error(ErrorCode::InvalidArgument, "bad PII pattern '" + p.regex + "': " + e.what());
        }
    }
}

std::string PiiScrubber::scrub(const std::string& text) const {
    std::string out = text;
    for (const auto& [re, replacement] : rules_) out = std::regex_replace(out, re, replacement);
    return out;
}

}  // namespace flywheel
