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

#include "flywheel/clock.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <limits>

#include "flywheel/error.hpp"
#include "flywheel/random.hpp"

namespace flywheel {

std::string format_instant(Instant t) {
    std::time_t secs = static_cast<std::time_t>(t >= 0 ? t / 1000 : (t - 999) / 1000);
    int millis = static_cast<int>(t - static_cast<Instant>(secs) * 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
    return buf;
}

Instant parse_instant(const std::string& s) {
    std::tm tm{};
    int millis = 0;
    int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3dZ", &tm.tm_year, &tm.tm_mon,
                        &tm.tm_mday, &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &millis);
    if (n < 6) throw Error(ErrorCode::ParseError, "bad timestamp: " + s);
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return static_cast<Instant>(timegm(&tm)) * 1000 + (n == 7 ? millis : 0);
}

TimeWindow TimeWindow::all() {
    return {std::numeric_limits<Instant>::min(), std::numeric_limits<Instant>::max()};
}

Instant SystemClock::now() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

IdGenerator::IdGenerator()
    : seed_(static_cast<std::uint64_t>(
          std::chrono::high_resolution_clock::now().time_since_epoch().count())) {}

std::string IdGenerator::next(const std::string& prefix) {
    std::uint64_t n = counter_.fetch_add(1);
    std::uint64_t v = splitmix64(seed_ ^ splitmix64(n + 0x9e3779b97f4a7c15ULL));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return prefix + "-" + buf;
}

}  // namespace flywheel
