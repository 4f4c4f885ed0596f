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

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>

namespace flywheel {

/// Milliseconds since the Unix epoch, UTC.
using Instant = std::int64_t;

constexpr Instant kMinute = 60'000;
constexpr Instant kHour = 60 * kMinute;

std::string format_instant(Instant t);  // 2025-01-06T09:30:00.000Z
Instant parse_instant(const std::string& s);

/// Half-open interval [from, to).
struct TimeWindow {
    Instant from = 0;
    Instant to = 0;

    bool contains(Instant t) const noexcept { return t >= from && t < to; }
    static TimeWindow all();
    bool operator==(const TimeWindow&) const = default;
};

class Clock {
public:
    virtual ~Clock() = default;
    virtual Instant now() = 0;
};

class SystemClock final : public Clock {
public:
    Instant now() override;
};

/// Deterministic clock for simulations and tests; every read advances by `step`.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Instant start, Instant step = 0) : now_(start), step_(step) {}

    Instant now() override { return now_.fetch_add(step_); }
    void set(Instant t) { now_.store(t); }
    void advance(Instant delta) { now_.fetch_add(delta); }

private:
    std::atomic<Instant> now_;
    Instant step_;
};

/// Produces unique ids of the form "<prefix>-<16 hex>". A fixed seed yields a
/// fixed sequence.
class IdGenerator {
public:
    /// Seeded from the wall clock; use the explicit form for reproducible runs.
    IdGenerator();
    explicit IdGenerator(std::uint64_t seed) : seed_(seed) {}

    std::string next(const std::string& prefix);

private:
    std::uint64_t seed_;
    std::atomic<std::uint64_t> counter_{0};
};

}  // namespace flywheel
