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

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace flywheel {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes followed by a splitmix finalizer. Stable across
/// platforms and releases; used for traffic bucketing.
std::uint64_t stable_hash(std::string_view s) noexcept;

/// Small seeded generator with a platform-independent sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() noexcept;
    /// Uniform in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Uniform in [0, 1).
    double unit() noexcept;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace flywheel
