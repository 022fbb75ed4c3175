// Copyright 2026 The SAVAE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <utility>

namespace savae {

// SplitMix64 constants (Steele, Lea & Flood, 2014).
inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based SplitMix64 stream.
///
/// The i-th raw draw (i = 1, 2, ...) is mix64(key + i * kGoldenGamma), so a
/// stream is fully described by (key, counter) and is bit-identical on every
/// platform. The key of a fresh stream is mix64(seed); a substream derives
/// its key as mix64(key ^ mix64(id + kGoldenGamma)). Normal draws use the
/// Box-Muller transform and cache the second value of each pair.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) noexcept
        : key_(mix64(seed))
    {
    }

    CounterRng substream(std::uint64_t id) const noexcept
    {
        CounterRng child(0);
        child.key_ = mix64(key_ ^ mix64(id + kGoldenGamma));
        return child;
    }

    CounterRng substream(std::initializer_list<std::uint64_t> path) const noexcept
    {
        CounterRng out = *this;
        for (auto id : path)
            out = out.substream(id);
        return out;
    }

    std::uint64_t next_u64() noexcept
    {
        ++counter_;
        return mix64(key_ + counter_ * kGoldenGamma);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

    /// Uniform on (0, 1).
    double uniform_open() noexcept
    {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    /// Unbiased integer in [0, n) by rejection; n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) noexcept
    {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= threshold)
                return x % n;
        }
    }

    double normal() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    void fill_normal(std::span<double> out) noexcept
    {
        for (auto& v : out)
            v = normal();
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// In-place Fisher-Yates shuffle driven by a CounterRng.
template <class T>
void shuffle_in_place(std::span<T> items, CounterRng& rng) noexcept
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

} // namespace savae
