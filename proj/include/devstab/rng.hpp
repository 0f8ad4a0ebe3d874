#pragma once

#include <cstdint>
#include <string_view>

namespace devstab {

/// Stable 64-bit FNV-1a hash; identical on every platform.
std::uint64_t stable_hash64(std::string_view s);

std::uint64_t splitmix64(std::uint64_t x);

/// Combine a parent key with a child value into an independent key.
std::uint64_t derive_key(std::uint64_t parent, std::uint64_t child);
std::uint64_t derive_key(std::uint64_t parent, std::string_view label);

/// Counter-based generator: draw n is a pure function of (key, counter + n), so
/// streams can be split by key and consumed in any order.
class CounterRng {
public:
    CounterRng() = default;
    explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    /// Raw 64-bit value at an absolute position, without advancing.
    std::uint64_t at(std::uint64_t position) const;

    std::uint64_t next_u64() { return at(counter_++); }
    /// Uniform in [0,1).
    double next_double();
    /// Uniform integer in [lo, hi].
    std::int64_t next_int(std::int64_t lo, std::int64_t hi);
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
    /// Standard normal via Box-Muller; consumes two draws.
    double next_gaussian();

    /// Standard normal for slot i of a block starting at `base`; uses positions base+2i, base+2i+1.
    double gaussian_at(std::uint64_t base, std::uint64_t i) const;

    void advance(std::uint64_t n) { counter_ += n; }

    CounterRng split(std::string_view label) const { return CounterRng(derive_key(key_, label)); }
    CounterRng split(std::uint64_t child) const { return CounterRng(derive_key(key_, child)); }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace devstab
