#include "devstab/rng.hpp"

#include <cmath>
#include <numbers>

namespace devstab {

std::uint64_t stable_hash64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_key(std::uint64_t parent, std::uint64_t child) {
    return splitmix64(splitmix64(parent) ^ (child * 0xd1b54a32d192ed03ULL + 0x2545f4914f6cdd1dULL));
}

std::uint64_t derive_key(std::uint64_t parent, std::string_view label) {
    return derive_key(parent, stable_hash64(label));
}

std::uint64_t CounterRng::at(std::uint64_t position) const {
    // Two rounds of the splitmix finaliser over (key, position).
    return splitmix64(key_ ^ splitmix64(position + 0x632be59bd9b4e019ULL));
}

double CounterRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t CounterRng::next_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Multiply-shift; bias is below 2^-64 * span, negligible at the ranges used here.
    const auto r = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<std::int64_t>(r >> 64);
}

namespace {
double box_muller(std::uint64_t a, std::uint64_t b) {
    // u1 in (0,1] so the log is finite.
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}
} // namespace

double CounterRng::next_gaussian() {
    const std::uint64_t a = next_u64();
    const std::uint64_t b = next_u64();
    return box_muller(a, b);
}

double CounterRng::gaussian_at(std::uint64_t base, std::uint64_t i) const {
    return box_muller(at(base + 2 * i), at(base + 2 * i + 1));
}

} // namespace devstab
