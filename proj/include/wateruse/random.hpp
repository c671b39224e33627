#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace wateruse {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Folds a seed and any number of coordinates (day, fixture, ordinal, ...) into one stream key.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t k = mix64(seed);
    for (auto c : coords) {
        k = mix64(k ^ mix64(c + 0x632be59bd9b4e019ULL));
    }
    return k;
}

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t coord) noexcept {
    return stream_key(seed, {coord});
}

/// Counter-based generator: output n is a pure function of (key, n), so streams keyed by
/// coordinates are independent of the order in which they are consumed.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform double in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace wateruse
