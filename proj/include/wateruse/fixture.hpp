#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace wateruse {

// Declaration order is the tie-break order used by the classifier.
enum class Fixture : std::size_t {
    Toilet = 0,
    Shower,
    Faucet,
    ClothesWasher,
    Dishwasher,
};

inline constexpr std::size_t kFixtureCount = 5;

inline constexpr std::array<Fixture, kFixtureCount> kAllFixtures{
    Fixture::Toilet, Fixture::Shower, Fixture::Faucet, Fixture::ClothesWasher, Fixture::Dishwasher};

constexpr std::size_t index_of(Fixture f) noexcept { return static_cast<std::size_t>(f); }

/// Dishwashers and clothes washers run a multi-burst program with zero-flow pauses.
constexpr bool is_intermittent(Fixture f) noexcept {
    return f == Fixture::ClothesWasher || f == Fixture::Dishwasher;
}

std::string_view to_string(Fixture f) noexcept;

/// Accepts canonical names plus the usual short forms (cw, dw, washer, ...). Case-insensitive.
std::optional<Fixture> parse_fixture(std::string_view name);

}  // namespace wateruse
