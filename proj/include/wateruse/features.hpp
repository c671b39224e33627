#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "wateruse/fixture.hpp"
#include "wateruse/timeseries.hpp"

namespace wateruse {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct FixtureBounds {
    bool present = false;
    std::size_t count = 0;  ///< training events
    Interval duration_s;
    Interval volume_l;
    Interval peak_lps;

    bool contains(const EventFeatures& f) const noexcept {
        return present && duration_s.contains(f.duration_s) && volume_l.contains(f.volume_l) &&
               peak_lps.contains(f.peak_lps);
    }
};

struct FeatureStats {
    std::array<FixtureBounds, kFixtureCount> fixtures;

    const FixtureBounds& operator[](Fixture f) const { return fixtures[index_of(f)]; }
    FixtureBounds& operator[](Fixture f) { return fixtures[index_of(f)]; }
};

/// Number of points dropped from a sample of n: ceil(n/100), never leaving the set empty.
std::size_t outliers_to_drop(std::size_t n) noexcept;

/// Drops the ceil(1%) points farthest from the mean (ties: larger value first, then lower
/// index) and returns the (min, max) of what remains.
Interval robust_interval(std::span<const double> values);

/// Indices kept by robust_interval, in input order.
std::vector<std::size_t> robust_retained(std::span<const double> values);

/// Per fixture and per feature robust intervals. For intermittent fixtures the events are
/// expected to be bursts (zero-gap splits of full cycles). Throws MissingFixtureData if one of
/// `required` has no events.
FeatureStats learn_bounds(const std::vector<EventRecord>& labeled_events,
                          std::span<const Fixture> required = kAllFixtures);

nlohmann::json to_json(const FeatureStats& stats);
FeatureStats stats_from_json(const nlohmann::json& doc);

}  // namespace wateruse
