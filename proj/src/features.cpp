#include "wateruse/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wateruse/error.hpp"

namespace wateruse {

namespace {

constexpr int kStatsVersion = 1;

nlohmann::json interval_json(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }

Interval interval_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

std::size_t outliers_to_drop(std::size_t n) noexcept {
    if (n <= 1) return 0;
    const std::size_t drop = (n + 99) / 100;
    return std::min(drop, n - 1);
}

std::vector<std::size_t> robust_retained(std::span<const double> values) {
    if (values.empty()) {
        fail(ErrorCode::InvalidInput, "robust interval of an empty sample");
    }
    const std::size_t n = values.size();
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = std::abs(values[a] - mean);
        const double db = std::abs(values[b] - mean);
        if (da != db) return da > db;
        if (values[a] != values[b]) return values[a] > values[b];
        return a < b;
    });
    std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(outliers_to_drop(n)), order.end());
    std::sort(kept.begin(), kept.end());
    return kept;
}

Interval robust_interval(std::span<const double> values) {
    const auto kept = robust_retained(values);
    Interval out{values[kept.front()], values[kept.front()]};
    for (auto i : kept) {
        out.lo = std::min(out.lo, values[i]);
        out.hi = std::max(out.hi, values[i]);
    }
    return out;
}

FeatureStats learn_bounds(const std::vector<EventRecord>& labeled_events, std::span<const Fixture> required) {
    std::array<std::vector<EventFeatures>, kFixtureCount> per;
    for (const auto& ev : labeled_events) {
        if (ev.label && !ev.flows.empty()) per[index_of(*ev.label)].push_back(compute_features(ev));
    }
    for (Fixture f : required) {
        if (per[index_of(f)].empty()) {
            fail(ErrorCode::MissingFixtureData, "no training events for " + std::string(to_string(f)));
        }
    }
    FeatureStats stats;
    for (Fixture f : kAllFixtures) {
        const auto& feats = per[index_of(f)];
        if (feats.empty()) continue;
        std::vector<double> d, v, p;
        for (const auto& x : feats) {
            d.push_back(x.duration_s);
            v.push_back(x.volume_l);
            p.push_back(x.peak_lps);
        }
        FixtureBounds& b = stats[f];
        b.present = true;
        b.count = feats.size();
        b.duration_s = robust_interval(d);
        b.volume_l = robust_interval(v);
        b.peak_lps = robust_interval(p);
    }
    return stats;
}

nlohmann::json to_json(const FeatureStats& stats) {
    nlohmann::json fixtures = nlohmann::json::array();
    for (Fixture f : kAllFixtures) {
        const auto& b = stats[f];
        if (!b.present) continue;
        fixtures.push_back({{"name", to_string(f)},
                            {"count", b.count},
                            {"duration_s", interval_json(b.duration_s)},
                            {"volume_l", interval_json(b.volume_l)},
                            {"peak_lps", interval_json(b.peak_lps)}});
    }
    return {{"version", kStatsVersion}, {"confidence", 0.99}, {"fixtures", fixtures}};
}

FeatureStats stats_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != kStatsVersion) {
            fail(ErrorCode::ModelError, "unsupported feature stats version");
        }
        FeatureStats stats;
        for (const auto& fx : doc.at("fixtures")) {
            const auto name = fx.at("name").get<std::string>();
            const auto f = parse_fixture(name);
            if (!f) fail(ErrorCode::ModelError, "unknown fixture '" + name + "'");
            FixtureBounds& b = stats[*f];
            b.present = true;
            b.count = fx.value("count", std::size_t{0});
            b.duration_s = interval_from(fx.at("duration_s"));
            b.volume_l = interval_from(fx.at("volume_l"));
            b.peak_lps = interval_from(fx.at("peak_lps"));
            if (b.duration_s.lo > b.duration_s.hi || b.volume_l.lo > b.volume_l.hi || b.peak_lps.lo > b.peak_lps.hi) {
                fail(ErrorCode::ModelError, "inverted bounds for " + name);
            }
        }
        return stats;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ModelError, std::string("malformed feature stats: ") + e.what());
    }
}

}  // namespace wateruse
