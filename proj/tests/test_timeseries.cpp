#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "wateruse/default_model.hpp"
#include "wateruse/error.hpp"
#include "wateruse/generator.hpp"
#include "wateruse/timeseries.hpp"

using namespace wateruse;

namespace {

// Mean and population std recomputed from scratch.
std::pair<double, double> moments(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

TEST_CASE("z_normalize examples") {
    const std::vector<double> constant{1, 1, 1};
    auto c = z_normalize(constant);
    CHECK(c.values == std::vector<double>{0, 0, 0});
    CHECK(c.stats.mean == 1.0);
    CHECK(c.stats.std == 0.0);

    const std::vector<double> pair{0, 2};
    auto p = z_normalize(pair);
    CHECK(p.values[0] == doctest::Approx(-1.0));
    CHECK(p.values[1] == doctest::Approx(1.0));
    CHECK(p.stats.mean == 1.0);
    CHECK(p.stats.std == 1.0);

    const std::vector<double> ramp{1, 2, 3, 4};
    auto [m, s] = moments(z_normalize(ramp).values);
    CHECK(std::abs(m) <= 1e-9);
    CHECK(std::abs(s - 1.0) <= 1e-9);

    CHECK_THROWS_AS(z_normalize(std::vector<double>{}), Error);
}

TEST_CASE("z_normalize is idempotent for non-constant input") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(2 + rng() % 40);
        for (auto& x : v) x = u(rng);
        const auto once = z_normalize(v).values;
        const auto twice = z_normalize(once).values;
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(once[i] - twice[i]) <= 1e-9);
    }
}

TEST_CASE("FlowSeries validates its samples") {
    CHECK_THROWS_AS(FlowSeries({0.1, -0.1}, 1.0), Error);
    CHECK_THROWS_AS(FlowSeries({0.1, NAN}, 1.0), Error);
    CHECK_THROWS_AS(FlowSeries({0.1}, 0.0), Error);
    FlowSeries s({0.0, 0.1}, 2.0, 100.0);
    CHECK(s.time_of(1) == 102.0);
}

TEST_CASE("extract_events examples") {
    CHECK(extract_events(FlowSeries({0, 0, 0}, 1.0)).empty());

    const auto ev = extract_events(FlowSeries({0, .1, .1, 0, 0, .2, 0}, 1.0));
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].start_index == 1);
    CHECK(ev[0].length() == 2);
    CHECK(ev[1].start_index == 5);
    CHECK(ev[1].length() == 1);

    SegmentationOptions merge;
    merge.min_gap = 3;
    const auto merged = extract_events(FlowSeries({0, .1, .1, 0, 0, .2, 0}, 1.0), merge);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].length() == 5);

    SegmentationOptions bad;
    bad.min_gap = 0;
    CHECK_THROWS_AS(extract_events(FlowSeries({0.1}, 1.0), bad), Error);
}

TEST_CASE("segmentation reconstructs the series and is idempotent") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(1 + rng() % 60);
        for (auto& x : v) x = (rng() % 3 == 0) ? 0.0 : 0.01 * static_cast<double>(1 + rng() % 20);
        SegmentationOptions opts;
        opts.zero_eps = (trial % 2) ? 0.05 : 0.0;
        const FlowSeries s(v, 1.0);
        const auto events = extract_events(s, opts);

        std::vector<double> rebuilt(v.size(), 0.0);
        double event_volume = 0.0;
        for (std::size_t k = 0; k < events.size(); ++k) {
            const auto& e = events[k];
            if (k > 0) CHECK(e.start_index > events[k - 1].end_index());
            CHECK(e.flows.front() > opts.zero_eps);
            CHECK(e.flows.back() > opts.zero_eps);
            std::copy(e.flows.begin(), e.flows.end(), rebuilt.begin() + static_cast<std::ptrdiff_t>(e.start_index));
            event_volume += e.features.volume_l;

            const auto again = extract_events(FlowSeries(e.flows, 1.0), opts);
            REQUIRE(again.size() == 1);
            CHECK(again[0].flows == e.flows);
        }
        double residual = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (rebuilt[i] == 0.0) residual += v[i];
            else CHECK(rebuilt[i] == v[i]);
        }
        const double total = std::accumulate(v.begin(), v.end(), 0.0);
        CHECK(std::abs(total - (event_volume + residual)) <= 1e-9 * std::max(1.0, total));
    }
}

TEST_CASE("compute_features examples") {
    const std::vector<double> a{0.1, 0.1};
    auto f = compute_features(a, 1.0);
    CHECK(f.duration_s == 2.0);
    CHECK(f.volume_l == doctest::Approx(0.2));
    CHECK(f.peak_lps == 0.1);

    const std::vector<double> b{0.05};
    f = compute_features(b, 10.0);
    CHECK(f.duration_s == 10.0);
    CHECK(f.volume_l == doctest::Approx(0.5));
    CHECK(f.peak_lps == 0.05);
}

TEST_CASE("resample_linear keeps endpoints") {
    const std::vector<double> v{0.0, 1.0, 0.0};
    const auto up = resample_linear(v, 5);
    CHECK(up == std::vector<double>{0.0, 0.5, 1.0, 0.5, 0.0});
    CHECK(resample_linear(std::vector<double>{0.3}, 4) == std::vector<double>(4, 0.3));
    CHECK(resample_linear(v, 3) == v);
}

TEST_CASE("labeled extraction splits on label changes") {
    LabeledTrace t{FlowSeries({0, .1, .1, .2, 0, .3}, 1.0),
                   {std::nullopt, Fixture::Toilet, Fixture::Toilet, Fixture::Faucet, std::nullopt, std::nullopt}};
    const auto ev = extract_labeled_events(t);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].label == Fixture::Toilet);
    CHECK(ev[0].length() == 2);
    CHECK(ev[1].label == Fixture::Faucet);
    CHECK(ev[1].start_index == 3);
}

TEST_CASE("generated trace: events = isolated bursts + overlap groups") {
    const auto ds = generate(default_model(), 15, 2024);
    std::size_t isolated = 0;
    for (const auto& s : ds.segments) isolated += !s.overlap_group;
    CHECK(extract_events(ds.total).size() == isolated + ds.overlap_groups);
}

TEST_CASE("generated showers mostly fall within 13-90 L") {
    const auto ds = generate(default_model(), 15, 99);
    std::size_t n = 0, inside = 0;
    for (const auto& e : ds.ledger) {
        if (e.fixture != Fixture::Shower || e.truncated) continue;
        ++n;
        inside += e.volume_l >= 13.0 && e.volume_l <= 90.0;
    }
    REQUIRE(n > 10);
    CHECK(static_cast<double>(inside) / static_cast<double>(n) >= 0.95);
}
