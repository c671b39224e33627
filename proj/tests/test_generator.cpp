#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wateruse/default_model.hpp"
#include "wateruse/error.hpp"
#include "wateruse/generator.hpp"

using namespace wateruse;

namespace {

std::pair<double, double> draw_moments(const CountDistribution& dist, std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = static_cast<double>(dist.draw(rng));
        s += x;
        s2 += x * x;
    }
    const double mean = s / static_cast<double>(n);
    return {mean, s2 / static_cast<double>(n) - mean * mean};
}

FixturePriors point_mass(double duration, double volume) {
    FixturePriors p = *default_model().priors(Fixture::Shower);
    p.duration_volume.components = {GaussianComponent{1.0, {duration, volume}, {{{0.0, 0.0}, {0.0, 0.0}}}}};
    return p;
}

Signature flat(std::size_t n) {
    return Signature::from_flows(Fixture::Faucet, SignatureKind::Regular, std::vector<double>(n, 1.0), 1.0);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("count distribution moments") {
    CounterRng rng(1);
    for (int i = 0; i < 1000; ++i) CHECK(CountDistribution::poisson(0.0).draw(rng) == 0);

    const std::size_t n = 100000;
    const auto [pm, pv] = draw_moments(CountDistribution::poisson(4.0), n, 2);
    CHECK(std::abs(pm - 4.0) <= 3.0 * std::sqrt(4.0 / n));
    CHECK(pv == doctest::Approx(4.0).epsilon(0.05));

    // r(1-p)/p and r(1-p)/p^2
    const auto [nm, nv] = draw_moments(CountDistribution::negative_binomial(2.0, 0.5), n, 3);
    CHECK(std::abs(nm - 2.0) <= 3.0 * std::sqrt(4.0 / n));
    CHECK(nv == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("event parameter sampling") {
    const auto model = default_model();

    const auto pm = point_mass(60.0, 6.0);
    const auto env = mean_flow_envelope(pm, model.library);
    CounterRng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto e = sample_event_params(pm, env, 1.0, rng);
        CHECK(e.duration_s == 60.0);
        CHECK(e.volume_l == 6.0);
        CHECK(!e.clamped);
        CHECK(e.start_s >= 0.0);
        CHECK(e.start_s < kSecondsPerDay);
    }

    const auto& shower = *model.priors(Fixture::Shower);
    const auto senv = mean_flow_envelope(shower, model.library);
    std::size_t inside = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = sample_event_params(shower, senv, 1.0, rng);
        inside += e.duration_s >= 90.0 && e.duration_s <= 880.0 && e.volume_l >= 13.0 && e.volume_l <= 90.0;
    }
    CHECK(static_cast<double>(inside) / n >= 0.95);

    const auto bad = point_mass(5.0, 50.0);
    const auto benv = mean_flow_envelope(bad, model.library);
    const auto e = sample_event_params(bad, benv, 1.0, rng);
    CHECK(e.clamped);
    CHECK(e.volume_l / e.duration_s <= 4.0 * benv.hi * (1 + 1e-12));
    CHECK(e.volume_l / e.duration_s >= 0.25 * benv.lo);
}

TEST_CASE("scale_signature examples") {
    const FlowBounds wide{0.0, 1.0};
    const auto f = scale_signature(flat(5), 10.0, 1.0, 1.0, wide);
    REQUIRE(f.size() == 10);
    for (double x : f) CHECK(x == doctest::Approx(0.1));

    std::vector<double> tri;
    for (int i = 0; i <= 10; ++i) tri.push_back(5.0 - std::abs(i - 5.0));
    const auto tsig = Signature::from_flows(Fixture::Toilet, SignatureKind::Regular, tri, 1.0);
    const FlowBounds tight{0.0, 0.15};
    const auto t = scale_signature(tsig, 10.0, 1.0, 1.0, tight);
    CHECK(t.size() > 10);
    CHECK(*std::max_element(t.begin(), t.end()) <= 0.15 + 1e-12);
    CHECK(std::abs(sum(t) - 1.0) <= 0.005);

    CHECK_THROWS_AS(scale_signature(flat(5), 10.0, 1.0, 1.0, FlowBounds{0.0, 0.01}), Error);
    try {
        scale_signature(flat(5), 10.0, 1.0, 1.0, FlowBounds{0.0, 0.01});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::VolumeInfeasible);
    }
    CHECK_THROWS_AS(scale_signature(flat(5), 0.5, 1.0, 1.0, wide), Error);
}

TEST_CASE("scaled signatures deliver their volume") {
    const auto model = default_model();
    CounterRng rng(17);
    for (Fixture fx : kAllFixtures) {
        const auto& pr = *model.priors(fx);
        const auto env = mean_flow_envelope(pr, model.library);
        for (const auto* sig : generation_signatures(model.library, fx)) {
            for (int i = 0; i < 20; ++i) {
                const auto e = sample_event_params(pr, env, 1.0, rng);
                try {
                    const auto flows = scale_signature(*sig, e.duration_s, e.volume_l, 1.0, pr.flow_bounds);
                    CHECK(std::abs(sum(flows) - e.volume_l) <= 0.005 * e.volume_l);
                    CHECK(*std::max_element(flows.begin(), flows.end()) <= pr.flow_bounds.max_peak * (1 + 1e-12));
                } catch (const Error& err) {
                    CHECK(err.code() == ErrorCode::VolumeInfeasible);
                }
            }
        }
    }
}

TEST_CASE("no expected events gives an all-zero trace") {
    auto model = default_model();
    for (auto& p : model.fixtures) p.events_per_day = CountDistribution::poisson(0.0);
    const auto ds = generate(model, 2, 1);
    CHECK(ds.ledger.empty());
    CHECK(ds.total.size() == 2 * 86400);
    CHECK(std::all_of(ds.total.samples().begin(), ds.total.samples().end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("generated dataset invariants") {
    const auto model = default_model();
    const auto ds = generate(model, 10, 42);

    double cap = 0.0;
    for (const auto& p : model.fixtures) cap = std::max(cap, p.flow_bounds.max_peak);
    std::size_t mismatched = 0, out_of_range = 0;
    for (std::size_t i = 0; i < ds.total.size(); ++i) {
        double s = 0.0;
        for (Fixture f : kAllFixtures) {
            const double x = ds.fixture_flows[index_of(f)][i];
            out_of_range += x < 0.0 || x > cap * (1 + 1e-12);
            s += x;
        }
        mismatched += ds.total[i] != s;
    }
    CHECK(mismatched == 0);
    CHECK(out_of_range == 0);

    double sampled = 0.0, realized = 0.0;
    for (const auto& e : ds.ledger) {
        const auto& flows = ds.fixture_flows[index_of(e.fixture)];
        const double v = std::accumulate(flows.begin() + static_cast<std::ptrdiff_t>(e.start_index),
                                         flows.begin() + static_cast<std::ptrdiff_t>(e.start_index + e.length), 0.0);
        CHECK(v == doctest::Approx(e.volume_l));
        if (e.truncated) continue;
        CHECK(std::abs(e.volume_l - e.sampled_volume_l) <= 0.005 * e.sampled_volume_l);
        sampled += e.sampled_volume_l;
        realized += e.volume_l;
    }
    CHECK(std::abs(realized - sampled) <= 0.001 * sampled);

    for (Fixture f : kAllFixtures) {
        std::vector<const LedgerEntry*> mine;
        for (const auto& e : ds.ledger)
            if (e.fixture == f) mine.push_back(&e);
        for (std::size_t i = 1; i < mine.size(); ++i)
            CHECK(mine[i]->start_index >= mine[i - 1]->start_index + mine[i - 1]->length);
    }
}

TEST_CASE("generation is deterministic and days are independent") {
    const auto model = default_model();
    const auto a = generate(model, 3, 11);
    const auto b = generate(model, 3, 11);
    CHECK(std::equal(a.total.samples().begin(), a.total.samples().end(), b.total.samples().begin()));
    CHECK(a.ledger.size() == b.ledger.size());

    const auto c = generate(model, 3, 12);
    CHECK(!std::equal(a.total.samples().begin(), a.total.samples().end(), c.total.samples().begin()));

    const auto longer = generate(model, 4, 11);
    std::size_t matched = 0;
    for (const auto& e : a.ledger) {
        if (e.truncated) continue;
        const bool found = std::any_of(longer.ledger.begin(), longer.ledger.end(), [&](const LedgerEntry& o) {
            return o.fixture == e.fixture && o.start_index == e.start_index && o.length == e.length &&
                   o.volume_l == e.volume_l;
        });
        CHECK(found);
        matched += found;
    }
    CHECK(matched > 0);

    CHECK_THROWS_AS(generate(model, 0, 1), Error);
}

TEST_CASE("test-set scale") {
    const auto ds = generate(default_model(), 15, 15);
    std::size_t isolated = 0;
    for (const auto& s : ds.segments) isolated += !s.overlap_group;
    CHECK(isolated >= 300);
    CHECK(isolated <= 3000);
    CHECK(ds.overlap_groups >= 10);
    CHECK(ds.overlap_groups <= 200);
}

TEST_CASE("usage model JSON round trip and validation") {
    const auto model = default_model();
    const auto doc = to_json(model);
    CHECK(to_json(model_from_json(doc)).dump() == doc.dump());
    CHECK_NOTHROW(model.validate());

    auto p = *model.priors(Fixture::Toilet);
    p.duration_volume.components[0].weight += 0.1;
    CHECK_THROWS_AS(p.validate(), Error);

    p = *model.priors(Fixture::Toilet);
    p.duration_volume.components[0].cov = {{{1.0, 5.0}, {5.0, 1.0}}};
    CHECK_THROWS_AS(p.validate(), Error);

    p = *model.priors(Fixture::Toilet);
    p.flow_bounds = {0.2, 0.1};
    CHECK_THROWS_AS(p.validate(), Error);

    auto no_sigs = model;
    no_sigs.library.signatures(Fixture::Shower).clear();
    CHECK_THROWS_AS(no_sigs.validate(), Error);

    auto broken = doc;
    broken.erase("fixtures");
    CHECK_THROWS_AS(model_from_json(broken), Error);
}
