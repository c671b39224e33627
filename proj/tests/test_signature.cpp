#include <doctest.h>

#include <cmath>
#include <random>

#include "wateruse/default_model.hpp"
#include "wateruse/dtw.hpp"
#include "wateruse/error.hpp"
#include "wateruse/generator.hpp"
#include "wateruse/signature.hpp"

using namespace wateruse;

namespace {

EventRecord labeled(Fixture f, std::vector<double> flows, std::size_t start = 0) {
    EventRecord e;
    e.flows = std::move(flows);
    e.start_index = start;
    e.label = f;
    e.features = compute_features(e.flows, 1.0);
    return e;
}

std::vector<double> shower_mode(int mode, std::size_t n, double level) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n - 1);
        switch (mode) {
            case 0: v[i] = level; break;
            case 1: v[i] = (u > 0.4 && u < 0.6) ? 0.2 * level : level; break;
            default: v[i] = level * (0.3 + 0.7 * u); break;
        }
    }
    v.front() = v.back() = 0.3 * level;
    return v;
}

}  // namespace

TEST_CASE("smoothing examples") {
    const std::vector<double> flat(12, 0.07);
    const auto c = Signature::from_flows(Fixture::Faucet, SignatureKind::Regular, flat, 1.0);
    const auto c0 = smooth_signature(c, 0).shape();
    for (double x : c0) CHECK(x == doctest::Approx(0.07));

    std::vector<double> quad(30);
    for (std::size_t i = 0; i < quad.size(); ++i) {
        const double x = static_cast<double>(i);
        quad[i] = 0.05 + 0.004 * x - 0.0001 * x * x;
    }
    const auto q = smooth_signature(Signature::from_flows(Fixture::Toilet, SignatureKind::Regular, quad, 1.0), 2).shape();
    for (std::size_t i = 0; i < quad.size(); ++i) CHECK(std::abs(q[i] - quad[i]) <= 1e-6);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> noise(-0.005, 0.005);
    std::vector<double> plateau(200);
    for (auto& x : plateau) x = 0.1 + noise(rng);
    const auto p = smooth_signature(Signature::from_flows(Fixture::Shower, SignatureKind::Regular, plateau, 1.0), 3).shape();
    for (double x : p) CHECK(std::abs(x - 0.1) <= 0.005);

    CHECK_THROWS_AS(smooth_signature(c, 12), Error);
}

TEST_CASE("identical events collapse to one signature") {
    const std::vector<EventRecord> events{labeled(Fixture::Toilet, {0.05, 0.08, 0.08, 0.02}),
                                          labeled(Fixture::Toilet, {0.05, 0.08, 0.08, 0.02}, 100)};
    const auto lib = extract_signatures(events, 1.0, {});
    CHECK(lib.signatures(Fixture::Toilet).size() == 1);
    CHECK(!lib.has(Fixture::Shower));

    const std::vector<EventRecord> single{labeled(Fixture::Faucet, {0.02, 0.03})};
    CHECK(extract_signatures(single, 1.0, {}).signatures(Fixture::Faucet).size() == 1);
    CHECK_THROWS_AS(extract_signatures({}, 1.0, {}), Error);
}

TEST_CASE("three distinct shower modes give three signatures") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> level(0.1, 0.14);
    std::vector<EventRecord> events;
    std::size_t t = 0;
    for (int rep = 0; rep < 6; ++rep) {
        for (int mode = 0; mode < 3; ++mode) {
            events.push_back(labeled(Fixture::Shower, shower_mode(mode, 150 + rng() % 40, level(rng)), t));
            t += 1000;
        }
    }
    const auto lib = extract_signatures(events, 1.0, {});
    CHECK(lib.signatures(Fixture::Shower).size() == 3);
}

TEST_CASE("signatures recovered from generated data resemble the source library") {
    const auto model = default_model();
    const auto ds = generate(model, 7, 7);
    std::vector<EventRecord> events;
    for (Fixture f : kAllFixtures) {
        for (auto& e : extract_labeled_events(ds.labeled_fixture(f))) events.push_back(std::move(e));
    }
    CalibrationConfig cfg;
    cfg.seed = 7;
    const auto lib = extract_signatures(events, 1.0, cfg);
    for (Fixture f : {Fixture::Toilet, Fixture::Shower, Fixture::Faucet}) {
        REQUIRE(lib.has(f));
        for (const auto& s : lib.signatures(f)) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& src : model.library.signatures(f)) best = std::min(best, dtw_distance(s.values, src.values));
            CHECK(best <= 0.1 * static_cast<double>(s.values.size()));
        }
    }
    lib.validate();

    CHECK(to_json(lib).dump() == to_json(extract_signatures(events, 1.0, cfg)).dump());
}

TEST_CASE("library JSON round trip") {
    const auto lib = default_library();
    const auto doc = to_json(lib);
    const auto back = library_from_json(doc);
    CHECK(to_json(back).dump() == doc.dump());
    for (Fixture f : kAllFixtures) CHECK(back.signatures(f).size() == lib.signatures(f).size());
    CHECK(round_sig9(0.123456789123) == 0.123456789);
}

TEST_CASE("intermittent fixtures need both cycle forms") {
    SignatureLibrary lib;
    lib.add(Signature::from_flows(Fixture::Dishwasher, SignatureKind::SubPattern, std::vector<double>{0.01, 0.02}, 1.0));
    CHECK_THROWS_AS(lib.validate(), Error);
    lib.add(Signature::from_flows(Fixture::Dishwasher, SignatureKind::FullCycle,
                                  std::vector<double>{0.01, 0.02, 0, 0, 0.02}, 1.0));
    CHECK_NOTHROW(lib.validate());
    CHECK(lib.candidates(Fixture::Dishwasher).size() == 1);
    REQUIRE(lib.full_cycle(Fixture::Dishwasher) != nullptr);
    const auto shape = lib.full_cycle(Fixture::Dishwasher)->shape();
    CHECK(shape[2] == 0.0);
    CHECK(shape[4] == doctest::Approx(0.02));
}

TEST_CASE("sub-patterns come from the bursts of a cycle") {
    std::vector<double> cycle;
    for (int b = 0; b < 4; ++b) {
        for (int i = 0; i < 20; ++i) cycle.push_back(0.1);
        for (int i = 0; i < 30; ++i) cycle.push_back(0.0);
    }
    cycle.resize(cycle.size() - 30);
    const auto full = Signature::from_flows(Fixture::ClothesWasher, SignatureKind::FullCycle, cycle, 1.0);
    const auto subs = derive_sub_patterns(full, 1.0, {});
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].kind == SignatureKind::SubPattern);
    CHECK(subs[0].values.size() == 20);
}
