#include "wateruse/default_model.hpp"

#include <cmath>

namespace wateruse {

namespace {

using Shape = std::vector<double>;

// Appends a burst: linear rise over `rise` samples, body from `body`, linear fall over `fall`.
template <typename Body>
void burst(Shape& out, std::size_t start, std::size_t length, std::size_t rise, std::size_t fall, Body body) {
    if (out.size() < start + length) out.resize(start + length, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
        const double u = length == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(length - 1);
        double v = body(u);
        if (i < rise) v *= static_cast<double>(i + 1) / static_cast<double>(rise + 1);
        if (length - 1 - i < fall) v *= static_cast<double>(length - i) / static_cast<double>(fall + 1);
        out[start + i] = v;
    }
}

Shape flat(std::size_t n, std::size_t rise, std::size_t fall) {
    Shape s;
    burst(s, 0, n, rise, fall, [](double) { return 1.0; });
    return s;
}

// Toilet: full-bore fill, then the refill valve throttles down.
Shape toilet_taper() {
    Shape s;
    burst(s, 0, 70, 2, 1, [](double u) { return u < 0.4 ? 1.0 : 1.0 - 0.75 * (u - 0.4); });
    return s;
}

Shape toilet_decay() {
    Shape s;
    burst(s, 0, 60, 1, 1, [](double u) { return 0.3 + 0.7 * std::exp(-2.5 * u); });
    return s;
}

Shape shower_plateau() { return flat(480, 6, 4); }

Shape shower_soap_dip() {
    Shape s;
    burst(s, 0, 480, 6, 4, [](double u) { return u > 0.4 && u < 0.58 ? 0.25 : 1.0; });
    return s;
}

Shape shower_rising() {
    Shape s;
    burst(s, 0, 480, 3, 4, [](double u) { return u < 0.3 ? 0.55 + 1.5 * u : 1.0; });
    return s;
}

Shape faucet_rect() { return flat(30, 0, 0); }

// Irregular single faucet (plate washing): three flow levels.
Shape faucet_varying() {
    Shape s;
    burst(s, 0, 60, 0, 0, [](double u) { return u < 0.33 ? 0.55 : (u < 0.7 ? 1.0 : 0.75); });
    return s;
}

Shape clothes_washer_cycle() {
    Shape s;
    const std::size_t starts[] = {0, 520, 1100, 1800, 2561};
    const std::size_t lengths[] = {130, 110, 120, 95, 139};
    for (std::size_t k = 0; k < 5; ++k) {
        burst(s, starts[k], lengths[k], 2, 1, [](double u) { return 1.0 - 0.12 * u; });
    }
    return s;
}

Shape dishwasher_cycle() {
    Shape s;
    auto fill = [](double u) { return 0.85 + 0.15 * std::sin(3.14159265358979 * u); };
    auto spurt = [](double) { return 0.6; };
    burst(s, 0, 8, 1, 1, spurt);
    burst(s, 60, 70, 3, 3, fill);
    burst(s, 600, 85, 3, 3, fill);
    burst(s, 720, 7, 1, 1, spurt);
    burst(s, 1100, 60, 3, 3, fill);
    burst(s, 1500, 80, 3, 3, fill);
    burst(s, 2000, 75, 3, 3, fill);
    burst(s, 2120, 8, 1, 1, spurt);
    burst(s, 2713, 80, 3, 3, fill);
    return s;
}

GaussianComponent component(double weight, double dur, double vol, double sd_dur, double sd_vol, double corr) {
    GaussianComponent g;
    g.weight = weight;
    g.mean = {dur, vol};
    const double c = corr * sd_dur * sd_vol;
    g.cov = {{{sd_dur * sd_dur, c}, {c, sd_vol * sd_vol}}};
    return g;
}

// Hourly profile with a morning and an evening peak, shifted and weighted per fixture.
std::array<double, 24> hourly(double morning_hour, double morning_w, double evening_hour, double evening_w,
                              double base) {
    std::array<double, 24> w{};
    for (int h = 0; h < 24; ++h) {
        const double x = h + 0.5;
        const double night = (h >= 1 && h < 6) ? 0.1 : 1.0;
        w[static_cast<std::size_t>(h)] = night * (base + morning_w * std::exp(-0.5 * std::pow((x - morning_hour) / 1.5, 2)) +
                                                  evening_w * std::exp(-0.5 * std::pow((x - evening_hour) / 2.0, 2)));
    }
    return w;
}

}  // namespace

SignatureLibrary default_library() {
    SignatureLibrary lib;
    lib.resolution_s = 1.0;
    lib.provenance.source = "bundled synthetic signatures";
    auto add = [&](Fixture f, SignatureKind kind, const Shape& s) {
        lib.add(Signature::from_flows(f, kind, s, lib.resolution_s));
    };
    add(Fixture::Toilet, SignatureKind::Regular, toilet_taper());
    add(Fixture::Toilet, SignatureKind::Regular, toilet_decay());
    add(Fixture::Shower, SignatureKind::Regular, shower_plateau());
    add(Fixture::Shower, SignatureKind::Regular, shower_soap_dip());
    add(Fixture::Shower, SignatureKind::Regular, shower_rising());
    add(Fixture::Faucet, SignatureKind::Regular, faucet_rect());
    add(Fixture::Faucet, SignatureKind::Regular, faucet_varying());

    CalibrationConfig config;
    config.source = lib.provenance.source;
    for (auto [f, cycle] : {std::pair{Fixture::ClothesWasher, clothes_washer_cycle()},
                            std::pair{Fixture::Dishwasher, dishwasher_cycle()}}) {
        Signature full = Signature::from_flows(f, SignatureKind::FullCycle, cycle, lib.resolution_s);
        for (auto& sub : derive_sub_patterns(full, lib.resolution_s, config)) lib.add(std::move(sub));
        lib.add(std::move(full));
    }
    lib.validate();
    return lib;
}

UsageModel default_model() {
    UsageModel m;
    m.resolution_s = 1.0;
    m.occupants = 4;
    m.library = default_library();

    FixturePriors toilet;
    toilet.fixture = Fixture::Toilet;
    toilet.events_per_day = CountDistribution::negative_binomial(6.0, 6.0 / 17.0);  // mean 11
    toilet.start_time.hourly_weights = hourly(7.5, 3.0, 20.0, 2.0, 1.0);
    toilet.duration_volume.components = {component(0.6, 70, 5.0, 15, 0.8, 0.7),
                                         component(0.4, 30, 2.0, 8, 0.4, 0.7)};
    toilet.flow_bounds = {0.04, 0.10};

    FixturePriors shower;
    shower.fixture = Fixture::Shower;
    shower.events_per_day = CountDistribution::poisson(2.0);
    shower.start_time.hourly_weights = hourly(7.0, 5.0, 21.0, 3.0, 0.3);
    shower.duration_volume.components = {component(0.7, 480, 52, 150, 15, 0.85),
                                         component(0.3, 250, 28, 70, 8, 0.8)};
    shower.flow_bounds = {0.09, 0.15};

    FixturePriors faucet;
    faucet.fixture = Fixture::Faucet;
    faucet.events_per_day = CountDistribution::negative_binomial(4.0, 4.0 / 29.0);  // mean 25
    faucet.start_time.hourly_weights = hourly(8.0, 2.5, 19.5, 3.0, 1.0);
    faucet.duration_volume.components = {component(0.7, 25, 1.2, 10, 0.5, 0.8),
                                         component(0.3, 80, 4.0, 25, 1.5, 0.8)};
    faucet.flow_bounds = {0.02, 0.11};

    FixturePriors washer;
    washer.fixture = Fixture::ClothesWasher;
    washer.efficiency = "high";
    washer.events_per_day = CountDistribution::poisson(0.7);
    washer.start_time.hourly_weights = hourly(10.0, 2.0, 17.0, 1.5, 0.4);
    washer.duration_volume.components = {component(1.0, 2700, 55, 30, 4, 0.5)};
    washer.flow_bounds = {0.06, 0.13};

    FixturePriors dishwasher;
    dishwasher.fixture = Fixture::Dishwasher;
    dishwasher.events_per_day = CountDistribution::poisson(1.0);
    dishwasher.start_time.hourly_weights = hourly(9.0, 0.8, 21.0, 4.0, 0.2);
    dishwasher.duration_volume.components = {component(1.0, 2793, 9.0, 30, 0.6, 0.5)};
    dishwasher.flow_bounds = {0.004, 0.03};

    m.fixtures = {toilet, shower, faucet, washer, dishwasher};
    m.validate();
    return m;
}

}  // namespace wateruse
