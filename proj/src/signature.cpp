#include "wateruse/signature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <Eigen/Dense>

#include "wateruse/clustering.hpp"
#include "wateruse/dtw.hpp"
#include "wateruse/error.hpp"

namespace wateruse {

namespace {

constexpr int kLibraryVersion = 1;

SignatureKind parse_kind(const std::string& s) {
    if (s == "regular") return SignatureKind::Regular;
    if (s == "full_cycle") return SignatureKind::FullCycle;
    if (s == "sub_pattern") return SignatureKind::SubPattern;
    fail(ErrorCode::ModelError, "unknown signature kind '" + s + "'");
}

ClusterAssignment single_cluster(std::size_t n) {
    ClusterAssignment a;
    a.k = 1;
    a.membership.assign(n, 0);
    a.sizes = {n};
    a.medoid_indices = {0};
    return a;
}

DtwOptions band_for(std::size_t length, double fraction) {
    DtwOptions o;
    if (fraction > 0.0) {
        o.band = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(length)));
    }
    return o;
}

}  // namespace

std::string_view to_string(SignatureKind kind) noexcept {
    switch (kind) {
        case SignatureKind::Regular: return "regular";
        case SignatureKind::FullCycle: return "full_cycle";
        case SignatureKind::SubPattern: return "sub_pattern";
    }
    return "regular";
}

double round_sig9(double v) {
    if (v == 0.0 || !std::isfinite(v)) return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

Signature Signature::from_flows(Fixture fixture, SignatureKind kind, std::span<const double> flows,
                                double resolution_s) {
    Normalized z = z_normalize(flows);
    Signature s;
    s.fixture = fixture;
    s.kind = kind;
    s.values = std::move(z.values);
    s.duration_s = static_cast<double>(flows.size()) * resolution_s;
    s.mean = z.stats.mean;
    s.std = z.stats.std;
    return s;
}

std::vector<double> Signature::shape() const {
    std::vector<double> out(values.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::max(0.0, values[i] * std + mean);
        peak = std::max(peak, out[i]);
    }
    // Pauses come back from nine-digit storage as rounding residue; keep them exactly zero.
    const double floor = 1e-7 * peak;
    for (auto& v : out) {
        if (v <= floor) v = 0.0;
    }
    return out;
}

std::vector<const Signature*> SignatureLibrary::candidates(Fixture f) const {
    std::vector<const Signature*> out;
    for (const auto& s : by_fixture_[index_of(f)]) {
        if (s.kind != SignatureKind::FullCycle) out.push_back(&s);
    }
    return out;
}

const Signature* SignatureLibrary::full_cycle(Fixture f) const {
    for (const auto& s : by_fixture_[index_of(f)]) {
        if (s.kind == SignatureKind::FullCycle) return &s;
    }
    return nullptr;
}

void SignatureLibrary::validate() const {
    for (Fixture f : kAllFixtures) {
        const auto& sigs = signatures(f);
        if (sigs.empty()) continue;
        std::size_t full = 0, sub = 0;
        for (const auto& s : sigs) {
            if (s.values.empty()) {
                fail(ErrorCode::ModelError, std::string(to_string(f)) + " has an empty signature");
            }
            full += s.kind == SignatureKind::FullCycle;
            sub += s.kind == SignatureKind::SubPattern;
        }
        if (is_intermittent(f) && (full != 1 || sub == 0)) {
            fail(ErrorCode::ModelError, std::string(to_string(f)) +
                                            " needs exactly one full-cycle signature and at least one sub-pattern");
        }
        if (!is_intermittent(f) && (full != 0 || sub != 0)) {
            fail(ErrorCode::ModelError, std::string(to_string(f)) + " may only hold regular signatures");
        }
    }
}

Signature smooth_signature(const Signature& sig, int degree) {
    const auto n = static_cast<Eigen::Index>(sig.values.size());
    if (degree < 0 || degree >= n) {
        fail(ErrorCode::InvalidInput, "smoothing degree must be in [0, length)");
    }
    const std::vector<double> y = sig.shape();
    Eigen::MatrixXd a(n, degree + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // Map sample positions to [-1, 1] to keep the Vandermonde system well conditioned.
        const double x = n == 1 ? 0.0 : 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
        double p = 1.0;
        for (int d = 0; d <= degree; ++d) {
            a(i, d) = p;
            p *= x;
        }
        b(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
    const Eigen::VectorXd fit = a * coef;
    std::vector<double> flows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        flows[static_cast<std::size_t>(i)] = std::max(0.0, fit(i));
    }
    Signature out = Signature::from_flows(sig.fixture, sig.kind, flows, sig.duration_s / static_cast<double>(n));
    out.duration_s = sig.duration_s;
    return out;
}

std::vector<Signature> cluster_prototypes(const std::vector<std::vector<double>>& patterns, Fixture fixture,
                                          SignatureKind kind, double resolution_s, const CalibrationConfig& config) {
    std::vector<Signature> picked;
    if (patterns.empty()) {
        return picked;
    }
    std::vector<std::size_t> medoids;
    if (patterns.size() == 1) {
        medoids.push_back(0);
    } else {
        const SimilarityMatrix m = similarity_matrix(patterns);
        const KSelection sel = select_k(m, config.k_min, config.k_max, config.seed);
        for (std::size_t c = 0; c < sel.best.k; ++c) {
            medoids.push_back(medoid_signature(m, sel.best, c));
        }
    }
    for (auto idx : medoids) {
        Signature s = Signature::from_flows(fixture, kind, patterns[idx], resolution_s);
        if (config.smooth_degree && *config.smooth_degree < static_cast<int>(s.values.size())) {
            s = smooth_signature(s, *config.smooth_degree);
        }
        const bool duplicate = std::any_of(picked.begin(), picked.end(), [&](const Signature& p) {
            return dtw_distance(p.values, s.values) <= config.dedup_distance;
        });
        if (!duplicate) picked.push_back(std::move(s));
    }
    return picked;
}

std::vector<Signature> derive_sub_patterns(const Signature& full_cycle, double resolution_s,
                                           const CalibrationConfig& config) {
    const FlowSeries cycle(full_cycle.shape(), resolution_s);
    std::vector<std::vector<double>> bursts;
    for (auto& ev : extract_events(cycle)) {
        bursts.push_back(std::move(ev.flows));
    }
    if (bursts.empty()) {
        fail(ErrorCode::InvalidInput, "full-cycle pattern has no flow");
    }
    CalibrationConfig burst_config = config;
    return cluster_prototypes(bursts, full_cycle.fixture, SignatureKind::SubPattern, resolution_s, burst_config);
}

std::vector<std::vector<double>> group_cycles(const std::vector<EventRecord>& bursts, double cycle_gap_s) {
    std::vector<const EventRecord*> sorted;
    for (const auto& b : bursts) sorted.push_back(&b);
    std::sort(sorted.begin(), sorted.end(),
              [](const EventRecord* a, const EventRecord* b) { return a->start_index < b->start_index; });

    std::vector<std::vector<double>> cycles;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double res = sorted[i]->resolution_s;
        const auto max_gap = static_cast<std::size_t>(std::floor(cycle_gap_s / res));
        std::size_t j = i + 1;
        while (j < sorted.size() && sorted[j]->start_index <= sorted[j - 1]->end_index() + max_gap) {
            ++j;
        }
        const std::size_t origin = sorted[i]->start_index;
        std::size_t end = 0;
        for (std::size_t k = i; k < j; ++k) end = std::max(end, sorted[k]->end_index());
        std::vector<double> pattern(end - origin, 0.0);
        for (std::size_t k = i; k < j; ++k) {
            std::copy(sorted[k]->flows.begin(), sorted[k]->flows.end(),
                      pattern.begin() + static_cast<std::ptrdiff_t>(sorted[k]->start_index - origin));
        }
        cycles.push_back(std::move(pattern));
        i = j;
    }
    return cycles;
}

SignatureLibrary extract_signatures(const std::vector<EventRecord>& labeled_events, double resolution_s,
                                    const CalibrationConfig& config) {
    std::array<std::vector<const EventRecord*>, kFixtureCount> by_fixture;
    for (const auto& ev : labeled_events) {
        if (ev.label && !ev.flows.empty()) by_fixture[index_of(*ev.label)].push_back(&ev);
    }
    if (std::all_of(by_fixture.begin(), by_fixture.end(), [](const auto& v) { return v.empty(); })) {
        fail(ErrorCode::MissingFixtureData, "no labeled events to calibrate from");
    }

    SignatureLibrary lib;
    lib.resolution_s = resolution_s;
    lib.provenance.source = config.source;
    lib.provenance.smoothed = config.smooth_degree.has_value();
    lib.provenance.smoothing_degree = config.smooth_degree.value_or(0);
    lib.provenance.seed = config.seed;
    lib.provenance.k_min = config.k_min;
    lib.provenance.k_max = config.k_max;

    for (Fixture f : kAllFixtures) {
        const auto& events = by_fixture[index_of(f)];
        if (events.empty()) continue;
        std::vector<std::vector<double>> patterns;
        for (const auto* ev : events) patterns.push_back(ev->flows);

        if (!is_intermittent(f)) {
            for (auto& s : cluster_prototypes(patterns, f, SignatureKind::Regular, resolution_s, config)) {
                lib.add(std::move(s));
            }
            continue;
        }

        std::vector<EventRecord> bursts;
        for (const auto* ev : events) bursts.push_back(*ev);
        const auto cycles = group_cycles(bursts, config.cycle_gap_s);
        std::size_t pick = 0;
        if (cycles.size() > 1) {
            std::vector<std::vector<double>> normalized;
            std::size_t longest = 0;
            for (const auto& c : cycles) {
                normalized.push_back(z_normalize(c).values);
                longest = std::max(longest, c.size());
            }
            const DtwOptions opts = band_for(longest, config.cycle_band_fraction);
            SimilarityMatrix m(cycles.size());
            for (std::size_t i = 0; i < cycles.size(); ++i) {
                for (std::size_t j = i + 1; j < cycles.size(); ++j) {
                    m.set(i, j, dtw(normalized[i], normalized[j], opts).cost);
                }
            }
            pick = medoid_signature(m, single_cluster(cycles.size()), 0);
        }
        lib.add(Signature::from_flows(f, SignatureKind::FullCycle, cycles[pick], resolution_s));
        for (auto& s : cluster_prototypes(patterns, f, SignatureKind::SubPattern, resolution_s, config)) {
            lib.add(std::move(s));
        }
    }
    return lib;
}

nlohmann::json to_json(const SignatureLibrary& library) {
    nlohmann::json fixtures = nlohmann::json::array();
    for (Fixture f : kAllFixtures) {
        const auto& sigs = library.signatures(f);
        if (sigs.empty()) continue;
        nlohmann::json list = nlohmann::json::array();
        for (const auto& s : sigs) {
            std::vector<double> values(s.values.size());
            std::transform(s.values.begin(), s.values.end(), values.begin(), round_sig9);
            list.push_back({{"kind", to_string(s.kind)},
                            {"duration_s", round_sig9(s.duration_s)},
                            {"mean", round_sig9(s.mean)},
                            {"std", round_sig9(s.std)},
                            {"values", values}});
        }
        fixtures.push_back({{"name", to_string(f)}, {"signatures", list}});
    }
    const auto& p = library.provenance;
    return {{"version", kLibraryVersion},
            {"resolution_s", library.resolution_s},
            {"provenance",
             {{"source", p.source},
              {"smoothed", p.smoothed},
              {"smoothing_degree", p.smoothing_degree},
              {"seed", p.seed},
              {"k_range", {p.k_min, p.k_max}}}},
            {"fixtures", fixtures}};
}

SignatureLibrary library_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != kLibraryVersion) {
            fail(ErrorCode::ModelError, "unsupported signature library version");
        }
        SignatureLibrary lib;
        lib.resolution_s = doc.at("resolution_s").get<double>();
        if (doc.contains("provenance")) {
            const auto& p = doc.at("provenance");
            lib.provenance.source = p.value("source", std::string("unspecified"));
            lib.provenance.smoothed = p.value("smoothed", false);
            lib.provenance.smoothing_degree = p.value("smoothing_degree", 0);
            lib.provenance.seed = p.value("seed", std::uint64_t{0});
            if (p.contains("k_range")) {
                lib.provenance.k_min = p.at("k_range").at(0).get<std::size_t>();
                lib.provenance.k_max = p.at("k_range").at(1).get<std::size_t>();
            }
        }
        for (const auto& fx : doc.at("fixtures")) {
            const auto name = fx.at("name").get<std::string>();
            const auto fixture = parse_fixture(name);
            if (!fixture) fail(ErrorCode::ModelError, "unknown fixture '" + name + "'");
            for (const auto& js : fx.at("signatures")) {
                Signature s;
                s.fixture = *fixture;
                s.kind = parse_kind(js.at("kind").get<std::string>());
                s.values = js.at("values").get<std::vector<double>>();
                if (s.values.empty()) fail(ErrorCode::ModelError, "empty signature for " + name);
                s.duration_s = js.value("duration_s", static_cast<double>(s.values.size()) * lib.resolution_s);
                if (js.contains("mean") && js.contains("std")) {
                    s.mean = js.at("mean").get<double>();
                    s.std = js.at("std").get<double>();
                } else {
                    // Without flow statistics the best available shape is the min-shifted pattern.
                    s.mean = -*std::min_element(s.values.begin(), s.values.end());
                    s.std = 1.0;
                }
                lib.add(std::move(s));
            }
        }
        lib.validate();
        return lib;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ModelError, std::string("malformed signature library: ") + e.what());
    }
}

}  // namespace wateruse
