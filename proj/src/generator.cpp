#include "wateruse/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "wateruse/error.hpp"

namespace wateruse {

namespace {

constexpr int kModelVersion = 1;
constexpr std::uint64_t kCountOrdinal = ~std::uint64_t{0};
constexpr std::size_t kMaxRedraws = 20;

double normal(CounterRng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

std::size_t samples_per_day(double resolution_s) {
    return static_cast<std::size_t>(std::llround(kSecondsPerDay / resolution_s));
}

std::string fixture_name(Fixture f) { return std::string(to_string(f)); }

}  // namespace

double CountDistribution::mean() const noexcept {
    return kind == Kind::Poisson ? lambda : r * (1.0 - p) / p;
}

std::size_t CountDistribution::draw(CounterRng& rng) const {
    if (kind == Kind::Poisson) {
        if (lambda <= 0.0) return 0;
        return static_cast<std::size_t>(std::poisson_distribution<long long>(lambda)(rng));
    }
    if (p >= 1.0) return 0;
    // Gamma-Poisson mixture; valid for non-integer sizes.
    const double rate = std::gamma_distribution<double>(r, (1.0 - p) / p)(rng);
    if (rate <= 0.0) return 0;
    return static_cast<std::size_t>(std::poisson_distribution<long long>(rate)(rng));
}

double StartTimeDistribution::sample(CounterRng& rng) const {
    const double u = rng.uniform() * std::accumulate(hourly_weights.begin(), hourly_weights.end(), 0.0);
    std::size_t hour = 0;
    double acc = 0.0;
    for (; hour < 23; ++hour) {
        acc += hourly_weights[hour];
        if (u < acc) break;
    }
    double t = (static_cast<double>(hour) + rng.uniform()) * 3600.0 + bandwidth_s * normal(rng);
    t = std::fmod(t, kSecondsPerDay);
    if (t < 0.0) t += kSecondsPerDay;
    return t;
}

std::array<double, 2> DurationVolumeMixture::sample(CounterRng& rng) const {
    double u = rng.uniform();
    std::size_t c = 0;
    for (; c + 1 < components.size(); ++c) {
        if (u < components[c].weight) break;
        u -= components[c].weight;
    }
    const auto& g = components[c];
    // Cholesky factor of a positive semi-definite 2x2 covariance.
    const double l11 = std::sqrt(std::max(0.0, g.cov[0][0]));
    const double l21 = l11 > 0.0 ? g.cov[1][0] / l11 : 0.0;
    const double l22 = std::sqrt(std::max(0.0, g.cov[1][1] - l21 * l21));
    const double z1 = normal(rng);
    const double z2 = normal(rng);
    return {g.mean[0] + l11 * z1, g.mean[1] + l21 * z1 + l22 * z2};
}

void FixturePriors::validate() const {
    const std::string name = fixture_name(fixture);
    if (duration_volume.components.empty()) {
        fail(ErrorCode::ModelError, name + ": duration/volume mixture has no components");
    }
    double wsum = 0.0;
    for (const auto& g : duration_volume.components) {
        if (!(g.weight >= 0.0) || !std::isfinite(g.mean[0]) || !std::isfinite(g.mean[1])) {
            fail(ErrorCode::ModelError, name + ": invalid mixture component");
        }
        wsum += g.weight;
        const double det = g.cov[0][0] * g.cov[1][1] - g.cov[0][1] * g.cov[1][0];
        if (g.cov[0][0] < 0.0 || g.cov[1][1] < 0.0 || det < -1e-12 || g.cov[0][1] != g.cov[1][0]) {
            fail(ErrorCode::ModelError, name + ": covariance is not symmetric positive semi-definite");
        }
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        fail(ErrorCode::ModelError, name + ": mixture weights must sum to 1");
    }
    if (!(flow_bounds.min_peak >= 0.0) || !(flow_bounds.min_peak < flow_bounds.max_peak)) {
        fail(ErrorCode::ModelError, name + ": flow bounds need 0 <= min < max");
    }
    const auto& c = events_per_day;
    const bool count_ok = c.kind == CountDistribution::Kind::Poisson
                              ? (c.lambda >= 0.0 && std::isfinite(c.lambda))
                              : (c.r > 0.0 && c.p > 0.0 && c.p <= 1.0 && std::isfinite(c.r));
    if (!count_ok) {
        fail(ErrorCode::ModelError, name + ": invalid events-per-day distribution");
    }
    double hsum = 0.0;
    for (double w : start_time.hourly_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::ModelError, name + ": invalid start-time weights");
        hsum += w;
    }
    if (hsum <= 0.0 || !(start_time.bandwidth_s >= 0.0)) {
        fail(ErrorCode::ModelError, name + ": start-time histogram is empty");
    }
}

const FixturePriors* UsageModel::priors(Fixture f) const {
    for (const auto& p : fixtures) {
        if (p.fixture == f) return &p;
    }
    return nullptr;
}

void UsageModel::validate() const {
    if (!(resolution_s > 0.0)) fail(ErrorCode::ModelError, "model resolution must be positive");
    library.validate();
    std::array<bool, kFixtureCount> seen{};
    for (const auto& p : fixtures) {
        if (seen[index_of(p.fixture)]) {
            fail(ErrorCode::ModelError, "duplicate priors for " + fixture_name(p.fixture));
        }
        seen[index_of(p.fixture)] = true;
        p.validate();
        if (generation_signatures(library, p.fixture).empty()) {
            fail(ErrorCode::ModelError, "no signatures for " + fixture_name(p.fixture));
        }
    }
}

std::vector<const Signature*> generation_signatures(const SignatureLibrary& library, Fixture f) {
    if (is_intermittent(f)) {
        const Signature* full = library.full_cycle(f);
        return full ? std::vector<const Signature*>{full} : std::vector<const Signature*>{};
    }
    return library.candidates(f);
}

FlowEnvelope mean_flow_envelope(const FixturePriors& priors, const SignatureLibrary& library) {
    double lo_ratio = std::numeric_limits<double>::infinity();
    double hi_ratio = 0.0;
    for (const Signature* s : generation_signatures(library, priors.fixture)) {
        const auto shape = s->shape();
        const double peak = *std::max_element(shape.begin(), shape.end());
        if (peak <= 0.0) continue;
        const double ratio = std::accumulate(shape.begin(), shape.end(), 0.0) / static_cast<double>(shape.size()) / peak;
        lo_ratio = std::min(lo_ratio, ratio);
        hi_ratio = std::max(hi_ratio, ratio);
    }
    if (hi_ratio == 0.0) {
        fail(ErrorCode::ModelError, "no usable signature for " + fixture_name(priors.fixture));
    }
    return {priors.flow_bounds.min_peak * lo_ratio, priors.flow_bounds.max_peak * hi_ratio};
}

std::vector<std::size_t> sample_daily_counts(const UsageModel& model, std::size_t day, std::uint64_t seed) {
    std::vector<std::size_t> counts;
    counts.reserve(model.fixtures.size());
    for (const auto& p : model.fixtures) {
        CounterRng rng(stream_key(seed, {day, index_of(p.fixture), kCountOrdinal}));
        counts.push_back(p.events_per_day.draw(rng));
    }
    return counts;
}

EventParams sample_event_params(const FixturePriors& priors, const FlowEnvelope& envelope, double resolution_s,
                                CounterRng& rng) {
    EventParams out;
    out.start_s = priors.start_time.sample(rng);
    const double flow_lo = 0.25 * envelope.lo;
    const double flow_hi = 4.0 * envelope.hi;
    std::array<double, 2> dv{};
    for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
        dv = priors.duration_volume.sample(rng);
        const double d = dv[0];
        const double v = dv[1];
        if (d >= resolution_s && v > 0.0) {
            const double mean_flow = v / d;
            if (mean_flow >= flow_lo && mean_flow <= flow_hi) {
                out.duration_s = d;
                out.volume_l = v;
                return out;
            }
        }
    }
    out.clamped = true;
    out.duration_s = std::max(dv[0], resolution_s);
    const double v = dv[1] > 0.0 ? dv[1] : envelope.lo * out.duration_s;
    out.volume_l = std::clamp(v, flow_lo * out.duration_s, flow_hi * out.duration_s);
    return out;
}

std::vector<double> scale_signature(const Signature& sig, double duration_s, double volume_l, double resolution_s,
                                    const FlowBounds& bounds, ScaleOptions options) {
    if (!(duration_s >= resolution_s) || !(volume_l > 0.0)) {
        fail(ErrorCode::InvalidInput, "scaling needs duration >= resolution and a positive volume");
    }
    const std::vector<double> shape = sig.shape();
    auto resample_scaled = [&](std::size_t n) {
        std::vector<double> flows = resample_linear(shape, n);
        const double sum = std::accumulate(flows.begin(), flows.end(), 0.0);
        if (sum <= 0.0) {
            fail(ErrorCode::InvalidInput, "signature has no flow to scale");
        }
        const double a = volume_l / (sum * resolution_s);
        for (auto& v : flows) v *= a;
        return flows;
    };
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(duration_s / resolution_s)));
    std::vector<double> flows = resample_scaled(n);
    const double peak = *std::max_element(flows.begin(), flows.end());
    if (peak >= bounds.min_peak && peak <= bounds.max_peak) {
        return flows;
    }
    // Clamp the peak and change the duration so the same volume fits.
    const double target = std::clamp(peak, bounds.min_peak, bounds.max_peak);
    const double factor = peak / target;
    if (factor > options.max_restretch || factor < 1.0 / options.max_restretch) {
        fail(ErrorCode::VolumeInfeasible, "volume " + std::to_string(volume_l) + " L does not fit peak bounds [" +
                                              std::to_string(bounds.min_peak) + ", " +
                                              std::to_string(bounds.max_peak) + "] L/s within one re-stretch");
    }
    auto n2 = static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(n) * factor)));
    flows = resample_scaled(n2);
    // Resampling does not preserve the peak-to-mean ratio exactly; nudge the length until the
    // peak lands inside the bounds or the re-stretch limit is reached.
    const double lo_len = std::ceil(static_cast<double>(n) / options.max_restretch);
    const double hi_len = std::floor(static_cast<double>(n) * options.max_restretch);
    auto peak_of = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    while (peak_of(flows) > bounds.max_peak && static_cast<double>(n2 + 1) <= hi_len) {
        flows = resample_scaled(++n2);
    }
    while (peak_of(flows) < bounds.min_peak && n2 > 1 && static_cast<double>(n2 - 1) >= lo_len) {
        flows = resample_scaled(--n2);
    }
    double realized = 0.0;
    for (auto& v : flows) {
        v = std::min(v, bounds.max_peak);
        realized += v * resolution_s;
    }
    if (std::abs(realized - volume_l) > 0.005 * volume_l) {
        fail(ErrorCode::VolumeInfeasible, "volume " + std::to_string(volume_l) +
                                              " L exceeds the maximum flow over the re-stretched duration");
    }
    return flows;
}

FlowSeries GeneratedDataset::fixture_series(Fixture f) const {
    return FlowSeries(fixture_flows[index_of(f)], resolution_s, 0.0);
}

LabeledTrace GeneratedDataset::labeled_total() const {
    LabeledTrace out{total, std::vector<std::optional<Fixture>>(total.size())};
    for (std::size_t t = 0; t < total.size(); ++t) {
        double best = 0.0;
        for (Fixture f : kAllFixtures) {
            const auto& flows = fixture_flows[index_of(f)];
            if (!flows.empty() && flows[t] > best) {
                best = flows[t];
                out.labels[t] = f;
            }
        }
    }
    return out;
}

LabeledTrace GeneratedDataset::labeled_fixture(Fixture f) const {
    LabeledTrace out{fixture_series(f), std::vector<std::optional<Fixture>>(total.size())};
    const auto& flows = fixture_flows[index_of(f)];
    for (std::size_t t = 0; t < flows.size(); ++t) {
        if (flows[t] > 0.0) out.labels[t] = f;
    }
    return out;
}

GeneratedDataset generate(const UsageModel& model, std::size_t days, std::uint64_t seed) {
    if (days < 1) {
        fail(ErrorCode::InvalidInput, "days must be at least 1");
    }
    model.validate();
    const double res = model.resolution_s;
    const std::size_t spd = samples_per_day(res);
    const std::size_t total_len = days * spd;

    GeneratedDataset ds;
    ds.resolution_s = res;
    ds.seed = seed;
    ds.days = days;
    for (Fixture f : kAllFixtures) ds.fixture_flows[index_of(f)].assign(total_len, 0.0);

    struct Prepared {
        const FixturePriors* priors;
        std::vector<const Signature*> sigs;
        FlowEnvelope envelope;
        std::map<std::size_t, std::size_t> occupied;  // start -> end (exclusive, includes one guard sample)
    };
    std::vector<Prepared> prepared;
    for (const auto& p : model.fixtures) {
        prepared.push_back({&p, generation_signatures(model.library, p.fixture), mean_flow_envelope(p, model.library), {}});
    }
    auto collides = [](const std::map<std::size_t, std::size_t>& occ, std::size_t s, std::size_t e) {
        auto it = occ.upper_bound(s);
        if (it != occ.end() && it->first < e) return true;
        if (it != occ.begin() && std::prev(it)->second > s) return true;
        return false;
    };

    std::vector<LedgerEntry> ledger;
    for (std::size_t day = 0; day < days; ++day) {
        const auto counts = sample_daily_counts(model, day, seed);
        for (std::size_t fi = 0; fi < prepared.size(); ++fi) {
            auto& prep = prepared[fi];
            const Fixture f = prep.priors->fixture;
            auto& flows_out = ds.fixture_flows[index_of(f)];
            for (std::size_t k = 0; k < counts[fi]; ++k) {
                CounterRng rng(stream_key(seed, {day, index_of(f), k}));
                const EventParams params = sample_event_params(*prep.priors, prep.envelope, res, rng);
                const std::size_t sig_index = static_cast<std::size_t>(rng() % prep.sigs.size());
                std::vector<double> flows;
                try {
                    flows = scale_signature(*prep.sigs[sig_index], params.duration_s, params.volume_l, res,
                                            prep.priors->flow_bounds);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::VolumeInfeasible) throw;
                    ++ds.skipped_infeasible;
                    continue;
                }
                // One fixture cannot run twice at once: redraw the start time on collision.
                std::optional<std::size_t> start;
                double start_s = params.start_s;
                for (std::size_t attempt = 0; attempt <= kMaxRedraws; ++attempt) {
                    if (attempt > 0) start_s = prep.priors->start_time.sample(rng);
                    const std::size_t s = day * spd + static_cast<std::size_t>(std::floor(start_s / res));
                    if (!collides(prep.occupied, s, s + flows.size() + 1)) {
                        start = s;
                        break;
                    }
                }
                if (!start) {
                    ++ds.skipped_overlap;
                    continue;
                }
                prep.occupied.emplace(*start, *start + flows.size() + 1);

                LedgerEntry entry;
                entry.fixture = f;
                entry.start_index = *start;
                entry.length = std::min(flows.size(), total_len - *start);
                entry.truncated = entry.length < flows.size();
                entry.sampled_duration_s = params.duration_s;
                entry.sampled_volume_l = params.volume_l;
                entry.signature_index = sig_index;
                double realized = 0.0;
                for (std::size_t i = 0; i < entry.length; ++i) {
                    flows_out[*start + i] = flows[i];
                    realized += flows[i];
                }
                entry.volume_l = realized * res;
                ledger.push_back(entry);
            }
        }
    }

    std::vector<double> total(total_len, 0.0);
    for (Fixture f : kAllFixtures) {
        const auto& flows = ds.fixture_flows[index_of(f)];
        for (std::size_t t = 0; t < total_len; ++t) total[t] += flows[t];
    }
    ds.total = FlowSeries(std::move(total), res, 0.0);

    std::sort(ledger.begin(), ledger.end(), [](const LedgerEntry& a, const LedgerEntry& b) {
        return a.start_index != b.start_index ? a.start_index < b.start_index : a.fixture < b.fixture;
    });
    for (std::size_t i = 0; i < ledger.size(); ++i) ledger[i].id = i;

    // Bursts per ledger entry; same-fixture entries never touch, so every run belongs to its entry.
    for (const auto& entry : ledger) {
        const auto& flows = ds.fixture_flows[index_of(entry.fixture)];
        std::vector<TruthSegment> parts;
        std::size_t i = entry.start_index;
        const std::size_t end = entry.start_index + entry.length;
        while (i < end) {
            if (flows[i] <= 0.0) {
                ++i;
                continue;
            }
            std::size_t j = i;
            double vol = 0.0;
            while (j < end && flows[j] > 0.0) vol += flows[j++];
            TruthSegment seg;
            seg.ledger_id = entry.id;
            seg.fixture = entry.fixture;
            seg.start_index = i;
            seg.length = j - i;
            seg.volume_l = vol * res;
            parts.push_back(seg);
            i = j;
        }
        for (std::size_t k = 0; k < parts.size(); ++k) {
            parts[k].id = parts.size() == 1 ? std::to_string(entry.id)
                                            : std::to_string(entry.id) + "." + std::to_string(k + 1);
            ds.segments.push_back(parts[k]);
        }
    }
    std::sort(ds.segments.begin(), ds.segments.end(), [](const TruthSegment& a, const TruthSegment& b) {
        return a.start_index != b.start_index ? a.start_index < b.start_index : a.fixture < b.fixture;
    });

    // Segments that end up inside one extracted event of the total trace form an overlap group.
    std::size_t cursor = 0;
    for (const auto& ev : extract_events(ds.total)) {
        while (cursor < ds.segments.size() && ds.segments[cursor].start_index < ev.start_index) ++cursor;
        std::size_t last = cursor;
        while (last < ds.segments.size() && ds.segments[last].start_index < ev.end_index()) ++last;
        if (last - cursor >= 2) {
            const std::size_t group = ds.overlap_groups++;
            for (std::size_t s = cursor; s < last; ++s) {
                ds.segments[s].overlap_group = group;
                auto& entry = ledger[ds.segments[s].ledger_id];
                if (!entry.overlap_group) entry.overlap_group = group;
            }
        }
        cursor = last;
    }
    ds.ledger = std::move(ledger);
    return ds;
}

nlohmann::json to_json(const UsageModel& model) {
    nlohmann::json fixtures = nlohmann::json::array();
    for (const auto& p : model.fixtures) {
        nlohmann::json count;
        if (p.events_per_day.kind == CountDistribution::Kind::Poisson) {
            count = {{"type", "poisson"}, {"lambda", p.events_per_day.lambda}};
        } else {
            count = {{"type", "negative_binomial"}, {"r", p.events_per_day.r}, {"p", p.events_per_day.p}};
        }
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& g : p.duration_volume.components) {
            comps.push_back({{"weight", g.weight},
                             {"mean", g.mean},
                             {"cov", {g.cov[0], g.cov[1]}}});
        }
        fixtures.push_back({{"name", to_string(p.fixture)},
                            {"efficiency", p.efficiency},
                            {"events_per_day", count},
                            {"start_time",
                             {{"hourly_weights", p.start_time.hourly_weights},
                              {"bandwidth_s", p.start_time.bandwidth_s}}},
                            {"duration_volume", {{"components", comps}}},
                            {"flow_bounds", {p.flow_bounds.min_peak, p.flow_bounds.max_peak}}});
    }
    return {{"version", kModelVersion},
            {"resolution_s", model.resolution_s},
            {"occupants", model.occupants},
            {"fixtures", fixtures},
            {"library", to_json(model.library)}};
}

UsageModel model_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    try {
        if (doc.at("version").get<int>() != kModelVersion) {
            fail(ErrorCode::ModelError, "unsupported usage model version");
        }
        UsageModel model;
        model.resolution_s = doc.at("resolution_s").get<double>();
        model.occupants = doc.value("occupants", 4);
        for (const auto& fx : doc.at("fixtures")) {
            const auto name = fx.at("name").get<std::string>();
            const auto f = parse_fixture(name);
            if (!f) fail(ErrorCode::ModelError, "unknown fixture '" + name + "'");
            FixturePriors p;
            p.fixture = *f;
            p.efficiency = fx.value("efficiency", std::string("standard"));
            const auto& c = fx.at("events_per_day");
            const auto type = c.at("type").get<std::string>();
            if (type == "poisson") {
                p.events_per_day = CountDistribution::poisson(c.at("lambda").get<double>());
            } else if (type == "negative_binomial") {
                p.events_per_day = CountDistribution::negative_binomial(c.at("r").get<double>(), c.at("p").get<double>());
            } else {
                fail(ErrorCode::ModelError, "unknown count distribution '" + type + "'");
            }
            const auto& st = fx.at("start_time");
            const auto weights = st.at("hourly_weights").get<std::vector<double>>();
            if (weights.size() != 24) fail(ErrorCode::ModelError, name + ": need 24 hourly weights");
            std::copy(weights.begin(), weights.end(), p.start_time.hourly_weights.begin());
            p.start_time.bandwidth_s = st.value("bandwidth_s", 600.0);
            for (const auto& g : fx.at("duration_volume").at("components")) {
                GaussianComponent comp;
                comp.weight = g.at("weight").get<double>();
                comp.mean = g.at("mean").get<std::array<double, 2>>();
                comp.cov[0] = g.at("cov").at(0).get<std::array<double, 2>>();
                comp.cov[1] = g.at("cov").at(1).get<std::array<double, 2>>();
                p.duration_volume.components.push_back(comp);
            }
            const auto& fb = fx.at("flow_bounds");
            p.flow_bounds = {fb.at(0).get<double>(), fb.at(1).get<double>()};
            model.fixtures.push_back(std::move(p));
        }
        if (doc.contains("library")) {
            model.library = library_from_json(doc.at("library"));
        } else if (doc.contains("library_path")) {
            const std::filesystem::path path = base_dir / doc.at("library_path").get<std::string>();
            std::ifstream in(path);
            if (!in) fail(ErrorCode::ModelError, "cannot open signature library " + path.string());
            model.library = library_from_json(nlohmann::json::parse(in));
        } else {
            fail(ErrorCode::ModelError, "usage model has no signature library");
        }
        model.validate();
        return model;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ModelError, std::string("malformed usage model: ") + e.what());
    }
}

}  // namespace wateruse
