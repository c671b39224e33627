// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "wateruse/classifier.hpp"
#include "wateruse/clustering.hpp"
#include "wateruse/csv_io.hpp"
#include "wateruse/default_model.hpp"
#include "wateruse/dtw.hpp"
#include "wateruse/evaluation.hpp"
#include "wateruse/features.hpp"
#include "wateruse/generator.hpp"
#include "wateruse/manifest.hpp"
#include "wateruse/signature.hpp"

using namespace wateruse;

namespace {

constexpr std::uint64_t kCalibrationSeed = 7;
constexpr std::uint64_t kTrainingSeed = 45;
constexpr std::uint64_t kTestSeed = 15;

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int failures = 0;

void report(int id, bool ok, double seconds, double limit, const std::string& detail) {
    const bool in_time = seconds < limit;
    if (!(ok && in_time)) ++failures;
    fmt::print("{} criterion {}: {} [{:.1f} s, limit {:.0f} s{}]\n", ok && in_time ? "PASS" : "FAIL", id, detail,
               seconds, limit, in_time ? "" : ", too slow");
    std::fflush(stdout);
}

std::string pct(double v) { return fmt::format("{:.1f}", 100.0 * v); }

// ---------------------------------------------------------------------------- 1

double enumerate_paths(const std::vector<double>& s, const std::vector<double>& t) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += std::abs(s[i] - t[j]);
        if (i + 1 == s.size() && j + 1 == t.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < s.size() && j + 1 < t.size()) walk(i + 1, j + 1, acc);
        if (i + 1 < s.size()) walk(i + 1, j, acc);
        if (j + 1 < t.size()) walk(i, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

void criterion_dtw() {
    Stopwatch clock;
    std::mt19937_64 rng(1);
    auto draw = [&] {
        std::vector<double> v(1 + rng() % 6);
        for (auto& x : v) x = 0.5 * static_cast<double>(rng() % 3);
        return v;
    };
    std::size_t mismatches = 0;
    const std::size_t pairs = 10000;
    for (std::size_t k = 0; k < pairs; ++k) {
        const auto s = draw();
        const auto t = draw();
        mismatches += dtw_distance(s, t) != enumerate_paths(s, t);
    }
    report(1, mismatches == 0, clock.seconds(), 30,
           fmt::format("DTW equals path enumeration on {} pairs ({} mismatches)", pairs, mismatches));
}

// ---------------------------------------------------------------------------- 2

std::string dataset_bytes(const GeneratedDataset& ds) {
    std::ostringstream out;
    const auto total = ds.labeled_total();
    write_trace_csv(out, total.series, total.labels);
    for (Fixture f : kAllFixtures) {
        const auto t = ds.labeled_fixture(f);
        write_trace_csv(out, t.series, t.labels);
    }
    write_ledger_csv(out, ledger_rows(ds));
    write_ledger_csv(out, segment_rows(ds));
    return out.str();
}

GeneratedDataset criterion_generator() {
    Stopwatch clock;
    const auto model = default_model();
    GeneratedDataset ds = generate(model, 45, kTrainingSeed);

    std::size_t sum_mismatch = 0;
    for (std::size_t i = 0; i < ds.total.size(); ++i) {
        double s = 0.0;
        for (Fixture f : kAllFixtures) s += ds.fixture_flows[index_of(f)][i];
        sum_mismatch += s != ds.total[i];
    }
    std::size_t audited = 0, off = 0, truncated = 0;
    for (const auto& e : ds.ledger) {
        if (e.truncated) {
            ++truncated;
            continue;
        }
        ++audited;
        off += std::abs(e.volume_l - e.sampled_volume_l) > 0.005 * e.sampled_volume_l;
    }
    const std::string first = sha256_hex(dataset_bytes(ds));
    const std::string second = sha256_hex(dataset_bytes(generate(model, 45, kTrainingSeed)));
    const bool ok = sum_mismatch == 0 && off == 0 && first == second;
    report(2, ok, clock.seconds(), 120,
           fmt::format("45 days seed {}: {} samples off the fixture sum, {}/{} uses outside 0.5% ({} cut at the "
                       "end, not audited), rerun digest {}",
                       kTrainingSeed, sum_mismatch, off, audited, truncated,
                       first == second ? "identical" : "different"));
    return ds;
}

// ---------------------------------------------------------------------------- 3

std::vector<EventRecord> labeled_fixture_events(const GeneratedDataset& ds) {
    std::vector<EventRecord> events;
    for (Fixture f : kAllFixtures) {
        for (auto& e : extract_labeled_events(ds.labeled_fixture(f))) events.push_back(std::move(e));
    }
    return events;
}

FeatureStats criterion_features(const GeneratedDataset& training) {
    Stopwatch clock;
    const auto events = labeled_fixture_events(training);
    const FeatureStats stats = learn_bounds(events);

    bool exact = true;
    for (Fixture f : kAllFixtures) {
        std::array<std::vector<double>, 3> feats;
        for (const auto& e : events) {
            if (e.label != f) continue;
            feats[0].push_back(e.features.duration_s);
            feats[1].push_back(e.features.volume_l);
            feats[2].push_back(e.features.peak_lps);
        }
        const std::array<Interval, 3> bounds{stats[f].duration_s, stats[f].volume_l, stats[f].peak_lps};
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& v = feats[k];
            const std::size_t n = v.size();
            const auto kept = robust_retained(v);
            const std::size_t expected = n - (n + 99) / 100;
            std::vector<bool> is_kept(n, false);
            for (auto i : kept) is_kept[i] = true;
            bool inside_ok = kept.size() == expected;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = v[i];
                // Retained points lie inside; dropped ones lie outside unless they tie a boundary value.
                if (is_kept[i]) inside_ok &= bounds[k].contains(x);
                else inside_ok &= !bounds[k].contains(x) || x == bounds[k].lo || x == bounds[k].hi;
            }
            const bool tight = std::any_of(kept.begin(), kept.end(), [&](std::size_t i) { return v[i] == bounds[k].lo; }) &&
                               std::any_of(kept.begin(), kept.end(), [&](std::size_t i) { return v[i] == bounds[k].hi; });
            if (!inside_ok || !tight) {
                exact = false;
                fmt::print("  {} feature {}: retained {} expected {}\n", to_string(f), k, kept.size(), expected);
            }
        }
    }
    const auto& shower = stats[Fixture::Shower].duration_s;
    const bool shower_ok = shower.lo >= 60.0 && shower.hi <= 1000.0;
    report(3, exact && shower_ok, clock.seconds(), 60,
           fmt::format("retained counts N - ceil(N/100) and bounds {}; shower duration bounds {:.0f}-{:.0f} s "
                       "(required within 60-1000)",
                       exact ? "exact" : "WRONG", shower.lo, shower.hi));
    return stats;
}

// ---------------------------------------------------------------------------- 4

SignatureLibrary calibrate_library() {
    const GeneratedDataset ds = generate(default_model(), 7, kCalibrationSeed);
    // One file per fixture, as the CLI sees them: kept apart so no cycle spans two of them.
    CalibrationConfig config;
    config.seed = kCalibrationSeed;
    config.source = "synthetic 7-day calibration set";
    std::vector<EventRecord> events;
    std::size_t offset = 0;
    for (Fixture f : kAllFixtures) {
        const auto trace = ds.labeled_fixture(f);
        for (auto e : extract_labeled_events(trace)) {
            e.start_index += offset;
            events.push_back(std::move(e));
        }
        offset += trace.series.size() + static_cast<std::size_t>(std::ceil(2.0 * config.cycle_gap_s)) + 1;
    }
    return extract_signatures(events, ds.resolution_s, config);
}

void criterion_classification(const FeatureStats& stats) {
    Stopwatch clock;
    ClassifierModel model;
    model.library = calibrate_library();
    model.stats = stats;
    const GeneratedDataset test = generate(default_model(), 15, kTestSeed);
    const auto predictions = classify_all(test.total, model);

    std::vector<PredictionRow> rows;
    for (const auto& p : predictions) {
        rows.push_back({p.event_id, test.total.time_of(p.start_index), static_cast<double>(p.length) * test.resolution_s,
                        p.volume_l, p.predicted_name(), p.score, p.provenance, p.parent_id});
    }
    const EvaluationReport r = evaluate(rows, segment_rows(test));

    bool ok = r.detection.single_metrics.recall >= 0.95;
    std::string per_class;
    for (Fixture f : kAllFixtures) {
        const double f1 = r.by_count.classes[index_of(f)].metrics.f1;
        const double need = f == Fixture::Dishwasher ? 0.95 : 0.80;
        ok &= f1 >= need;
        per_class += fmt::format("{}{} {}", per_class.empty() ? "" : ", ", to_string(f), pct(f1));
    }
    report(4, ok, clock.seconds(), 300,
           fmt::format("15 days seed {}: count F1 % {} (need >= 80, dishwasher >= 95); single detection recall {}% "
                       "(need >= 95)",
                       kTestSeed, per_class, pct(r.detection.single_metrics.recall)));
}

// ---------------------------------------------------------------------------- 5

struct Constructed {
    std::vector<double> flows;
    std::size_t sub_start = 0;
    std::size_t sub_end = 0;  // one past
    double sub_volume = 0.0;
};

Constructed construct_overlap(std::mt19937_64& rng, bool nested) {
    std::uniform_real_distribution<double> amp(0.02, 0.15);
    std::uniform_real_distribution<double> jitter(-0.001, 0.001);
    const double a = amp(rng);
    double b = amp(rng);
    // Nested amplitudes must differ by more than the edge threshold, or the event is indistinguishable
    // from an edge overlap.
    while (nested && std::abs(a - b) < 0.01) b = amp(rng);
    Constructed c;
    if (nested) {
        const std::size_t la = 30 + rng() % 300;
        const std::size_t lb = 5 + rng() % (la - 20);
        const std::size_t sb = 5 + rng() % (la - lb - 9);
        c.flows.assign(la, a);
        c.sub_start = sb;
        c.sub_end = sb + lb;
    } else {
        const std::size_t la = 10 + rng() % 200;
        const std::size_t sb = 3 + rng() % (la - 5);
        const std::size_t tail = 3 + rng() % 200;
        c.flows.assign(sb, a);
        c.flows.resize(la + tail, 0.0);
        for (std::size_t i = sb; i < la; ++i) c.flows[i] = a;
        c.sub_start = sb;
        c.sub_end = la + tail;
    }
    for (std::size_t i = c.sub_start; i < c.sub_end; ++i) c.flows[i] += b;
    for (auto& x : c.flows) x = std::max(0.0, x + jitter(rng));
    c.sub_volume = b * static_cast<double>(c.sub_end - c.sub_start);
    return c;
}

void criterion_decomposition() {
    Stopwatch clock;
    std::mt19937_64 rng(5);
    const ClassifierConfig cfg;
    std::size_t good = 0, conserved = 0;
    const std::size_t cases = 200;
    for (std::size_t k = 0; k < cases; ++k) {
        const Constructed c = construct_overlap(rng, k % 2 == 1);
        const Decomposition d = decompose(c.flows, 1.0, cfg, 1);
        const double parent = std::accumulate(c.flows.begin(), c.flows.end(), 0.0);
        double parts = 0.0;
        const SubEvent* sub = nullptr;
        for (const auto& p : d.parts) {
            parts += std::accumulate(p.flows.begin(), p.flows.end(), 0.0);
            if (p.kind != "remainder" && sub == nullptr) sub = &p;
        }
        conserved += std::abs(parts - (parent + d.clamped_volume - d.residue_volume)) <= 1e-9;
        if (sub == nullptr) continue;
        const double vol = std::accumulate(sub->flows.begin(), sub->flows.end(), 0.0);
        const auto start = static_cast<long>(sub->start);
        const auto end = static_cast<long>(sub->start + sub->flows.size());
        good += std::abs(vol - c.sub_volume) <= 0.05 * c.sub_volume &&
                std::abs(start - static_cast<long>(c.sub_start)) <= 2 &&
                std::abs(end - static_cast<long>(c.sub_end)) <= 2;
    }
    const bool ok = static_cast<double>(good) >= 0.9 * cases && conserved == cases;
    report(5, ok, clock.seconds(), 30,
           fmt::format("{}/{} sub-events within 5% volume and 2 samples (need 90%), conservation {}/{}", good, cases,
                       conserved, cases));
}

// ---------------------------------------------------------------------------- 6

void criterion_metrics() {
    Stopwatch clock;
    std::vector<ScoredEvent> preds, truth;
    Matching m;
    for (int i = 0; i < 17; ++i) {
        m.pairs.emplace_back(preds.size(), truth.size());
        preds.push_back({Fixture::Toilet, 1.0});
        truth.push_back({Fixture::Toilet, 1.0});
    }
    for (int i = 0; i < 5; ++i) {
        m.unmatched_truth.push_back(truth.size());
        truth.push_back({Fixture::Toilet, 1.0});
    }
    for (int i = 0; i < 10; ++i) {
        m.unmatched_predictions.push_back(preds.size());
        preds.push_back({Fixture::Toilet, 1.0});
    }
    const auto r = score(m, preds, truth, Weighting::Count).classes[index_of(Fixture::Toilet)].metrics;
    auto near = [](double got, double want) { return std::abs(100.0 * got - want) <= 0.1; };
    const bool ok = near(r.recall, 77.3) && near(r.precision, 63.0) && near(r.f1, 69.4);
    report(6, ok, clock.seconds(), 10,
           fmt::format("TP 17, FN 5, FP 10: recall {:.1f}%, precision {:.1f}%, F1 {:.1f}% (expected 77.3 / 63.0 / 69.4)",
                       100 * r.recall, 100 * r.precision, 100 * r.f1));
}

// ---------------------------------------------------------------------------- 7

void criterion_properties() {
    Stopwatch clock;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    std::size_t sil_bad = 0, cost_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + rng() % 18;
        SimilarityMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, u(rng));
        }
        const std::size_t k = 2 + rng() % (n - 1);
        const auto a = k_medoids(m, k, rng());
        const double s = silhouette(m, a);
        sil_bad += !(s >= -1.0 && s <= 1.0);
        for (std::size_t i = 1; i < a.cost_history.size(); ++i) cost_bad += a.cost_history[i] > a.cost_history[i - 1];
    }

    std::size_t mono_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> f(2 + rng() % 60);
        for (auto& x : f) x = 0.2 * u(rng);
        ClassifierConfig lo, hi;
        lo.variation_threshold = 0.001 + 0.05 * u(rng);
        hi.variation_threshold = lo.variation_threshold + 0.05 * u(rng);
        const auto vl = variation_vector(f, lo.variation_threshold);
        const auto vh = variation_vector(f, hi.variation_threshold);
        for (std::size_t i = 0; i < vl.filtered.size(); ++i) mono_bad += vh.filtered[i] != 0.0 && vl.filtered[i] == 0.0;
        mono_bad += is_single_event(f, lo) && !is_single_event(f, hi);
    }

    std::size_t z_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> v(2 + rng() % 100);
        for (auto& x : v) x = 0.2 * u(rng);
        const auto once = z_normalize(v).values;
        const auto twice = z_normalize(once).values;
        for (std::size_t i = 0; i < v.size(); ++i) z_bad += std::abs(once[i] - twice[i]) > 1e-9;
    }
    const bool ok = sil_bad + cost_bad + mono_bad + z_bad == 0;
    report(7, ok, clock.seconds(), 60,
           fmt::format("violations: silhouette range {}, k-medoids cost increase {}, threshold monotonicity {}, "
                       "z-normalize idempotence {}",
                       sil_bad, cost_bad, mono_bad, z_bad));
}

}  // namespace

int main() {
    try {
        criterion_dtw();
        const GeneratedDataset training = criterion_generator();
        const FeatureStats stats = criterion_features(training);
        criterion_classification(stats);
        criterion_decomposition();
        criterion_metrics();
        criterion_properties();
    } catch (const std::exception& e) {
        fmt::print("FAIL acceptance aborted: {}\n", e.what());
        return 1;
    }
    fmt::print("{} of 7 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
