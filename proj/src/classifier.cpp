#include "wateruse/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "wateruse/dtw.hpp"
#include "wateruse/error.hpp"

namespace wateruse {

namespace {

constexpr double kZeroFlow = 1e-9;

// A run of same-sign filtered differences on the zero-padded event. Difference k is the change
// into sample k, so `first` is the first sample that moved and `last` the first sample that
// settled at the new level.
struct Step {
    std::size_t first = 0;
    std::size_t last = 0;
    double magnitude = 0.0;  ///< signed sum of the raw differences
};

std::vector<double> padded_differences(std::span<const double> flows) {
    std::vector<double> d(flows.size() + 1);
    double prev = 0.0;
    for (std::size_t k = 0; k < flows.size(); ++k) {
        d[k] = flows[k] - prev;
        prev = flows[k];
    }
    d[flows.size()] = -prev;
    return d;
}

bool significant(double v, double threshold) { return std::abs(v) >= threshold; }

std::vector<Step> steps_of(const std::vector<double>& d, double threshold) {
    std::vector<Step> steps;
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (!significant(d[k], threshold)) continue;
        const bool up = d[k] > 0.0;
        if (!steps.empty() && steps.back().last + 1 == k && (steps.back().magnitude > 0.0) == up) {
            steps.back().last = k;
            steps.back().magnitude += d[k];
        } else {
            steps.push_back({k, k, d[k]});
        }
    }
    return steps;
}

// Bounds of the event's own rise and fall on the padded differences: [0, rise_end) is the
// strictly rising prefix and [fall_begin, d.size()) the strictly falling suffix.
std::pair<std::size_t, std::size_t> own_edges(const std::vector<double>& d) {
    std::size_t rise_end = 0;
    while (rise_end < d.size() && d[rise_end] > 0.0) ++rise_end;
    std::size_t fall_begin = d.size();
    while (fall_begin > rise_end && d[fall_begin - 1] < 0.0) --fall_begin;
    return {rise_end, fall_begin};
}

double lower_median(std::vector<double> v) {
    const std::size_t mid = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

double volume_of(std::span<const double> flows, double resolution_s) {
    return std::accumulate(flows.begin(), flows.end(), 0.0) * resolution_s;
}

// parent - sub, clamped at zero; returns the clamped mass in flow units.
double subtract_clamped(std::span<const double> parent, std::span<const double> sub, std::vector<double>& out) {
    out.resize(parent.size());
    double clamped = 0.0;
    for (std::size_t i = 0; i < parent.size(); ++i) {
        const double r = parent[i] - sub[i];
        if (r < 0.0) {
            clamped -= r;
            out[i] = 0.0;
        } else {
            out[i] = r;
        }
    }
    return clamped;
}

// Non-empty runs of samples above the zero-flow floor. Returns (start, flows) pairs and adds
// the dropped sub-floor mass to `residue`.
std::vector<std::pair<std::size_t, std::vector<double>>> pieces_of(std::span<const double> flows, double& residue) {
    std::vector<std::pair<std::size_t, std::vector<double>>> out;
    std::size_t i = 0;
    while (i < flows.size()) {
        if (flows[i] <= kZeroFlow) {
            residue += flows[i];
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < flows.size() && flows[j] > kZeroFlow) ++j;
        out.emplace_back(i, std::vector<double>(flows.begin() + static_cast<std::ptrdiff_t>(i),
                                                flows.begin() + static_cast<std::ptrdiff_t>(j)));
        i = j;
    }
    return out;
}

SubEvent trimmed_sub(const std::vector<double>& sub, std::string kind) {
    std::size_t a = 0;
    while (a < sub.size() && sub[a] <= kZeroFlow) ++a;
    std::size_t b = sub.size();
    while (b > a && sub[b - 1] <= kZeroFlow) --b;
    return {std::vector<double>(sub.begin() + static_cast<std::ptrdiff_t>(a), sub.begin() + static_cast<std::ptrdiff_t>(b)),
            a, std::move(kind)};
}

std::optional<EdgeSplit> make_edge_split(std::span<const double> flows, double resolution_s,
                                         std::vector<double> sub, const char* kind) {
    EdgeSplit out;
    out.clamped_volume = subtract_clamped(flows, sub, out.remainder) * resolution_s;
    out.sub = trimmed_sub(sub, kind);
    if (out.sub.flows.empty()) return std::nullopt;
    return out;
}

std::optional<EdgeSplit> split_trailing(std::span<const double> flows, double resolution_s,
                                        const std::vector<Step>& steps, double edge_threshold) {
    const std::size_t m = steps.size();
    if (m < 3 || steps.back().magnitude >= 0.0) return std::nullopt;
    const Step& drop = steps.back();
    const Step& prev = steps[m - 2];
    std::optional<std::size_t> rise;
    for (std::size_t s = m - 1; s-- > 0;) {
        if (steps[s].magnitude > 0.0) {
            rise = s;
            break;
        }
    }
    if (!rise || *rise + 2 >= m) return std::nullopt;
    if (std::abs(-drop.magnitude - steps[*rise].magnitude) >= edge_threshold) return std::nullopt;
    // Only the edge sub-event flows between the last other step and the final drop.
    if (prev.last >= drop.first) return std::nullopt;
    const double level = lower_median(std::vector<double>(flows.begin() + static_cast<std::ptrdiff_t>(prev.last),
                                                          flows.begin() + static_cast<std::ptrdiff_t>(drop.first)));
    std::vector<double> sub(flows.size(), 0.0);
    for (std::size_t k = steps[*rise].first; k < prev.last; ++k) sub[k] = level;
    for (std::size_t k = prev.last; k < flows.size(); ++k) sub[k] = flows[k];
    return make_edge_split(flows, resolution_s, std::move(sub), "edge_trailing");
}

std::optional<EdgeSplit> split_leading(std::span<const double> flows, double resolution_s,
                                       const std::vector<Step>& steps, double edge_threshold) {
    const std::size_t m = steps.size();
    if (m < 3 || steps.front().magnitude <= 0.0) return std::nullopt;
    const Step& rise = steps.front();
    const Step& next = steps[1];
    std::optional<std::size_t> drop;
    for (std::size_t s = 1; s < m; ++s) {
        if (steps[s].magnitude < 0.0) {
            drop = s;
            break;
        }
    }
    if (!drop || *drop < 2) return std::nullopt;
    if (std::abs(rise.magnitude + steps[*drop].magnitude) >= edge_threshold) return std::nullopt;
    if (rise.last >= next.first) return std::nullopt;
    const double level = lower_median(std::vector<double>(flows.begin() + static_cast<std::ptrdiff_t>(rise.last),
                                                          flows.begin() + static_cast<std::ptrdiff_t>(next.first)));
    std::vector<double> sub(flows.size(), 0.0);
    for (std::size_t k = 0; k < next.first; ++k) sub[k] = flows[k];
    for (std::size_t k = next.first; k < steps[*drop].last && k < flows.size(); ++k) sub[k] = level;
    return make_edge_split(flows, resolution_s, std::move(sub), "edge_leading");
}

// One innermost interior extraction: the first finish marker and the latest start before it.
std::optional<std::pair<std::size_t, std::size_t>> interior_pair(std::span<const double> flows,
                                                                 const ClassifierConfig& config, double& amplitude) {
    const auto d = padded_differences(flows);
    const auto [rise_end, fall_begin] = own_edges(d);
    const auto steps = steps_of(d, config.variation_threshold);
    auto quiet = [&](std::size_t k) { return !significant(d[k], config.variation_threshold); };
    std::vector<const Step*> starts;
    for (const Step& s : steps) {
        if (s.first < rise_end || s.last >= fall_begin) continue;
        if (s.magnitude > 0.0) {
            if (s.first > 0 && quiet(s.first - 1)) starts.push_back(&s);
        } else if (s.last + 1 < d.size() && quiet(s.last + 1) && !starts.empty()) {
            const Step& start = *starts.back();
            amplitude = 0.5 * (start.magnitude - s.magnitude);
            return std::pair{start.first, s.first};
        }
    }
    return std::nullopt;
}

bool in_window(const std::vector<CycleWindow>& windows, Fixture f, std::size_t start, std::size_t end) {
    return std::any_of(windows.begin(), windows.end(),
                       [&](const CycleWindow& w) { return w.fixture == f && w.start < end && start < w.end; });
}

}  // namespace

void ClassifierConfig::validate() const {
    if (!(variation_threshold > 0.0) || !(edge_split_threshold > 0.0) || !(dtw_accept_threshold > 0.0)) {
        fail(ErrorCode::InvalidInput, "classifier thresholds must be positive");
    }
    if (window_stride && *window_stride == 0) fail(ErrorCode::InvalidInput, "window stride must be positive");
    if (!(cycle_band_fraction >= 0.0) || !(cycle_activity_ratio > 0.0 && cycle_activity_ratio <= 1.0)) {
        fail(ErrorCode::InvalidInput, "invalid cycle window settings");
    }
}

VariationVector variation_vector(std::span<const double> flows, double threshold) {
    if (flows.size() < 2) fail(ErrorCode::InvalidInput, "variation vector needs at least two samples");
    VariationVector v;
    v.threshold = threshold;
    v.raw.resize(flows.size() - 1);
    v.filtered.resize(flows.size() - 1);
    for (std::size_t i = 0; i + 1 < flows.size(); ++i) {
        v.raw[i] = flows[i + 1] - flows[i];
        v.filtered[i] = significant(v.raw[i], threshold) ? v.raw[i] : 0.0;
    }
    return v;
}

bool is_single_event(std::span<const double> flows, const ClassifierConfig& config) {
    if (flows.empty()) return true;
    const auto d = padded_differences(flows);
    const auto [rise_end, fall_begin] = own_edges(d);
    for (std::size_t k = rise_end; k < fall_begin; ++k) {
        if (significant(d[k], config.variation_threshold)) return false;
    }
    return true;
}

double signature_cost(std::span<const double> flows, const Signature& sig) {
    const auto templ = z_normalize(resample_linear(sig.shape(), flows.size())).values;
    const auto event = z_normalize(flows).values;
    return dtw(event, templ).cost_per_step();
}

SingleResult classify_single(std::span<const double> flows, double resolution_s, const SignatureLibrary& library,
                             const FeatureStats& stats, const ClassifierConfig& config, bool use_bounds,
                             std::span<const Fixture> window_fixtures) {
    SingleResult out;
    out.score = std::numeric_limits<double>::infinity();
    if (flows.empty()) return out;
    const EventFeatures features = compute_features(flows, resolution_s);
    const auto event = z_normalize(flows).values;
    double accepted_cost = std::numeric_limits<double>::infinity();
    for (Fixture f : kAllFixtures) {
        if (is_intermittent(f) &&
            std::find(window_fixtures.begin(), window_fixtures.end(), f) == window_fixtures.end()) {
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (const Signature* sig : library.candidates(f)) {
            const auto templ = z_normalize(resample_linear(sig->shape(), flows.size())).values;
            best = std::min(best, dtw(event, templ).cost_per_step());
        }
        if (best < out.score) {
            out.score = best;
            out.nearest = f;
        }
        if (use_bounds && !stats[f].contains(features)) continue;
        if (best <= config.dtw_accept_threshold && best < accepted_cost) {
            accepted_cost = best;
            out.label = f;
        }
    }
    if (out.label) out.score = accepted_cost;
    return out;
}

std::optional<EdgeSplit> split_edge_subevent(std::span<const double> flows, double resolution_s,
                                             const ClassifierConfig& config) {
    const auto steps = steps_of(padded_differences(flows), config.variation_threshold);
    if (auto trailing = split_trailing(flows, resolution_s, steps, config.edge_split_threshold)) return trailing;
    return split_leading(flows, resolution_s, steps, config.edge_split_threshold);
}

InteriorSplit split_interior_subevents(std::span<const double> flows, double resolution_s,
                                       const ClassifierConfig& config, std::size_t budget) {
    InteriorSplit out;
    out.remainder.assign(flows.begin(), flows.end());
    std::vector<double> sub(flows.size());
    std::vector<double> next;
    while (out.subs.size() < budget) {
        double amplitude = 0.0;
        const auto pair = interior_pair(out.remainder, config, amplitude);
        if (!pair || amplitude <= 0.0) break;
        std::fill(sub.begin(), sub.end(), 0.0);
        for (std::size_t k = pair->first; k < pair->second; ++k) sub[k] = amplitude;
        out.clamped_volume += subtract_clamped(out.remainder, sub, next) * resolution_s;
        out.remainder.swap(next);
        out.subs.push_back(trimmed_sub(sub, "interior"));
    }
    return out;
}

Decomposition decompose(std::span<const double> flows, double resolution_s, const ClassifierConfig& config,
                        std::size_t budget) {
    Decomposition out;
    std::size_t used = 0;
    std::deque<std::pair<std::size_t, std::vector<double>>> work;
    for (auto& p : pieces_of(flows, out.residue_volume)) work.push_back(std::move(p));
    std::vector<std::pair<std::size_t, std::vector<double>>> settled;
    while (!work.empty()) {
        auto [offset, piece] = std::move(work.front());
        work.pop_front();
        std::optional<EdgeSplit> split;
        if (used < budget) split = split_edge_subevent(piece, resolution_s, config);
        if (!split) {
            settled.emplace_back(offset, std::move(piece));
            continue;
        }
        ++used;
        split->sub.start += offset;
        out.parts.push_back(std::move(split->sub));
        out.clamped_volume += split->clamped_volume;
        auto rest = pieces_of(split->remainder, out.residue_volume);
        for (auto it = rest.rbegin(); it != rest.rend(); ++it) {
            work.emplace_front(it->first + offset, std::move(it->second));
        }
    }
    std::vector<SubEvent> remainders;
    for (auto& [offset, piece] : settled) {
        InteriorSplit inner;
        if (used < budget) inner = split_interior_subevents(piece, resolution_s, config, budget - used);
        if (inner.subs.empty()) {
            remainders.push_back({std::move(piece), offset, "remainder"});
            continue;
        }
        used += inner.subs.size();
        out.clamped_volume += inner.clamped_volume;
        for (auto& s : inner.subs) {
            s.start += offset;
            out.parts.push_back(std::move(s));
        }
        for (auto& [start, flows_rest] : pieces_of(inner.remainder, out.residue_volume)) {
            remainders.push_back({std::move(flows_rest), start + offset, "remainder"});
        }
    }
    out.residue_volume *= resolution_s;
    out.rerouted = out.parts.empty();
    std::stable_sort(out.parts.begin(), out.parts.end(),
                     [](const SubEvent& a, const SubEvent& b) { return a.start < b.start; });
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const SubEvent& a, const SubEvent& b) { return a.start < b.start; });
    for (auto& r : remainders) out.parts.push_back(std::move(r));
    return out;
}

std::vector<CycleWindow> detect_cycle_windows(const FlowSeries& series, const SignatureLibrary& library,
                                              const FeatureStats& stats, const ClassifierConfig& config) {
    config.validate();
    std::vector<CycleWindow> out;
    const std::size_t n = series.size();
    if (n == 0) return out;
    const auto events = extract_events(series);
    for (Fixture f : {Fixture::ClothesWasher, Fixture::Dishwasher}) {
        const Signature* full = library.full_cycle(f);
        const FixtureBounds& bounds = stats[f];
        if (full == nullptr || !bounds.present) continue;

        // Blank out activity that cannot be one of this fixture's bursts.
        std::vector<double> masked(n, 0.0);
        std::vector<std::size_t> active_prefix(n + 1, 0);
        for (const auto& ev : events) {
            if (!bounds.contains(ev.features)) continue;
            std::copy(ev.flows.begin(), ev.flows.end(), masked.begin() + static_cast<std::ptrdiff_t>(ev.start_index));
        }
        for (std::size_t i = 0; i < n; ++i) active_prefix[i + 1] = active_prefix[i] + (masked[i] > 0.0 ? 1 : 0);
        if (active_prefix[n] == 0) continue;

        const auto cycle_len = static_cast<std::size_t>(
            std::max(2.0, std::round(full->duration_s / series.resolution())));
        const std::size_t len = std::min(cycle_len, n);
        const auto shape = resample_linear(full->shape(), cycle_len);
        const auto templ = z_normalize(shape).values;
        const double templ_active =
            static_cast<double>(std::count_if(shape.begin(), shape.end(), [](double v) { return v > 0.0; })) /
            static_cast<double>(cycle_len);
        const std::size_t stride =
            config.full_slide ? 1 : config.window_stride.value_or(std::max<std::size_t>(1, cycle_len / 10));
        DtwOptions opts;
        if (config.cycle_band_fraction > 0.0) {
            opts.band = static_cast<std::size_t>(std::ceil(config.cycle_band_fraction * static_cast<double>(cycle_len)));
        }
        opts.abandon_above_per_step = config.dtw_accept_threshold;

        std::vector<CycleWindow> flagged;
        const std::size_t last_start = n - len;
        for (std::size_t s = 0;; s = std::min(s + stride, last_start)) {
            const std::size_t e = s + len;
            const double active = static_cast<double>(active_prefix[e] - active_prefix[s]) / static_cast<double>(len);
            // Skip windows whose duty cycle is nothing like the program's.
            if (active >= templ_active * config.cycle_activity_ratio &&
                active <= templ_active / config.cycle_activity_ratio) {
                const auto window = z_normalize(std::span<const double>(masked).subspan(s, len)).values;
                const double cost = dtw(window, templ, opts).cost_per_step();
                if (cost <= config.dtw_accept_threshold) flagged.push_back({f, s, e, cost});
            }
            if (s == last_start) break;
        }
        // Merge overlapping windows and trim them to the activity they contain.
        std::vector<CycleWindow> merged;
        for (const auto& w : flagged) {
            if (!merged.empty() && w.start < merged.back().end) {
                merged.back().end = std::max(merged.back().end, w.end);
                merged.back().score = std::min(merged.back().score, w.score);
            } else {
                merged.push_back(w);
            }
        }
        // Trim to the flow inside the windows; bursts blanked by the bounds still belong to the cycle.
        const auto flow = series.samples();
        for (auto& w : merged) {
            while (w.start < w.end && flow[w.start] == 0.0) ++w.start;
            while (w.end > w.start && flow[w.end - 1] == 0.0) --w.end;
            if (w.start < w.end) out.push_back(w);
        }
    }
    std::sort(out.begin(), out.end(), [](const CycleWindow& a, const CycleWindow& b) {
        return a.start != b.start ? a.start < b.start : a.fixture < b.fixture;
    });
    return out;
}

std::string Prediction::predicted_name() const {
    if (combined) return "combined";
    return label ? std::string(to_string(*label)) : std::string("unclassified");
}

namespace {

class Pipeline {
public:
    Pipeline(const FlowSeries& series, const ClassifierModel& model, std::vector<Prediction>& out)
        : model_(model), cfg_(model.config), res_(series.resolution()), out_(out) {}

    void top_level(const EventRecord& ev, const std::string& id, const std::vector<Fixture>& windows) {
        windows_ = windows;
        const auto single = classify(ev.flows, true);
        if (single.label) {
            emit(id, "", ev.start_index, ev.flows, single, is_intermittent(*single.label) ? "window" : "single");
            return;
        }
        if (is_single_event(ev.flows, cfg_)) {
            emit(id, "", ev.start_index, ev.flows, classify(ev.flows, false), "single_dtw");
            return;
        }
        combined(id, "", ev.start_index, ev.flows, 1, "combined");
    }

private:
    SingleResult classify(std::span<const double> flows, bool bounds) const {
        return classify_single(flows, res_, model_.library, model_.stats, cfg_, bounds, windows_);
    }

    Prediction& emit(const std::string& id, const std::string& parent, std::size_t start,
                     std::span<const double> flows, const SingleResult& r, const char* provenance) {
        Prediction p;
        p.event_id = id;
        p.parent_id = parent;
        p.start_index = start;
        p.length = flows.size();
        p.volume_l = volume_of(flows, res_);
        p.label = r.label;
        p.score = r.score;
        p.provenance = provenance;
        out_.push_back(std::move(p));
        return out_.back();
    }

    // Decomposes an event that is not a single use; events without any usable step pattern go
    // to the DTW-only pass instead.
    void combined(const std::string& id, const std::string& parent, std::size_t start,
                  std::span<const double> flows, std::size_t depth, const char* provenance) {
        const std::size_t budget = cfg_.max_decomposition_depth - depth + 1;
        Decomposition d = decompose(flows, res_, cfg_, budget);
        if (d.rerouted) {
            emit(id, parent, start, flows, classify(flows, false), parent.empty() ? "single_dtw" : "subevent_dtw");
            return;
        }
        SingleResult none;
        none.score = std::numeric_limits<double>::infinity();
        Prediction& row = emit(id, parent, start, flows, none, provenance);
        row.combined = true;
        row.clamped_volume = d.clamped_volume;
        std::size_t k = 0;
        for (const auto& part : d.parts) {
            leaf(id + "." + std::to_string(++k), id, start + part.start, part.flows, depth);
        }
    }

    void leaf(const std::string& id, const std::string& parent, std::size_t start, std::span<const double> flows,
              std::size_t depth) {
        const auto r = classify(flows, true);
        if (r.label) {
            emit(id, parent, start, flows, r, "subevent");
        } else if (is_single_event(flows, cfg_)) {
            emit(id, parent, start, flows, classify(flows, false), "subevent_dtw");
        } else if (depth < cfg_.max_decomposition_depth) {
            combined(id, parent, start, flows, depth + 1, "subevent_combined");
        } else {
            emit(id, parent, start, flows, r, "subevent").label.reset();
        }
    }

    const ClassifierModel& model_;
    const ClassifierConfig& cfg_;
    double res_;
    std::vector<Prediction>& out_;
    std::vector<Fixture> windows_;
};

}  // namespace

std::vector<Prediction> classify_all(const FlowSeries& series, const ClassifierModel& model) {
    model.config.validate();
    if (model.config.max_decomposition_depth == 0) {
        fail(ErrorCode::InvalidInput, "max decomposition depth must be at least 1");
    }
    std::vector<Prediction> out;
    if (series.empty()) return out;
    const auto windows = detect_cycle_windows(series, model.library, model.stats, model.config);
    Pipeline pipeline(series, model, out);
    std::size_t index = 0;
    for (const auto& ev : extract_events(series)) {
        std::vector<Fixture> active;
        for (Fixture f : {Fixture::ClothesWasher, Fixture::Dishwasher}) {
            if (in_window(windows, f, ev.start_index, ev.end_index())) active.push_back(f);
        }
        pipeline.top_level(ev, std::to_string(++index), active);
    }
    return out;
}

}  // namespace wateruse
