#include "wateruse/timeseries.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include "wateruse/error.hpp"

namespace wateruse {

namespace {

constexpr std::array<std::string_view, kFixtureCount> kNames{
    "toilet", "shower", "faucet", "clothes_washer", "dishwasher"};

}  // namespace

std::string_view to_string(Fixture f) noexcept { return kNames[index_of(f)]; }

std::optional<Fixture> parse_fixture(std::string_view name) {
    std::string lower;
    lower.reserve(name.size());
    for (char c : name) {
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    for (Fixture f : kAllFixtures) {
        if (lower == kNames[index_of(f)]) {
            return f;
        }
    }
    if (lower == "cw" || lower == "washer" || lower == "clothes-washer" || lower == "clotheswasher") {
        return Fixture::ClothesWasher;
    }
    if (lower == "dw" || lower == "dish_washer" || lower == "dish-washer") {
        return Fixture::Dishwasher;
    }
    if (lower == "wc") {
        return Fixture::Toilet;
    }
    if (lower == "tap" || lower == "sink") {
        return Fixture::Faucet;
    }
    return std::nullopt;
}

FlowSeries::FlowSeries(std::vector<double> samples, double resolution_s, std::optional<double> origin_s)
    : samples_(std::move(samples)), resolution_(resolution_s), origin_(origin_s) {
    if (!(resolution_s > 0.0) || !std::isfinite(resolution_s)) {
        fail(ErrorCode::InvalidInput, "flow series resolution must be positive");
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!std::isfinite(samples_[i]) || samples_[i] < 0.0) {
            fail(ErrorCode::InvalidInput,
                 "flow sample " + std::to_string(i) + " is negative or not finite");
        }
    }
}

FlowSeries FlowSeries::slice(std::size_t start, std::size_t length) const {
    if (start > samples_.size() || length > samples_.size() - start) {
        fail(ErrorCode::InvalidInput, "slice out of range");
    }
    std::vector<double> part(samples_.begin() + static_cast<std::ptrdiff_t>(start),
                             samples_.begin() + static_cast<std::ptrdiff_t>(start + length));
    return FlowSeries(std::move(part), resolution_, time_of(start));
}

Normalized z_normalize(std::span<const double> values) {
    if (values.empty()) {
        fail(ErrorCode::InvalidInput, "cannot normalize an empty sequence");
    }
    const auto n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / n);

    Normalized out;
    out.stats = {mean, sd};
    out.values.resize(values.size(), 0.0);
    // Constant sequences: the relative spread is at rounding level, so treat as zero.
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            out.values[i] = (values[i] - mean) / sd;
        }
    } else {
        out.stats.std = 0.0;
    }
    return out;
}

std::vector<EventRecord> extract_events(const FlowSeries& series, SegmentationOptions options) {
    if (options.zero_eps < 0.0) {
        fail(ErrorCode::InvalidInput, "zero_eps must be non-negative");
    }
    if (options.min_gap < 1) {
        fail(ErrorCode::InvalidInput, "min_gap must be at least one sample");
    }
    const auto samples = series.samples();
    const std::size_t n = samples.size();
    std::vector<EventRecord> events;

    std::size_t i = 0;
    while (i < n) {
        if (samples[i] <= options.zero_eps) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        std::size_t last_active = i;
        std::size_t j = i + 1;
        while (j < n) {
            if (samples[j] > options.zero_eps) {
                last_active = j;
                ++j;
                continue;
            }
            std::size_t k = j;
            while (k < n && samples[k] <= options.zero_eps) {
                ++k;
            }
            if (k == n || k - j >= options.min_gap) {
                break;
            }
            j = k;
        }
        EventRecord ev;
        ev.start_index = start;
        ev.resolution_s = series.resolution();
        ev.flows.assign(samples.begin() + static_cast<std::ptrdiff_t>(start),
                        samples.begin() + static_cast<std::ptrdiff_t>(last_active + 1));
        ev.features = compute_features(ev.flows, ev.resolution_s);
        events.push_back(std::move(ev));
        i = last_active + 1;
    }
    return events;
}

EventFeatures compute_features(std::span<const double> flows, double resolution_s) {
    EventFeatures f;
    f.duration_s = static_cast<double>(flows.size()) * resolution_s;
    double sum = 0.0;
    double peak = 0.0;
    for (double v : flows) {
        sum += v;
        peak = std::max(peak, v);
    }
    f.volume_l = sum * resolution_s;
    f.peak_lps = peak;
    return f;
}

std::vector<double> resample_linear(std::span<const double> values, std::size_t n) {
    if (values.empty()) {
        fail(ErrorCode::InvalidInput, "cannot resample an empty sequence");
    }
    std::vector<double> out(n);
    if (n == 0) {
        return out;
    }
    const std::size_t m = values.size();
    if (m == 1) {
        std::fill(out.begin(), out.end(), values[0]);
        return out;
    }
    if (n == 1) {
        out[0] = values[(m - 1) / 2];
        return out;
    }
    const double step = static_cast<double>(m - 1) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) * step;
        auto lo = static_cast<std::size_t>(std::floor(x));
        if (lo >= m - 1) {
            out[i] = values[m - 1];
            continue;
        }
        const double frac = x - static_cast<double>(lo);
        out[i] = frac == 0.0 ? values[lo] : values[lo] + frac * (values[lo + 1] - values[lo]);
    }
    return out;
}

std::vector<EventRecord> extract_labeled_events(const LabeledTrace& trace, SegmentationOptions options) {
    const auto samples = trace.series.samples();
    if (trace.labels.size() != samples.size()) {
        fail(ErrorCode::InvalidInput, "label column length does not match the trace");
    }
    std::vector<EventRecord> events;
    const std::size_t n = samples.size();
    std::size_t i = 0;
    while (i < n) {
        if (samples[i] <= options.zero_eps || !trace.labels[i]) {
            ++i;
            continue;
        }
        const Fixture label = *trace.labels[i];
        std::size_t j = i;
        while (j < n && samples[j] > options.zero_eps && trace.labels[j] == label) {
            ++j;
        }
        EventRecord ev;
        ev.start_index = i;
        ev.resolution_s = trace.series.resolution();
        ev.label = label;
        ev.flows.assign(samples.begin() + static_cast<std::ptrdiff_t>(i),
                        samples.begin() + static_cast<std::ptrdiff_t>(j));
        ev.features = compute_features(ev.flows, ev.resolution_s);
        events.push_back(std::move(ev));
        i = j;
    }
    return events;
}

}  // namespace wateruse
