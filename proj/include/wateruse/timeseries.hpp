#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "wateruse/fixture.hpp"

namespace wateruse {

/// Uniformly sampled flow trace in L/s.
class FlowSeries {
public:
    FlowSeries() = default;
    /// Throws InvalidInput on non-finite or negative samples, or a non-positive resolution.
    FlowSeries(std::vector<double> samples, double resolution_s, std::optional<double> origin_s = {});

    std::span<const double> samples() const noexcept { return samples_; }
    double resolution() const noexcept { return resolution_; }
    std::optional<double> origin() const noexcept { return origin_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    double operator[](std::size_t i) const noexcept { return samples_[i]; }

    /// Timestamp of sample i; the origin defaults to zero.
    double time_of(std::size_t i) const noexcept {
        return origin_.value_or(0.0) + static_cast<double>(i) * resolution_;
    }

    FlowSeries slice(std::size_t start, std::size_t length) const;

private:
    std::vector<double> samples_;
    double resolution_ = 1.0;
    std::optional<double> origin_;
};

struct NormalizationStats {
    double mean = 0.0;
    double std = 0.0;
};

struct Normalized {
    std::vector<double> values;
    NormalizationStats stats;
};

struct EventFeatures {
    double duration_s = 0.0;
    double volume_l = 0.0;
    double peak_lps = 0.0;
};

struct EventRecord {
    std::vector<double> flows;
    std::size_t start_index = 0;
    double resolution_s = 1.0;
    std::optional<Fixture> label;
    EventFeatures features;

    std::size_t length() const noexcept { return flows.size(); }
    std::size_t end_index() const noexcept { return start_index + flows.size(); }
};

/// Zero mean, unit population standard deviation. A constant input maps to all zeros with std = 0.
Normalized z_normalize(std::span<const double> values);
inline Normalized z_normalize(const FlowSeries& series) { return z_normalize(series.samples()); }

struct SegmentationOptions {
    double zero_eps = 0.0;
    std::size_t min_gap = 1;
};

/// Maximal runs of samples above zero_eps; runs separated by fewer than min_gap quiet samples are
/// merged (the quiet samples become part of the event).
std::vector<EventRecord> extract_events(const FlowSeries& series, SegmentationOptions options = {});

EventFeatures compute_features(std::span<const double> flows, double resolution_s);
inline EventFeatures compute_features(const EventRecord& event) {
    return compute_features(event.flows, event.resolution_s);
}

/// Linear interpolation onto n points with both endpoints aligned.
std::vector<double> resample_linear(std::span<const double> values, std::size_t n);

/// A flow trace with an optional per-sample ground-truth label.
struct LabeledTrace {
    FlowSeries series;
    std::vector<std::optional<Fixture>> labels;
};

/// Events split on zero-flow gaps and on label changes. Unlabeled flow is skipped.
std::vector<EventRecord> extract_labeled_events(const LabeledTrace& trace, SegmentationOptions options = {});

}  // namespace wateruse
