#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wateruse/features.hpp"
#include "wateruse/fixture.hpp"
#include "wateruse/signature.hpp"
#include "wateruse/timeseries.hpp"

namespace wateruse {

struct ClassifierConfig {
    double variation_threshold = 0.01;   ///< L/s; smaller steps are treated as noise
    double edge_split_threshold = 0.005; ///< L/s; max |last drop - last rise| for an edge sub-event
    double dtw_accept_threshold = 0.35;  ///< DTW cost per aligned step on z-normalized inputs
    std::optional<std::size_t> window_stride;  ///< samples; default full cycle / 10
    bool full_slide = false;             ///< stride 1
    std::size_t max_decomposition_depth = 5;
    double cycle_band_fraction = 0.1;    ///< Sakoe-Chiba band for window comparisons
    /// A window is compared only if its active-sample fraction is within this factor of the
    /// full cycle's.
    double cycle_activity_ratio = 0.25;

    /// Throws InvalidInput unless all thresholds are positive.
    void validate() const;
};

struct ClassifierModel {
    SignatureLibrary library;
    FeatureStats stats;
    ClassifierConfig config;
};

struct VariationVector {
    std::vector<double> raw;       ///< v_i = f_{i+1} - f_i
    std::vector<double> filtered;  ///< raw with |v_i| < threshold set to 0
    double threshold = 0.0;
};

/// Throws InvalidInput for fewer than two samples.
VariationVector variation_vector(std::span<const double> flows, double threshold);

/// True when the event shows no filtered step once its own rise and final fall are ignored.
/// The event is zero-padded on both sides so those edges are part of the vector; the ignored
/// rise is the maximal run of strictly positive raw differences at the start, the ignored fall
/// the maximal run of strictly negative ones at the end.
bool is_single_event(std::span<const double> flows, const ClassifierConfig& config);

struct CycleWindow {
    Fixture fixture = Fixture::Dishwasher;
    std::size_t start = 0;  ///< first sample
    std::size_t end = 0;    ///< one past the last sample
    double score = 0.0;     ///< best DTW cost per step among the merged windows
};

/// Slides a full-cycle-length window over the series for each intermittent fixture. Events whose
/// features fall outside the fixture's burst bounds are blanked first. Windows matching the
/// full-cycle signature merge per fixture and are trimmed to the flow they contain.
std::vector<CycleWindow> detect_cycle_windows(const FlowSeries& series, const SignatureLibrary& library,
                                              const FeatureStats& stats, const ClassifierConfig& config);

struct SingleResult {
    std::optional<Fixture> label;  ///< empty: unclassified
    double score = 0.0;            ///< best cost per step over all candidates
    std::optional<Fixture> nearest;
};

/// DTW cost per step between z(flows) and the signature resampled to the event length.
double signature_cost(std::span<const double> flows, const Signature& sig);

/// Candidates: regular fixtures always, intermittent fixtures only when listed in `window_fixtures`.
/// With `use_bounds`, a label is a candidate only when the event features sit inside its bounds.
/// The accepted label is the cheapest candidate within the DTW threshold; ties go to the fixed
/// fixture order.
SingleResult classify_single(std::span<const double> flows, double resolution_s, const SignatureLibrary& library,
                             const FeatureStats& stats, const ClassifierConfig& config, bool use_bounds,
                             std::span<const Fixture> window_fixtures = {});

/// A piece cut out of a parent event; `start` is relative to the parent.
struct SubEvent {
    std::vector<double> flows;
    std::size_t start = 0;
    std::string kind;  ///< "edge_trailing", "edge_leading", "interior" or "remainder"
};

struct EdgeSplit {
    SubEvent sub;
    std::vector<double> remainder;  ///< parent - sub, clamped at 0, same length as parent
    double clamped_volume = 0.0;    ///< L removed by the clamp
};

/// Category 1: trailing edge first, then leading edge.
std::optional<EdgeSplit> split_edge_subevent(std::span<const double> flows, double resolution_s,
                                             const ClassifierConfig& config);

/// Category 2: extracts up to `budget` nested sub-events, innermost first. The returned split's
/// remainder has every extracted sub-event removed.
struct InteriorSplit {
    std::vector<SubEvent> subs;
    std::vector<double> remainder;
    double clamped_volume = 0.0;
};
InteriorSplit split_interior_subevents(std::span<const double> flows, double resolution_s,
                                       const ClassifierConfig& config, std::size_t budget);

struct Decomposition {
    std::vector<SubEvent> parts;  ///< extracted sub-events, then the non-empty remainder pieces
    double clamped_volume = 0.0;
    double residue_volume = 0.0;  ///< sub-1e-9 remainder flow dropped when cutting pieces
    bool rerouted = false;        ///< no edge or marker pair found
};

/// Category 1 until no edge matches, then category 2, at most `budget` extractions in total.
Decomposition decompose(std::span<const double> flows, double resolution_s, const ClassifierConfig& config,
                        std::size_t budget);

struct Prediction {
    std::string event_id;
    std::string parent_id;          ///< empty for top-level events
    std::size_t start_index = 0;
    std::size_t length = 0;
    double volume_l = 0.0;
    std::optional<Fixture> label;
    bool combined = false;          ///< non-terminal row whose children carry the labels
    double score = 0.0;
    std::string provenance;         ///< single, window, single_dtw, combined, subevent, subevent_dtw
    double clamped_volume = 0.0;

    std::string predicted_name() const;
};

/// Extract, detect windows, classify, decompose. Rows are ordered by event start; each
/// top-level event yields either one terminal row or a combined row followed by its sub-events.
std::vector<Prediction> classify_all(const FlowSeries& series, const ClassifierModel& model);

}  // namespace wateruse
