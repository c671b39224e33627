#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wateruse/csv_io.hpp"
#include "wateruse/fixture.hpp"

namespace wateruse {

struct ClassCounts {
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their harmonic mean; 0 on a zero denominator.
Metrics metrics(const ClassCounts& counts) noexcept;

struct TimeSpan {
    double start = 0.0;
    double end = 0.0;  ///< exclusive

    double length() const noexcept { return end - start; }
};

double overlap(const TimeSpan& a, const TimeSpan& b) noexcept;

struct Matching {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< (prediction, truth)
    std::vector<std::size_t> unmatched_predictions;
    std::vector<std::size_t> unmatched_truth;
};

/// One-to-one greedy matching: candidate pairs overlap by at least `overlap_frac` of the shorter
/// interval and are taken in order of decreasing overlap. The result does not depend on input order.
Matching match_events(std::span<const TimeSpan> predictions, std::span<const TimeSpan> truth,
                      double overlap_frac = 0.5);

enum class Weighting { Count, Volume };

struct ScoredEvent {
    std::optional<Fixture> label;  ///< empty: unclassified prediction
    double volume_l = 0.0;
};

struct ClassScore {
    Fixture fixture = Fixture::Toilet;
    ClassCounts counts;
    Metrics metrics;
};

struct ScoreReport {
    Weighting weighting = Weighting::Count;
    std::array<ClassScore, kFixtureCount> classes;
    double macro_f1 = 0.0;  ///< mean F1 over classes with support or predictions
};

/// TP and FN weigh by the true event's volume, FP by the predicted event's volume.
ScoreReport score(const Matching& matching, std::span<const ScoredEvent> predictions,
                  std::span<const ScoredEvent> truth, Weighting weighting);

/// Single-vs-combined triage of top-level events.
struct DetectionTable {
    ClassCounts single;
    ClassCounts combined;
    double true_negative = 0.0;  ///< combined events recognised as such, seen from the single class
    Metrics single_metrics;
    Metrics combined_metrics;
};

DetectionTable detection_table(std::size_t single_tp, std::size_t single_fp, std::size_t single_fn,
                               std::size_t combined_tp, std::size_t combined_fp, std::size_t combined_fn);

/// Rows: the five fixtures, "unclassified", "missed"; columns: the five fixtures, "none".
struct ConfusionMatrix {
    static constexpr std::size_t kRows = kFixtureCount + 2;
    static constexpr std::size_t kCols = kFixtureCount + 1;
    std::array<std::array<std::size_t, kCols>, kRows> counts{};
};

struct EvaluationReport {
    ScoreReport by_count;
    ScoreReport by_volume;
    DetectionTable detection;
    ConfusionMatrix confusion;
    std::size_t truth_single = 0;
    std::size_t truth_overlap_groups = 0;
    std::size_t predicted_single_scope = 0;
    double overlap_frac = 0.5;
};

/// Scores classifier rows against burst-level truth. Single-event scores cover truth segments
/// outside any overlap group and terminal predictions whose top-level event holds exactly one
/// truth segment. Throws ModelError when ids are duplicated, a parent is missing, or the two
/// files cover disjoint time spans.
EvaluationReport evaluate(const std::vector<PredictionRow>& predictions, const std::vector<LedgerRow>& truth,
                          double overlap_frac = 0.5);

nlohmann::json to_json(const EvaluationReport& report);
std::string confusion_csv(const ConfusionMatrix& m);
std::string per_class_csv(const EvaluationReport& report);

}  // namespace wateruse
