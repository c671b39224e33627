#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wateruse/fixture.hpp"
#include "wateruse/random.hpp"
#include "wateruse/signature.hpp"
#include "wateruse/timeseries.hpp"

namespace wateruse {

inline constexpr double kSecondsPerDay = 86400.0;

struct CountDistribution {
    enum class Kind { Poisson, NegativeBinomial };
    Kind kind = Kind::Poisson;
    double lambda = 0.0;  ///< Poisson rate
    double r = 1.0;       ///< negative binomial size
    double p = 0.5;       ///< negative binomial success probability

    static CountDistribution poisson(double lambda) { return {Kind::Poisson, lambda, 1.0, 0.5}; }
    static CountDistribution negative_binomial(double r, double p) { return {Kind::NegativeBinomial, 0.0, r, p}; }

    double mean() const noexcept;
    std::size_t draw(CounterRng& rng) const;
};

/// Hourly histogram of start times smoothed with a Gaussian kernel (circular over the day).
struct StartTimeDistribution {
    std::array<double, 24> hourly_weights{};
    double bandwidth_s = 600.0;

    /// Seconds of day in [0, 86400).
    double sample(CounterRng& rng) const;
};

struct GaussianComponent {
    double weight = 1.0;
    std::array<double, 2> mean{};                    ///< (duration s, volume L)
    std::array<std::array<double, 2>, 2> cov{};
};

struct DurationVolumeMixture {
    std::vector<GaussianComponent> components;

    std::array<double, 2> sample(CounterRng& rng) const;
};

struct FlowBounds {
    double min_peak = 0.0;  ///< L/s
    double max_peak = 0.0;  ///< L/s
};

struct FixturePriors {
    Fixture fixture = Fixture::Toilet;
    std::string efficiency = "standard";
    CountDistribution events_per_day;
    StartTimeDistribution start_time;
    DurationVolumeMixture duration_volume;
    FlowBounds flow_bounds;

    /// Throws ModelError on weights that do not sum to one, indefinite covariances, bad bounds.
    void validate() const;
};

struct UsageModel {
    double resolution_s = 1.0;
    int occupants = 4;
    std::vector<FixturePriors> fixtures;
    SignatureLibrary library;

    const FixturePriors* priors(Fixture f) const;
    /// Every fixture with priors must have generation signatures in the library.
    void validate() const;
};

/// Admissible mean flow (volume / duration) range derived from the signatures and peak bounds.
struct FlowEnvelope {
    double lo = 0.0;
    double hi = 0.0;
};

FlowEnvelope mean_flow_envelope(const FixturePriors& priors, const SignatureLibrary& library);

/// Signatures the generator draws from: regular ones, or the full cycle for intermittent fixtures.
std::vector<const Signature*> generation_signatures(const SignatureLibrary& library, Fixture f);

struct EventParams {
    double start_s = 0.0;  ///< seconds of day
    double duration_s = 0.0;
    double volume_l = 0.0;
    bool clamped = false;  ///< rejection budget exhausted; values were clamped into the envelope
};

inline constexpr std::size_t kMaxRejections = 100;

std::vector<std::size_t> sample_daily_counts(const UsageModel& model, std::size_t day, std::uint64_t seed);

EventParams sample_event_params(const FixturePriors& priors, const FlowEnvelope& envelope, double resolution_s,
                                CounterRng& rng);

struct ScaleOptions {
    /// Largest duration change allowed when re-stretching after a peak clamp.
    double max_restretch = 4.0;
};

/// Resamples the signature to round(duration/resolution) samples and scales it to `volume_l`.
/// A peak outside `bounds` is clamped and the duration re-stretched once; throws
/// VolumeInfeasible if the volume cannot be delivered within the bounds.
std::vector<double> scale_signature(const Signature& sig, double duration_s, double volume_l, double resolution_s,
                                    const FlowBounds& bounds, ScaleOptions options = {});

struct LedgerEntry {
    std::size_t id = 0;
    Fixture fixture = Fixture::Toilet;
    std::size_t start_index = 0;
    std::size_t length = 0;           ///< samples written (after truncation)
    double sampled_duration_s = 0.0;
    double sampled_volume_l = 0.0;
    double volume_l = 0.0;            ///< realized in the fixture series
    std::size_t signature_index = 0;
    bool truncated = false;           ///< cut at the end of the dataset
    std::optional<std::size_t> overlap_group;
};

/// One contiguous burst of a ledger entry; regular uses have exactly one.
struct TruthSegment {
    std::string id;
    std::size_t ledger_id = 0;
    Fixture fixture = Fixture::Toilet;
    std::size_t start_index = 0;
    std::size_t length = 0;
    double volume_l = 0.0;
    std::optional<std::size_t> overlap_group;
};

struct GeneratedDataset {
    double resolution_s = 1.0;
    std::uint64_t seed = 0;
    std::size_t days = 0;
    std::array<std::vector<double>, kFixtureCount> fixture_flows;
    FlowSeries total;
    std::vector<LedgerEntry> ledger;
    std::vector<TruthSegment> segments;
    std::size_t overlap_groups = 0;
    std::size_t skipped_infeasible = 0;
    std::size_t skipped_overlap = 0;

    FlowSeries fixture_series(Fixture f) const;
    /// Total trace labelled with the highest-flow fixture at each sample.
    LabeledTrace labeled_total() const;
    LabeledTrace labeled_fixture(Fixture f) const;
};

GeneratedDataset generate(const UsageModel& model, std::size_t days, std::uint64_t seed);

nlohmann::json to_json(const UsageModel& model);
/// `base_dir` resolves a relative "library_path".
UsageModel model_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

}  // namespace wateruse
