#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wateruse/fixture.hpp"
#include "wateruse/timeseries.hpp"

namespace wateruse {

enum class SignatureKind { Regular, FullCycle, SubPattern };

std::string_view to_string(SignatureKind kind) noexcept;

/// A prototype flow pattern. `values` are z-normalized; `mean` and `std` are the flow-domain
/// statistics of the source pattern so that a relative flow shape can be recovered.
struct Signature {
    Fixture fixture = Fixture::Toilet;
    SignatureKind kind = SignatureKind::Regular;
    std::vector<double> values;
    double duration_s = 0.0;
    double mean = 0.0;
    double std = 0.0;

    /// Builds a signature from a flow-domain pattern.
    static Signature from_flows(Fixture fixture, SignatureKind kind, std::span<const double> flows,
                                double resolution_s);

    /// Non-negative flow-domain shape (values * std + mean, clamped at zero).
    std::vector<double> shape() const;
};

struct LibraryProvenance {
    std::string source = "unspecified";
    bool smoothed = false;
    int smoothing_degree = 0;
    std::uint64_t seed = 0;
    std::size_t k_min = 2;
    std::size_t k_max = 10;
};

class SignatureLibrary {
public:
    double resolution_s = 1.0;
    LibraryProvenance provenance;

    const std::vector<Signature>& signatures(Fixture f) const { return by_fixture_[index_of(f)]; }
    std::vector<Signature>& signatures(Fixture f) { return by_fixture_[index_of(f)]; }
    bool has(Fixture f) const { return !by_fixture_[index_of(f)].empty(); }

    void add(Signature sig) { by_fixture_[index_of(sig.fixture)].push_back(std::move(sig)); }

    /// Regular signatures, or sub-patterns for intermittent fixtures.
    std::vector<const Signature*> candidates(Fixture f) const;
    const Signature* full_cycle(Fixture f) const;

    /// Throws ModelError if an intermittent fixture lacks its full-cycle/sub-pattern pair.
    void validate() const;

private:
    std::array<std::vector<Signature>, kFixtureCount> by_fixture_;
};

/// Least-squares polynomial fit of the flow-domain shape evaluated at the sample points,
/// negative fitted flows clamped to zero, then re-normalized.
Signature smooth_signature(const Signature& sig, int degree);

struct CalibrationConfig {
    std::size_t k_min = 2;
    std::size_t k_max = 10;
    std::optional<int> smooth_degree;  ///< smoothing is off unless set
    std::uint64_t seed = 0;
    /// Bursts of an intermittent fixture closer than this belong to one cycle.
    double cycle_gap_s = 1200.0;
    /// Band (fraction of length) for full-cycle DTW comparisons; 0 disables it.
    double cycle_band_fraction = 0.1;
    double dedup_distance = 1e-9;
    std::string source = "labeled dataset";
};

/// Clusters same-fixture patterns (DTW + k-medoids + silhouette) and returns one medoid signature
/// per cluster, smoothed if configured, with near-duplicates removed.
std::vector<Signature> cluster_prototypes(const std::vector<std::vector<double>>& patterns, Fixture fixture,
                                          SignatureKind kind, double resolution_s, const CalibrationConfig& config);

/// Splits a full-cycle signature into its bursts and clusters them into sub-pattern signatures.
std::vector<Signature> derive_sub_patterns(const Signature& full_cycle, double resolution_s,
                                           const CalibrationConfig& config);

/// Groups an intermittent fixture's labeled bursts into cycles and returns each cycle's flow
/// pattern (pauses included as zeros).
std::vector<std::vector<double>> group_cycles(const std::vector<EventRecord>& bursts, double cycle_gap_s);

/// Full calibration: per fixture, normalize -> similarity matrix -> select k -> medoids -> smooth.
/// Intermittent fixtures also get one full-cycle signature. Throws MissingFixtureData when no
/// labeled events are supplied.
SignatureLibrary extract_signatures(const std::vector<EventRecord>& labeled_events, double resolution_s,
                                    const CalibrationConfig& config);

nlohmann::json to_json(const SignatureLibrary& library);
SignatureLibrary library_from_json(const nlohmann::json& doc);

/// Rounds to nine significant digits (the persisted precision).
double round_sig9(double v);

}  // namespace wateruse
