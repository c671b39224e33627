#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wateruse/dtw.hpp"

namespace wateruse {

struct ClusterAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> medoid_indices;  ///< one event index per cluster
    std::vector<std::size_t> membership;      ///< event index -> cluster id
    std::vector<std::size_t> sizes;
    double total_cost = 0.0;                  ///< sum of distances to the assigned medoid
    std::vector<double> cost_history;         ///< total cost after each refinement step
    std::size_t iterations = 0;

    std::vector<std::size_t> members(std::size_t cluster) const;
};

struct KMedoidsOptions {
    std::size_t max_iterations = 100;
    /// Independent runs, each seeded farthest-first from its own random first pick; the
    /// cheapest wins (earliest on ties).
    std::size_t starts = 4;
};

/// PAM-style k-medoids on a precomputed distance matrix: farthest-first seeding from a seeded
/// first pick, then alternate assignment / medoid update, then best-improvement swaps, until
/// nothing changes or the iteration cap is hit. Deterministic for a given seed.
ClusterAssignment k_medoids(const SimilarityMatrix& matrix, std::size_t k, std::uint64_t seed,
                            KMedoidsOptions options = {});

/// Mean silhouette width. Members of singleton clusters score 0, as does any point whose
/// a and b are both zero.
double silhouette(const SimilarityMatrix& matrix, const ClusterAssignment& assignment);

struct KSelection {
    ClusterAssignment best;
    std::vector<std::pair<std::size_t, double>> scores;  ///< (k, silhouette) for every k tried
};

/// Clusters for each k in [k_min, min(k_max, A)] and keeps the best silhouette, preferring the
/// smaller k on ties.
KSelection select_k(const SimilarityMatrix& matrix, std::size_t k_min, std::size_t k_max, std::uint64_t seed);

/// Member with the lowest mean distance to the rest of its cluster; lowest index on ties.
std::size_t medoid_signature(const SimilarityMatrix& matrix, const ClusterAssignment& assignment,
                             std::size_t cluster_id);

}  // namespace wateruse
