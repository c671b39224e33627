#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace wateruse {

struct DtwOptions {
    /// Sakoe-Chiba half-width in samples around the (length-scaled) diagonal. Off by default.
    std::optional<std::size_t> band;
    /// Stop early and report an infinite cost once the cost per aligned step is certain to
    /// exceed this value.
    double abandon_above_per_step = std::numeric_limits<double>::infinity();
};

struct DtwResult {
    double cost = 0.0;             ///< accumulated |s_i - t_j| along the optimal path
    std::size_t path_length = 0;   ///< cells on that path; shortest among equal-cost paths

    double cost_per_step() const noexcept {
        return path_length == 0 ? std::numeric_limits<double>::infinity()
                                : cost / static_cast<double>(path_length);
    }
    bool abandoned() const noexcept { return path_length == 0; }
};

/// Unconstrained DTW with steps (i-1,j), (i-1,j-1), (i,j-1) and absolute-difference local cost.
/// Runs with a rolling buffer sized to the shorter input.
DtwResult dtw(std::span<const double> s, std::span<const double> t, const DtwOptions& options = {});

inline double dtw_distance(std::span<const double> s, std::span<const double> t) { return dtw(s, t).cost; }

/// Full-matrix variant that also returns the warping path, (0,0) first.
std::pair<DtwResult, std::vector<std::pair<std::size_t, std::size_t>>> dtw_path(std::span<const double> s,
                                                                                std::span<const double> t);

class SimilarityMatrix {
public:
    SimilarityMatrix() = default;
    explicit SimilarityMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) noexcept {
        values_[i * n_ + j] = v;
        values_[j * n_ + i] = v;
    }
    SimilarityMatrix scaled(double c) const;

private:
    std::size_t n_ = 0;
    std::vector<double> values_;
};

/// M_ij = DTW(z(e_i), z(e_j)); computed on the upper triangle and mirrored.
SimilarityMatrix similarity_matrix(std::span<const std::vector<double>> events);

}  // namespace wateruse
