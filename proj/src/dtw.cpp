#include "wateruse/dtw.hpp"

#include <algorithm>
#include <cmath>

#include "wateruse/error.hpp"
#include "wateruse/timeseries.hpp"

namespace wateruse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cell {
    double cost = kInf;
    std::size_t len = 0;
};

// Lexicographic (cost, length) minimum keeps the result symmetric in its arguments.
inline const Cell& best_of(const Cell& a, const Cell& b) {
    if (a.cost < b.cost) return a;
    if (b.cost < a.cost) return b;
    return a.len <= b.len ? a : b;
}

void require_nonempty(std::span<const double> s, std::span<const double> t) {
    if (s.empty() || t.empty()) {
        fail(ErrorCode::InvalidInput, "DTW needs two non-empty sequences");
    }
}

}  // namespace

DtwResult dtw(std::span<const double> s, std::span<const double> t, const DtwOptions& options) {
    require_nonempty(s, t);
    // Rows walk the longer sequence; the buffer spans the shorter one.
    std::span<const double> outer = s.size() >= t.size() ? s : t;
    std::span<const double> inner = s.size() >= t.size() ? t : s;
    const std::size_t m = outer.size();
    const std::size_t n = inner.size();

    const double abandon_total = options.abandon_above_per_step * static_cast<double>(m + n - 1);

    std::vector<Cell> prev(n), curr(n);
    // Column span last written into each buffer; everything else stays at infinity.
    std::pair<std::size_t, std::size_t> prev_span{1, 0}, curr_span{1, 0};
    auto column_range = [&](std::size_t i) -> std::pair<std::size_t, std::size_t> {
        if (!options.band) {
            return {0, n - 1};
        }
        const double centre = m == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(m - 1);
        const double w = static_cast<double>(*options.band);
        const double lo = std::max(0.0, std::floor(centre - w));
        const double hi = std::min(static_cast<double>(n - 1), std::ceil(centre + w));
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    };

    for (std::size_t i = 0; i < m; ++i) {
        const auto [lo, hi] = column_range(i);
        for (std::size_t j = curr_span.first; j <= curr_span.second && j < n; ++j) {
            curr[j] = Cell{};
        }
        curr_span = {lo, hi};
        double row_min = kInf;
        const double si = outer[i];
        for (std::size_t j = lo; j <= hi; ++j) {
            const double local = std::abs(si - inner[j]);
            Cell from;
            if (i == 0 && j == 0) {
                from = Cell{0.0, 0};
            } else {
                // Diagonal first so that exact ties prefer the shorter path.
                Cell diag = (i > 0 && j > 0) ? prev[j - 1] : Cell{};
                Cell up = i > 0 ? prev[j] : Cell{};
                Cell left = j > 0 ? curr[j - 1] : Cell{};
                from = best_of(best_of(diag, up), left);
                if (from.cost == kInf) {
                    continue;
                }
            }
            curr[j] = Cell{from.cost + local, from.len + 1};
            row_min = std::min(row_min, curr[j].cost);
        }
        if (row_min > abandon_total) {
            return DtwResult{kInf, 0};
        }
        std::swap(prev, curr);
        std::swap(prev_span, curr_span);
    }
    const Cell& last = prev[n - 1];
    if (last.cost == kInf) {
        return DtwResult{kInf, 0};
    }
    return DtwResult{last.cost, last.len};
}

std::pair<DtwResult, std::vector<std::pair<std::size_t, std::size_t>>> dtw_path(std::span<const double> s,
                                                                                std::span<const double> t) {
    require_nonempty(s, t);
    const std::size_t m = s.size();
    const std::size_t n = t.size();
    std::vector<Cell> w(m * n);
    auto at = [&](std::size_t i, std::size_t j) -> Cell& { return w[i * n + j]; };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double local = std::abs(s[i] - t[j]);
            Cell from{0.0, 0};
            if (i > 0 || j > 0) {
                Cell diag = (i > 0 && j > 0) ? at(i - 1, j - 1) : Cell{};
                Cell up = i > 0 ? at(i - 1, j) : Cell{};
                Cell left = j > 0 ? at(i, j - 1) : Cell{};
                from = best_of(best_of(diag, up), left);
            }
            at(i, j) = Cell{from.cost + local, from.len + 1};
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::size_t i = m - 1;
    std::size_t j = n - 1;
    path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        const double local = std::abs(s[i] - t[j]);
        const Cell& here = at(i, j);
        // Walk back to whichever predecessor reproduces the stored (cost, length).
        auto matches = [&](std::size_t pi, std::size_t pj) {
            const Cell& p = at(pi, pj);
            return p.len + 1 == here.len && p.cost + local == here.cost;
        };
        if (i > 0 && j > 0 && matches(i - 1, j - 1)) {
            --i;
            --j;
        } else if (i > 0 && matches(i - 1, j)) {
            --i;
        } else if (j > 0 && matches(i, j - 1)) {
            --j;
        } else if (i > 0 && j > 0) {
            --i;
            --j;
        } else if (i > 0) {
            --i;
        } else {
            --j;
        }
        path.emplace_back(i, j);
    }
    std::reverse(path.begin(), path.end());
    const Cell& last = at(m - 1, n - 1);
    return {DtwResult{last.cost, last.len}, std::move(path)};
}

SimilarityMatrix SimilarityMatrix::scaled(double c) const {
    SimilarityMatrix out(n_);
    for (std::size_t k = 0; k < values_.size(); ++k) {
        out.values_[k] = values_[k] * c;
    }
    return out;
}

SimilarityMatrix similarity_matrix(std::span<const std::vector<double>> events) {
    if (events.empty()) {
        fail(ErrorCode::InvalidInput, "similarity matrix needs at least one event");
    }
    std::vector<std::vector<double>> normalized;
    normalized.reserve(events.size());
    for (const auto& e : events) {
        normalized.push_back(z_normalize(e).values);
    }
    SimilarityMatrix m(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        for (std::size_t j = i + 1; j < events.size(); ++j) {
            m.set(i, j, dtw_distance(normalized[i], normalized[j]));
        }
    }
    return m;
}

}  // namespace wateruse
