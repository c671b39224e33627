#include "wateruse/clustering.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "wateruse/error.hpp"
#include "wateruse/random.hpp"

namespace wateruse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Partition {
    std::vector<std::size_t> membership;
    double cost = 0.0;
};

Partition assign(const SimilarityMatrix& d, const std::vector<std::size_t>& medoids) {
    const std::size_t n = d.size();
    Partition p;
    p.membership.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = kInf;
        for (std::size_t c = 0; c < medoids.size(); ++c) {
            if (medoids[c] == i) {
                best = c;
                best_d = 0.0;
                break;
            }
            const double v = d(i, medoids[c]);
            if (v < best_d) {
                best_d = v;
                best = c;
            }
        }
        p.membership[i] = best;
        p.cost += best_d;
    }
    return p;
}

// Each medoid moves to the member minimising the within-cluster total, only on strict improvement.
bool update_medoids(const SimilarityMatrix& d, const Partition& p, std::vector<std::size_t>& medoids) {
    bool changed = false;
    const std::size_t n = d.size();
    for (std::size_t c = 0; c < medoids.size(); ++c) {
        auto total_for = [&](std::size_t x) {
            double t = 0.0;
            for (std::size_t y = 0; y < n; ++y) {
                if (p.membership[y] == c) t += d(x, y);
            }
            return t;
        };
        std::size_t best = medoids[c];
        double best_total = total_for(best);
        for (std::size_t x = 0; x < n; ++x) {
            if (p.membership[x] != c || x == medoids[c]) continue;
            const double t = total_for(x);
            if (t < best_total) {
                best_total = t;
                best = x;
            }
        }
        if (best != medoids[c]) {
            medoids[c] = best;
            changed = true;
        }
    }
    return changed;
}

// Best single (medoid, non-medoid) exchange; applied only if it strictly lowers the cost.
bool best_swap(const SimilarityMatrix& d, std::vector<std::size_t>& medoids, double& cost) {
    const std::size_t n = d.size();
    std::vector<bool> is_medoid(n, false);
    for (auto m : medoids) is_medoid[m] = true;
    double best_cost = cost;
    std::size_t best_c = 0, best_x = 0;
    bool found = false;
    std::vector<std::size_t> trial = medoids;
    for (std::size_t c = 0; c < medoids.size(); ++c) {
        for (std::size_t x = 0; x < n; ++x) {
            if (is_medoid[x]) continue;
            trial[c] = x;
            const double t = assign(d, trial).cost;
            if (t < best_cost) {
                best_cost = t;
                best_c = c;
                best_x = x;
                found = true;
            }
        }
        trial[c] = medoids[c];
    }
    if (found) {
        medoids[best_c] = best_x;
        cost = best_cost;
    }
    return found;
}

ClusterAssignment finish(const SimilarityMatrix& d, std::vector<std::size_t> medoids, std::vector<double> history,
                         std::size_t iterations) {
    // Canonical cluster order: by medoid index.
    std::sort(medoids.begin(), medoids.end());
    const Partition p = assign(d, medoids);
    ClusterAssignment a;
    a.k = medoids.size();
    a.medoid_indices = std::move(medoids);
    a.membership = p.membership;
    a.sizes.assign(a.k, 0);
    for (auto c : p.membership) ++a.sizes[c];
    a.total_cost = p.cost;
    a.cost_history = std::move(history);
    a.iterations = iterations;
    return a;
}

ClusterAssignment single_start(const SimilarityMatrix& matrix, std::size_t k, std::size_t first,
                               const KMedoidsOptions& options) {
    const std::size_t n = matrix.size();
    std::vector<std::size_t> medoids{first};
    std::vector<double> nearest(n, kInf);
    while (medoids.size() < k) {
        const std::size_t last = medoids.back();
        std::size_t pick = n;
        double far = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], matrix(i, last));
            if (std::find(medoids.begin(), medoids.end(), i) != medoids.end()) continue;
            if (nearest[i] > far) {
                far = nearest[i];
                pick = i;
            }
        }
        medoids.push_back(pick);
    }

    std::vector<double> history;
    Partition p = assign(matrix, medoids);
    history.push_back(p.cost);
    std::size_t it = 0;
    while (it < options.max_iterations) {
        ++it;
        if (update_medoids(matrix, p, medoids)) {
            p = assign(matrix, medoids);
            history.push_back(p.cost);
            continue;
        }
        double cost = p.cost;
        if (!best_swap(matrix, medoids, cost)) {
            break;
        }
        p = assign(matrix, medoids);
        history.push_back(p.cost);
    }
    return finish(matrix, std::move(medoids), std::move(history), it);
}

}  // namespace

std::vector<std::size_t> ClusterAssignment::members(std::size_t cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < membership.size(); ++i) {
        if (membership[i] == cluster) out.push_back(i);
    }
    return out;
}

ClusterAssignment k_medoids(const SimilarityMatrix& matrix, std::size_t k, std::uint64_t seed,
                            KMedoidsOptions options) {
    const std::size_t n = matrix.size();
    if (k < 1 || k > n) {
        fail(ErrorCode::InvalidInput,
             "k-medoids needs 1 <= k <= " + std::to_string(n) + ", got k = " + std::to_string(k));
    }
    CounterRng rng(stream_key(seed, 0x6b6d65646f696473ULL));
    ClusterAssignment best;
    bool have = false;
    for (std::size_t start = 0; start < std::max<std::size_t>(options.starts, 1); ++start) {
        ClusterAssignment a = single_start(matrix, k, static_cast<std::size_t>(rng() % n), options);
        if (!have || a.total_cost < best.total_cost) {
            best = std::move(a);
            have = true;
        }
    }
    return best;
}

double silhouette(const SimilarityMatrix& matrix, const ClusterAssignment& assignment) {
    if (assignment.k < 2) {
        fail(ErrorCode::InvalidInput, "silhouette needs at least two clusters");
    }
    const std::size_t n = matrix.size();
    if (assignment.membership.size() != n) {
        fail(ErrorCode::InvalidInput, "assignment does not match the matrix size");
    }
    std::vector<std::size_t> sizes(assignment.k, 0);
    for (auto c : assignment.membership) ++sizes[c];
    for (auto s : sizes) {
        if (s == 0) fail(ErrorCode::InvalidInput, "silhouette needs non-empty clusters");
    }
    double total = 0.0;
    std::vector<double> sums(assignment.k);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = assignment.membership[i];
        if (sizes[own] == 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[assignment.membership[j]] += matrix(i, j);
        }
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = kInf;
        for (std::size_t c = 0; c < assignment.k; ++c) {
            if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

KSelection select_k(const SimilarityMatrix& matrix, std::size_t k_min, std::size_t k_max, std::uint64_t seed) {
    const std::size_t n = matrix.size();
    if (n < 2) {
        fail(ErrorCode::InvalidInput, "k selection needs at least two events");
    }
    k_min = std::max<std::size_t>(k_min, 2);
    k_max = std::min(k_max, n);
    if (k_min > k_max) {
        fail(ErrorCode::InvalidInput, "empty k range");
    }
    KSelection sel;
    double best_score = -kInf;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        ClusterAssignment a = k_medoids(matrix, k, seed);
        const double s = silhouette(matrix, a);
        sel.scores.emplace_back(k, s);
        if (s > best_score) {
            best_score = s;
            sel.best = std::move(a);
        }
    }
    return sel;
}

std::size_t medoid_signature(const SimilarityMatrix& matrix, const ClusterAssignment& assignment,
                             std::size_t cluster_id) {
    const auto members = assignment.members(cluster_id);
    if (members.empty()) {
        fail(ErrorCode::InvalidInput, "cluster " + std::to_string(cluster_id) + " is empty");
    }
    const auto tc = static_cast<double>(members.size());
    std::size_t best = members.front();
    double best_d = kInf;
    for (auto x : members) {
        double sum = 0.0;
        for (auto y : members) sum += matrix(x, y);
        const double d = sum / tc;
        if (d < best_d) {
            best_d = d;
            best = x;
        }
    }
    return best;
}

}  // namespace wateruse
