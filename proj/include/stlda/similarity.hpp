#pragma once

// Traveler similarity on topic-pair distributions: Jensen-Shannon
// divergence, sqrt(JSD) distances and average-linkage (UPGMA) clustering.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "stlda/model.hpp"

namespace stlda {

/// Natural-log Jensen-Shannon divergence, in [0, ln 2]. Both inputs must be
/// nonnegative and sum to 1 within 1e-9; zero entries contribute nothing.
double jsd(std::span<const double> p, std::span<const double> q);

/// Upper triangle of a symmetric matrix with zero diagonal, row-major
/// (the i < j entries of row 0, then row 1, ...).
class CondensedMatrix {
public:
    CondensedMatrix() = default;
    explicit CondensedMatrix(std::size_t n) : n_(n), values_(n < 2 ? 0 : n * (n - 1) / 2, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    std::span<const double> values() const noexcept { return values_; }

    double operator()(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        return values_[index(i, j)];
    }
    void set(std::size_t i, std::size_t j, double v) { values_[index(i, j)] = v; }

private:
    std::size_t index(std::size_t i, std::size_t j) const {
        if (i > j) std::swap(i, j);
        return n_ * i - i * (i + 1) / 2 + (j - i - 1);
    }
    std::size_t n_ = 0;
    std::vector<double> values_;
};

/// Pairwise sqrt(JSD) distances.
CondensedMatrix distance_matrix(std::span<const std::vector<double>> thetas, std::size_t threads = 1);

struct Merge {
    std::size_t left = 0;   // node id: leaves are 0..n-1, merge i creates node n + i
    std::size_t right = 0;
    double height = 0;
    std::size_t size = 0;
};

struct Dendrogram {
    std::size_t leaves = 0;
    std::vector<Merge> merges;  // n - 1 merges in merge order
};

/// UPGMA. The closest pair of clusters is merged first; equal distances are
/// broken by the pair's smallest leaf ids (lexicographic on (min, max)).
/// Nearest neighbours are cached per cluster, so a merge only rescans the
/// rows whose neighbour disappeared.
Dendrogram average_linkage(const CondensedMatrix& distances);

/// Labels after keeping the top n_clusters - 1 merges uncut. Labels are
/// contiguous and numbered by each cluster's smallest member.
std::vector<std::size_t> cut_dendrogram(const Dendrogram& dendrogram, std::size_t n_clusters);

/// Labels after cutting every merge higher than `threshold`.
std::vector<std::size_t> cut_dendrogram_at(const Dendrogram& dendrogram, double threshold);

/// Elementwise mean θ of each cluster, indexed by label.
std::vector<std::vector<double>> cluster_mean_theta(std::span<const std::size_t> labels,
                                                    std::span<const std::vector<double>> thetas);

/// θ of every training traveler, estimated from the model's final counts.
std::vector<std::vector<double>> traveler_thetas(const TrainedModel& model);

void write_dendrogram(std::ostream& out, const Dendrogram& dendrogram, char delimiter = ',');

}  // namespace stlda
