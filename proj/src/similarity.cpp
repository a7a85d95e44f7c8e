#include "stlda/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <tuple>

#include "stlda/parallel.hpp"

namespace stlda {
namespace {

void check_distribution(std::span<const double> p) {
    double sum = 0;
    for (double x : p) {
        if (!(x >= 0) || !std::isfinite(x)) throw DataError("JSD input has a negative or non-finite entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("JSD input does not sum to 1");
}

// x * log(x / m) with the 0 * log 0 = 0 convention.
double kl_term(double x, double m) { return x > 0 ? x * std::log(x / m) : 0.0; }

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DataError("JSD inputs have different sizes");
    check_distribution(p);
    check_distribution(q);
    double total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        total += kl_term(p[i], m) + kl_term(q[i], m);
    }
    // Rounding can leave a tiny negative value for identical inputs.
    return std::max(0.0, 0.5 * total);
}

CondensedMatrix distance_matrix(std::span<const std::vector<double>> thetas, std::size_t threads) {
    const std::size_t n = thetas.size();
    CondensedMatrix d(n);
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) d.set(i, j, std::sqrt(jsd(thetas[i], thetas[j])));
    });
    return d;
}

Dendrogram average_linkage(const CondensedMatrix& distances) {
    const std::size_t n = distances.size();
    if (n < 2) throw DataError("average linkage needs at least two points");

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = distances(i, j);

    std::vector<bool> active(n, true);
    std::vector<std::size_t> size(n, 1), rep(n), node(n);
    std::iota(rep.begin(), rep.end(), 0);
    std::iota(node.begin(), node.end(), 0);

    using Key = std::tuple<double, std::size_t, std::size_t>;
    auto key = [&](std::size_t a, std::size_t b) {
        return Key{dist[a * n + b], std::min(rep[a], rep[b]), std::max(rep[a], rep[b])};
    };
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> nn(n, kNone);
    auto rescan = [&](std::size_t a) {
        nn[a] = kNone;
        for (std::size_t b = 0; b < n; ++b) {
            if (b == a || !active[b]) continue;
            if (nn[a] == kNone || key(a, b) < key(a, nn[a])) nn[a] = b;
        }
    };
    for (std::size_t a = 0; a < n; ++a) rescan(a);

    Dendrogram out;
    out.leaves = n;
    out.merges.reserve(n - 1);
    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t a = kNone;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            if (a == kNone || key(i, nn[i]) < key(a, nn[a])) a = i;
        }
        std::size_t b = nn[a];
        if (rep[b] < rep[a]) std::swap(a, b);  // a keeps the merged cluster

        out.merges.push_back({node[a], node[b], dist[a * n + b], size[a] + size[b]});
        const double wa = static_cast<double>(size[a]), wb = static_cast<double>(size[b]);
        for (std::size_t x = 0; x < n; ++x) {
            if (!active[x] || x == a || x == b) continue;
            const double merged = (wa * dist[a * n + x] + wb * dist[b * n + x]) / (wa + wb);
            dist[a * n + x] = dist[x * n + a] = merged;
        }
        active[b] = false;
        size[a] += size[b];
        node[a] = n + step;

        rescan(a);
        for (std::size_t x = 0; x < n; ++x) {
            if (!active[x] || x == a) continue;
            if (nn[x] == a || nn[x] == b)
                rescan(x);
            else if (key(x, a) < key(x, nn[x]))
                nn[x] = a;
        }
    }
    return out;
}

namespace {

std::vector<std::size_t> labels_from(const Dendrogram& dendrogram, const std::vector<bool>& apply) {
    const std::size_t n = dendrogram.leaves;
    std::vector<std::size_t> parent(n + dendrogram.merges.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < dendrogram.merges.size(); ++i) {
        if (!apply[i]) continue;
        const auto& m = dendrogram.merges[i];
        parent[find(m.left)] = n + i;
        parent[find(m.right)] = n + i;
    }
    std::vector<std::size_t> labels(n);
    std::vector<std::size_t> label_of_root(parent.size(), std::numeric_limits<std::size_t>::max());
    std::size_t next = 0;
    for (std::size_t leaf = 0; leaf < n; ++leaf) {
        auto& l = label_of_root[find(leaf)];
        if (l == std::numeric_limits<std::size_t>::max()) l = next++;
        labels[leaf] = l;
    }
    return labels;
}

}  // namespace

std::vector<std::size_t> cut_dendrogram(const Dendrogram& dendrogram, std::size_t n_clusters) {
    if (n_clusters < 1 || n_clusters > dendrogram.leaves)
        throw ConfigError("cluster count must lie in [1, " + std::to_string(dendrogram.leaves) + "]");
    std::vector<bool> apply(dendrogram.merges.size(), false);
    for (std::size_t i = 0; i < dendrogram.leaves - n_clusters; ++i) apply[i] = true;
    return labels_from(dendrogram, apply);
}

std::vector<std::size_t> cut_dendrogram_at(const Dendrogram& dendrogram, double threshold) {
    if (!(threshold >= 0)) throw ConfigError("cut height must be nonnegative");
    std::vector<bool> apply(dendrogram.merges.size());
    for (std::size_t i = 0; i < apply.size(); ++i) apply[i] = dendrogram.merges[i].height <= threshold;
    return labels_from(dendrogram, apply);
}

std::vector<std::vector<double>> cluster_mean_theta(std::span<const std::size_t> labels,
                                                    std::span<const std::vector<double>> thetas) {
    if (labels.size() != thetas.size()) throw DataError("labels and thetas differ in length");
    if (labels.empty()) return {};
    const std::size_t clusters = *std::max_element(labels.begin(), labels.end()) + 1;
    const std::size_t width = thetas.front().size();
    std::vector<std::vector<double>> mean(clusters, std::vector<double>(width, 0.0));
    std::vector<std::size_t> members(clusters, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (thetas[i].size() != width) throw DataError("thetas differ in size");
        for (std::size_t q = 0; q < width; ++q) mean[labels[i]][q] += thetas[i][q];
        ++members[labels[i]];
    }
    for (std::size_t c = 0; c < clusters; ++c)
        for (auto& x : mean[c]) x /= static_cast<double>(std::max<std::size_t>(members[c], 1));
    return mean;
}

std::vector<std::vector<double>> traveler_thetas(const TrainedModel& model) {
    const auto estimate = model.final_estimate();
    std::vector<std::vector<double>> out;
    out.reserve(model.dims.U);
    for (std::size_t u = 0; u < model.dims.U; ++u) {
        const auto row = estimate.theta_of(u);
        out.emplace_back(row.begin(), row.end());
    }
    return out;
}

void write_dendrogram(std::ostream& out, const Dendrogram& dendrogram, char delimiter) {
    out << "node" << delimiter << "left" << delimiter << "right" << delimiter << "height" << delimiter << "size\n";
    out.precision(17);
    for (std::size_t i = 0; i < dendrogram.merges.size(); ++i) {
        const auto& m = dendrogram.merges[i];
        out << dendrogram.leaves + i << delimiter << m.left << delimiter << m.right << delimiter << m.height
            << delimiter << m.size << '\n';
    }
}

}  // namespace stlda
