#include "stlda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "json.hpp"

namespace stlda {
namespace {

std::size_t draw_index(std::span<const double> cdf, double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(std::span<const double> weights) {
    std::vector<double> cdf(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cdf.begin());
    return cdf;
}

// Column `col` of a row-major rows x cols matrix, as a CDF.
std::vector<double> column_cdf(const std::vector<double>& m, std::size_t rows, std::size_t cols, std::size_t col) {
    std::vector<double> w(rows);
    for (std::size_t r = 0; r < rows; ++r) w[r] = m[r * cols + col];
    return cumulative(w);
}

}  // namespace

std::vector<double> sample_dirichlet(std::size_t n, double a, Rng& rng) {
    // For a < 1, Gamma(a) = Gamma(a + 1) * U^(1/a); working with logs keeps
    // draws with very small a from underflowing to an all-zero vector.
    std::vector<double> log_g(n);
    std::gamma_distribution<double> gamma(a < 1 ? a + 1 : a, 1.0);
    for (auto& x : log_g) {
        x = std::log(gamma(rng));
        if (a < 1) x += std::log(1.0 - rng.uniform()) / a;
    }
    const double peak = *std::max_element(log_g.begin(), log_g.end());
    std::vector<double> p(n);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += p[i] = std::exp(log_g[i] - peak);
    for (auto& x : p) x /= sum;
    return p;
}

SyntheticCorpus generate(const SynthConfig& config) {
    const Dims& d = config.dims;
    d.validate();
    config.planted.validate();
    if (!(config.records_mean > 0)) throw ConfigError("mean records per traveler must be positive");
    if (config.days == 0) throw ConfigError("synthetic time span must be at least one day");

    SyntheticCorpus out;
    PlantedModel& truth = out.truth;
    truth.dims = d;
    truth.priors = config.planted;
    truth.psi.assign(d.T * d.J, 0.0);
    truth.phi.assign(d.S * d.K, 0.0);
    truth.theta.assign(d.U * d.pairs(), 0.0);
    truth.record_counts.assign(d.U, 0);

    Rng shared(derive_seed(config.seed, 0));
    for (std::size_t j = 0; j < d.J; ++j) {
        const auto col = sample_dirichlet(d.T, config.planted.beta, shared);
        for (std::size_t t = 0; t < d.T; ++t) truth.psi[t * d.J + j] = col[t];
    }
    for (std::size_t k = 0; k < d.K; ++k) {
        const auto col = sample_dirichlet(d.S, config.planted.gamma, shared);
        for (std::size_t s = 0; s < d.S; ++s) truth.phi[s * d.K + k] = col[s];
    }
    std::vector<std::vector<double>> hour_cdf(d.J), detector_cdf(d.K);
    for (std::size_t j = 0; j < d.J; ++j) hour_cdf[j] = column_cdf(truth.psi, d.T, d.J, j);
    for (std::size_t k = 0; k < d.K; ++k) detector_cdf[k] = column_cdf(truth.phi, d.S, d.K, k);

    Corpus& corpus = out.corpus;
    for (std::size_t s = 0; s < d.S; ++s) corpus.vocab.add(Vocab::make_label(std::to_string(10000 + s), "0"));
    corpus.travelers.resize(d.U);
    for (std::size_t u = 0; u < d.U; ++u) {
        Rng rng(derive_seed(config.seed, 1 + u));
        const auto theta = sample_dirichlet(d.pairs(), config.planted.alpha, rng);
        std::copy(theta.begin(), theta.end(), truth.theta.begin() + static_cast<std::ptrdiff_t>(u * d.pairs()));
        const auto pair_cdf = cumulative(theta);
        const auto n = std::max<long>(1, std::poisson_distribution<long>(config.records_mean)(rng));
        truth.record_counts[u] = static_cast<std::size_t>(n);

        Traveler& tr = corpus.travelers[u];
        tr.id = "traveler-" + std::to_string(u);
        tr.records.reserve(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            const auto z = draw_index(pair_cdf, rng.uniform());
            const auto t = draw_index(hour_cdf[z / d.K], rng.uniform());
            const auto s = draw_index(detector_cdf[z % d.K], rng.uniform());
            const auto day = rng.below(config.days);
            const auto within_hour = rng.below(3600);
            const Timestamp ts = config.start + std::chrono::days{day} + std::chrono::hours{t} +
                                 std::chrono::seconds{within_hour};
            tr.records.push_back({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(s), ts});
        }
        std::stable_sort(tr.records.begin(), tr.records.end(),
                         [](const Record& a, const Record& b) { return a.timestamp < b.timestamp; });
    }
    return out;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DataError("total variation of vectors with different sizes");
    double sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
    return 0.5 * sum;
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
    // Hungarian method with row/column potentials, O(n^3). 1-based internals.
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
    return assignment;
}

double Alignment::mean_temporal_tv() const {
    return std::accumulate(temporal_tv.begin(), temporal_tv.end(), 0.0) / static_cast<double>(temporal_tv.size());
}

double Alignment::mean_spatial_tv() const {
    return std::accumulate(spatial_tv.begin(), spatial_tv.end(), 0.0) / static_cast<double>(spatial_tv.size());
}

namespace {

void align(const std::vector<double>& recovered, const std::vector<double>& planted, std::size_t rows,
           std::size_t cols, std::vector<std::size_t>& perm, std::vector<double>& tv) {
    std::vector<std::vector<double>> rec(cols, std::vector<double>(rows)), pl(cols, std::vector<double>(rows));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            rec[c][r] = recovered[r * cols + c];
            pl[c][r] = planted[r * cols + c];
        }
    std::vector<double> cost(cols * cols);
    for (std::size_t i = 0; i < cols; ++i)
        for (std::size_t j = 0; j < cols; ++j) cost[i * cols + j] = total_variation(pl[i], rec[j]);
    perm = solve_assignment(cost, cols);
    tv.resize(cols);
    for (std::size_t i = 0; i < cols; ++i) tv[i] = cost[i * cols + perm[i]];
}

}  // namespace

Alignment match_factors(const ParameterSnapshot& recovered, const PlantedModel& planted) {
    const Dims& r = recovered.dims;
    const Dims& p = planted.dims;
    if (r.T != p.T || r.S != p.S || r.J != p.J || r.K != p.K)
        throw DataError("recovered and planted models have different dimensions");
    Alignment a;
    align(recovered.psi, planted.psi, p.T, p.J, a.temporal, a.temporal_tv);
    align(recovered.phi, planted.phi, p.S, p.K, a.spatial, a.spatial_tv);
    return a;
}

PlantedAnomalies plant_anomalies(const Corpus& future, double fraction, AnomalyMode mode, std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1)) throw ConfigError("anomaly fraction must lie strictly between 0 and 1");
    const std::size_t n = future.travelers.size();
    if (mode == AnomalyMode::Swap && n < 2) throw DataError("swap anomalies need at least two travelers");
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto flagged = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

    PlantedAnomalies out{future, std::vector<bool>(n, false)};
    for (std::size_t i = 0; i < flagged; ++i) {
        const std::size_t u = order[i];
        out.flags[u] = true;
        auto& records = out.corpus.travelers[u].records;
        if (mode == AnomalyMode::Swap) {
            std::size_t v = rng.below(n - 1);
            if (v >= u) ++v;
            records = future.travelers[v].records;
        } else {
            const auto T = future.vocab.temporal_size(), S = future.vocab.spatial_size();
            for (auto& r : records) {
                r.t = static_cast<std::uint32_t>(rng.below(T));
                r.s = static_cast<std::uint32_t>(rng.below(S));
                r.timestamp = start_of_day(r.timestamp) + std::chrono::hours{r.t} +
                              std::chrono::seconds{rng.below(3600)};
            }
        }
    }
    return out;
}

void save_truth(std::ostream& out, const PlantedModel& truth, const Vocab& vocab, const std::string& provenance) {
    const Dims& d = truth.dims;
    nlohmann::json j;
    j["format"] = "stlda-truth";
    j["version"] = 1;
    if (!provenance.empty()) j["config"] = nlohmann::json::parse(provenance);
    j["dims"] = {{"T", d.T}, {"S", d.S}, {"J", d.J}, {"K", d.K}, {"U", d.U}};
    j["priors"] = {{"alpha", truth.priors.alpha}, {"beta", truth.priors.beta}, {"gamma", truth.priors.gamma}};
    j["detectors"] = vocab.labels();
    j["psi"] = truth.psi;
    j["phi"] = truth.phi;
    j["theta"] = truth.theta;
    j["record_counts"] = truth.record_counts;
    out << j.dump() << '\n';
}

LoadedTruth load_truth(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("format") != "stlda-truth") throw ParseError(1, "not a planted-truth file");
        if (j.at("version") != 1) throw ParseError(1, "unsupported planted-truth version");
        LoadedTruth out;
        auto& m = out.model;
        const auto& d = j.at("dims");
        m.dims = {d.at("T"), d.at("S"), d.at("J"), d.at("K"), d.at("U")};
        const auto& p = j.at("priors");
        m.priors = {p.at("alpha"), p.at("beta"), p.at("gamma")};
        m.psi = j.at("psi").get<std::vector<double>>();
        m.phi = j.at("phi").get<std::vector<double>>();
        m.theta = j.at("theta").get<std::vector<double>>();
        m.record_counts = j.at("record_counts").get<std::vector<std::size_t>>();
        for (const auto& label : j.at("detectors").get<std::vector<std::string>>()) out.vocab.add(label);
        if (m.psi.size() != m.dims.T * m.dims.J || m.phi.size() != m.dims.S * m.dims.K ||
            m.theta.size() != m.dims.U * m.dims.pairs() || out.vocab.spatial_size() != m.dims.S)
            throw ParseError(1, "planted-truth arrays do not match its dimensions");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, std::string("malformed planted-truth file: ") + e.what());
    }
}

}  // namespace stlda
