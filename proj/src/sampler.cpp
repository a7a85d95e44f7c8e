#include "stlda/sampler.hpp"

#include <cmath>
#include <optional>

#include "stlda/parallel.hpp"

namespace stlda {
namespace {

// Inverse-CDF draw over an unnormalized cumulative table.
std::uint32_t draw(std::span<const double> cumulative, Rng& rng) {
    const double x = rng.uniform() * cumulative.back();
    for (std::size_t z = 0; z + 1 < cumulative.size(); ++z)
        if (x < cumulative[z]) return static_cast<std::uint32_t>(z);
    return static_cast<std::uint32_t>(cumulative.size() - 1);
}

// Per-thread scratch for one conditional evaluation.
struct Scratch {
    std::vector<double> temporal, spatial, cumulative;
    explicit Scratch(const Dims& d) : temporal(d.J), spatial(d.K), cumulative(d.pairs()) {}
};

// Fills scratch.cumulative with the running sum of the unnormalized
// conditional. The traveler denominator is constant over (j, k) and omitted.
void conditional_weights(const CountState& c, WordPair w, std::size_t u, const Priors& p, Scratch& scratch) {
    const Dims& d = c.dims;
    const double t_beta = static_cast<double>(d.T) * p.beta;
    const double s_gamma = static_cast<double>(d.S) * p.gamma;
    const Count* tj = &c.temporal[w.t * d.J];
    const Count* sk = &c.spatial[w.s * d.K];
    for (std::size_t j = 0; j < d.J; ++j)
        scratch.temporal[j] = (static_cast<double>(tj[j]) + p.beta) / (static_cast<double>(c.temporal_totals[j]) + t_beta);
    for (std::size_t k = 0; k < d.K; ++k)
        scratch.spatial[k] = (static_cast<double>(sk[k]) + p.gamma) / (static_cast<double>(c.spatial_totals[k]) + s_gamma);
    const Count* ujk = &c.traveler[u * d.pairs()];
    double sum = 0;
    std::size_t z = 0;
    for (std::size_t j = 0; j < d.J; ++j) {
        const double a = scratch.temporal[j];
        for (std::size_t k = 0; k < d.K; ++k, ++z) {
            sum += a * scratch.spatial[k] * (static_cast<double>(ujk[z]) + p.alpha);
            scratch.cumulative[z] = sum;
        }
    }
}

}  // namespace

std::vector<double> gibbs_conditional(const CountState& counts, WordPair w, std::size_t u, const Priors& priors) {
    const Dims& d = counts.dims;
    const double t_beta = static_cast<double>(d.T) * priors.beta;
    const double s_gamma = static_cast<double>(d.S) * priors.gamma;
    const double traveler_denom =
        static_cast<double>(counts.traveler_totals[u]) + static_cast<double>(d.pairs()) * priors.alpha;
    std::vector<double> table(d.pairs());
    double total = 0;
    for (std::size_t j = 0; j < d.J; ++j) {
        const double temporal = (static_cast<double>(counts.temporal[w.t * d.J + j]) + priors.beta) /
                                (static_cast<double>(counts.temporal_totals[j]) + t_beta);
        for (std::size_t k = 0; k < d.K; ++k) {
            const double spatial = (static_cast<double>(counts.spatial[w.s * d.K + k]) + priors.gamma) /
                                   (static_cast<double>(counts.spatial_totals[k]) + s_gamma);
            const double traveler =
                (static_cast<double>(counts.traveler[u * d.pairs() + j * d.K + k]) + priors.alpha) / traveler_denom;
            table[j * d.K + k] = temporal * spatial * traveler;
            total += table[j * d.K + k];
        }
    }
    for (auto& p : table) p /= total;
    return table;
}

Dims dims_for(const Corpus& corpus, std::size_t J, std::size_t K) {
    Dims d{corpus.vocab.temporal_size(), corpus.vocab.spatial_size(), J, K, corpus.travelers.size()};
    d.validate();
    return d;
}

CountState initialize_state(const Corpus& corpus, const Dims& dims, Rng& rng) {
    std::vector<std::uint32_t> assignments(corpus.record_count());
    for (auto& z : assignments) z = static_cast<std::uint32_t>(rng.below(dims.pairs()));
    return CountState::tally(dims, corpus, std::move(assignments));
}

void sweep(CountState& state, const Corpus& corpus, const Priors& priors, Rng& rng) {
    Scratch scratch(state.dims);
    std::size_t i = 0;
    for (std::size_t u = 0; u < corpus.travelers.size(); ++u) {
        for (const auto& r : corpus.travelers[u].records) {
            const WordPair w = r.words();
            auto& z = state.assignments[i++];
            state.remove(u, w, z);
            conditional_weights(state, w, u, priors, scratch);
            z = draw(scratch.cumulative, rng);
            state.add(u, w, z);
        }
    }
}

double collapsed_log_likelihood(const CountState& c, const Priors& p) {
    const Dims& d = c.dims;
    const double T = static_cast<double>(d.T), S = static_cast<double>(d.S), JK = static_cast<double>(d.pairs());
    double ll = 0;
    ll += static_cast<double>(d.J) * (std::lgamma(T * p.beta) - T * std::lgamma(p.beta));
    for (std::size_t j = 0; j < d.J; ++j) {
        for (std::size_t t = 0; t < d.T; ++t) ll += std::lgamma(static_cast<double>(c.temporal[t * d.J + j]) + p.beta);
        ll -= std::lgamma(static_cast<double>(c.temporal_totals[j]) + T * p.beta);
    }
    ll += static_cast<double>(d.K) * (std::lgamma(S * p.gamma) - S * std::lgamma(p.gamma));
    for (std::size_t k = 0; k < d.K; ++k) {
        for (std::size_t s = 0; s < d.S; ++s) ll += std::lgamma(static_cast<double>(c.spatial[s * d.K + k]) + p.gamma);
        ll -= std::lgamma(static_cast<double>(c.spatial_totals[k]) + S * p.gamma);
    }
    ll += static_cast<double>(d.U) * (std::lgamma(JK * p.alpha) - JK * std::lgamma(p.alpha));
    for (std::size_t u = 0; u < d.U; ++u) {
        for (std::size_t z = 0; z < d.pairs(); ++z)
            ll += std::lgamma(static_cast<double>(c.traveler[u * d.pairs() + z]) + p.alpha);
        ll -= std::lgamma(static_cast<double>(c.traveler_totals[u]) + JK * p.alpha);
    }
    return ll;
}

namespace {

struct ChainResult {
    std::vector<ParameterSnapshot> snapshots;
    CountState state;
    std::vector<double> trace;
};

ChainResult run_chain(const Corpus& corpus, const Dims& dims, const Priors& priors, const TrainConfig& config,
                      std::size_t chain, std::uint64_t seed, std::size_t n_snapshots,
                      const ProgressCallback& progress) {
    Rng rng(seed);
    ChainResult out{{}, initialize_state(corpus, dims, rng), {}};
    const std::size_t total = config.burn_in + n_snapshots * config.thin;
    out.trace.reserve(total);
    for (std::size_t it = 1; it <= total; ++it) {
        sweep(out.state, corpus, priors, rng);
        if (config.check_consistency && !out.state.consistent_with(corpus))
            throw NumericError("count/assignment mismatch after sweep " + std::to_string(it));
        const double ll = collapsed_log_likelihood(out.state, priors);
        out.trace.push_back(ll);
        if (it > config.burn_in && (it - config.burn_in) % config.thin == 0)
            out.snapshots.push_back(estimate_parameters(out.state, priors));
        if (progress) progress({chain, it, total, ll});
    }
    return out;
}

}  // namespace

TrainedModel train(const Corpus& corpus, const TrainConfig& config, const Priors& priors,
                   const ProgressCallback& progress, std::size_t threads) {
    config.validate();
    priors.validate();
    if (corpus.travelers.empty()) throw DataError("cannot train on an empty corpus");
    corpus.validate();
    const Dims dims = dims_for(corpus, config.J, config.K);

    TrainedModel model;
    model.dims = dims;
    model.priors = priors;
    model.config = config;
    model.vocab = corpus.vocab;
    for (const auto& tr : corpus.travelers) model.traveler_ids.push_back(tr.id);

    if (config.chain_mode == ChainMode::Single) {
        auto chain = run_chain(corpus, dims, priors, config, 0, config.seed, config.samples, progress);
        model.snapshots = std::move(chain.snapshots);
        model.final_counts = std::move(chain.state);
        model.log_likelihood = std::move(chain.trace);
        return model;
    }

    std::vector<std::optional<ChainResult>> chains(config.samples);
    parallel_for(config.samples, threads, [&](std::size_t m) {
        chains[m] = run_chain(corpus, dims, priors, config, m, derive_seed(config.seed, m), 1, progress);
    });
    for (auto& chain : chains) model.snapshots.push_back(std::move(chain->snapshots.front()));
    model.final_counts = std::move(chains.front()->state);
    model.log_likelihood = std::move(chains.front()->trace);
    return model;
}

HeldoutTheta infer_heldout_theta(const TrainedModel& model, std::span<const WordPair> records,
                                 std::size_t iterations, Rng& rng) {
    if (records.empty()) throw DataError("held-out inference needs at least one record");
    const Dims& d = model.dims;
    const CountState& train = model.final_counts;
    const Priors& p = model.priors;
    for (const auto& w : records) {
        if (w.s >= d.S) throw OutOfVocabularyError("spatial word #" + std::to_string(w.s));
        if (w.t >= d.T) throw DataError("temporal word " + std::to_string(w.t) + " out of range");
    }

    std::vector<Count> temporal(d.T * d.J, 0), spatial(d.S * d.K, 0), traveler(d.pairs(), 0);
    std::vector<Count> temporal_totals(d.J, 0), spatial_totals(d.K, 0);
    std::vector<std::uint32_t> z(records.size());
    auto adjust = [&](WordPair w, std::uint32_t pair, Count delta) {
        const std::size_t j = pair / d.K, k = pair % d.K;
        temporal[w.t * d.J + j] += delta;
        spatial[w.s * d.K + k] += delta;
        traveler[pair] += delta;
        temporal_totals[j] += delta;
        spatial_totals[k] += delta;
    };
    for (std::size_t i = 0; i < records.size(); ++i) {
        z[i] = static_cast<std::uint32_t>(rng.below(d.pairs()));
        adjust(records[i], z[i], +1);
    }

    const double t_beta = static_cast<double>(d.T) * p.beta;
    const double s_gamma = static_cast<double>(d.S) * p.gamma;
    std::vector<double> a(d.J), b(d.K), cumulative(d.pairs());
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            const WordPair w = records[i];
            adjust(w, z[i], -1);
            for (std::size_t j = 0; j < d.J; ++j)
                a[j] = (static_cast<double>(train.temporal[w.t * d.J + j] + temporal[w.t * d.J + j]) + p.beta) /
                       (static_cast<double>(train.temporal_totals[j] + temporal_totals[j]) + t_beta);
            for (std::size_t k = 0; k < d.K; ++k)
                b[k] = (static_cast<double>(train.spatial[w.s * d.K + k] + spatial[w.s * d.K + k]) + p.gamma) /
                       (static_cast<double>(train.spatial_totals[k] + spatial_totals[k]) + s_gamma);
            double sum = 0;
            for (std::size_t j = 0, q = 0; j < d.J; ++j)
                for (std::size_t k = 0; k < d.K; ++k, ++q) {
                    sum += a[j] * b[k] * (static_cast<double>(traveler[q]) + p.alpha);
                    cumulative[q] = sum;
                }
            z[i] = draw(cumulative, rng);
            adjust(w, z[i], +1);
        }
    }

    HeldoutTheta out{d.J, d.K, std::vector<double>(d.pairs()), traveler};
    const double denom = static_cast<double>(records.size()) + static_cast<double>(d.pairs()) * p.alpha;
    for (std::size_t q = 0; q < d.pairs(); ++q) out.theta[q] = (static_cast<double>(traveler[q]) + p.alpha) / denom;
    return out;
}

}  // namespace stlda
