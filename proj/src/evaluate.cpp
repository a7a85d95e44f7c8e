#include "stlda/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "stlda/parallel.hpp"
#include "stlda/rng.hpp"
#include "stlda/sampler.hpp"

namespace stlda {

double record_likelihood(std::span<const double> theta, const ParameterSnapshot& snapshot, WordPair w) {
    const Dims& d = snapshot.dims;
    const double* psi = &snapshot.psi[w.t * d.J];
    const double* phi = &snapshot.phi[w.s * d.K];
    double total = 0;
    for (std::size_t j = 0; j < d.J; ++j) {
        double inner = 0;
        for (std::size_t k = 0; k < d.K; ++k) inner += theta[j * d.K + k] * phi[k];
        total += psi[j] * inner;
    }
    return total;
}

double log_mean_exp(std::span<const double> values) {
    if (values.empty()) throw NumericError("log_mean_exp of an empty sequence");
    const double peak = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(peak)) return peak;
    double sum = 0;
    for (double v : values) sum += std::exp(v - peak);
    return peak + std::log(sum / static_cast<double>(values.size()));
}

double log_likelihood(std::span<const double> theta, const ParameterSnapshot& snapshot,
                      std::span<const WordPair> records) {
    double ll = 0;
    for (const auto& w : records) ll += std::log(record_likelihood(theta, snapshot, w));
    return ll;
}

namespace {

void check_vocabulary(const TrainedModel& model, std::span<const WordPair> records) {
    for (const auto& w : records) {
        if (w.s >= model.dims.S) throw OutOfVocabularyError("spatial word #" + std::to_string(w.s));
        if (w.t >= model.dims.T) throw DataError("temporal word " + std::to_string(w.t) + " out of range");
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

PerplexityResult finish(const std::string& id, double ll, std::size_t n) {
    return {id, std::exp(-ll / static_cast<double>(n)), n, ll};
}

}  // namespace

PerplexityResult heldout_perplexity(const TrainedModel& model, const Traveler& traveler,
                                    const HeldoutOptions& options) {
    const auto records = traveler.word_pairs();
    if (records.empty()) throw DataError("traveler '" + traveler.id + "' has no records to score");
    check_vocabulary(model, records);
    if (model.snapshots.empty()) throw DataError("model has no parameter snapshots");

    if (options.mode == ThetaMode::Inferred) {
        Rng rng(derive_seed(options.seed, fnv1a(traveler.id)));
        const auto inferred = infer_heldout_theta(model, records, options.iterations, rng);
        const auto estimate = model.final_estimate();
        return finish(traveler.id, log_likelihood(inferred.theta, estimate, records), records.size());
    }

    const std::vector<double> equal(model.dims.pairs(), 1.0 / static_cast<double>(model.dims.pairs()));
    std::vector<double> per_snapshot;
    per_snapshot.reserve(model.snapshots.size());
    for (const auto& snapshot : model.snapshots) per_snapshot.push_back(log_likelihood(equal, snapshot, records));
    return finish(traveler.id, log_mean_exp(per_snapshot), records.size());
}

GridCell best_cell(std::span<const GridCell> cells) {
    if (cells.empty()) throw ConfigError("grid is empty");
    auto better = [](const GridCell& a, const GridCell& b) {
        if (a.mean_perplexity != b.mean_perplexity) return a.mean_perplexity < b.mean_perplexity;
        if (a.J * a.K != b.J * b.K) return a.J * a.K < b.J * b.K;
        return a.J < b.J;
    };
    return *std::min_element(cells.begin(), cells.end(), better);
}

GridResult grid_search(const Corpus& train_corpus, const Corpus& validation, std::span<const std::size_t> J_values,
                       std::span<const std::size_t> K_values, const TrainConfig& base, const Priors& priors,
                       const HeldoutOptions& options, std::size_t threads, const GridProgress& progress) {
    if (J_values.empty() || K_values.empty()) throw ConfigError("grid lists must be non-empty");
    if (validation.travelers.empty()) throw DataError("validation corpus has no travelers");

    std::vector<GridCell> cells;
    for (auto J : J_values)
        for (auto K : K_values) cells.push_back({J, K, 0.0});

    parallel_for(cells.size(), threads, [&](std::size_t c) {
        GridCell& cell = cells[c];
        try {
            TrainConfig config = base;
            config.J = cell.J;
            config.K = cell.K;
            const auto model = train(train_corpus, config, priors);
            double sum = 0;
            for (const auto& traveler : validation.travelers)
                sum += heldout_perplexity(model, traveler, options).perplexity;
            cell.mean_perplexity = sum / static_cast<double>(validation.travelers.size());
        } catch (const Error& e) {
            throw Error(e.category(), "grid cell (J=" + std::to_string(cell.J) + ", K=" + std::to_string(cell.K) +
                                          "): " + e.what());
        }
        if (progress) progress(cell);
    });
    return {cells, best_cell(cells)};
}

}  // namespace stlda
