#pragma once

// Held-out perplexity and (J, K) model selection.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stlda/corpus.hpp"
#include "stlda/model.hpp"

namespace stlda {

struct PerplexityResult {
    std::string traveler_id;
    double perplexity = 0;
    std::size_t n_records = 0;
    double log_likelihood = 0;  // natural log
};

/// Σ_j Σ_k θ[j,k] · ψ[t,j] · φ[s,k] for one record, where `theta` is a J x K
/// weight table ([j * K + k]).
double record_likelihood(std::span<const double> theta, const ParameterSnapshot& snapshot, WordPair w);

/// log((1/n) Σ exp(x_i)), stable for large negative x_i.
double log_mean_exp(std::span<const double> values);

/// Σ_i log record_likelihood over `records` under one snapshot.
double log_likelihood(std::span<const double> theta, const ParameterSnapshot& snapshot,
                      std::span<const WordPair> records);

enum class ThetaMode {
    /// θ fixed at 1/(JK) for every cell, averaged over all M snapshots.
    EqualWeight,
    /// θ̂ inferred by held-out Gibbs sampling against the final training
    /// counts, paired with ψ and φ estimated from those same counts.
    Inferred,
};

struct HeldoutOptions {
    ThetaMode mode = ThetaMode::EqualWeight;
    std::size_t iterations = 20;  // Inferred mode only
    std::uint64_t seed = 1;       // Inferred mode only
};

/// Perplexity of a traveler who was not part of training. Throws
/// OutOfVocabularyError for a spatial word outside the model vocabulary.
PerplexityResult heldout_perplexity(const TrainedModel& model, const Traveler& traveler,
                                    const HeldoutOptions& options = {});

struct GridCell {
    std::size_t J = 0;
    std::size_t K = 0;
    double mean_perplexity = 0;
};

struct GridResult {
    std::vector<GridCell> cells;  // J-major order of the input lists
    GridCell best;
};

using GridProgress = std::function<void(const GridCell&)>;

/// Trains one model per (J, K) and scores it by the arithmetic mean of
/// per-traveler validation perplexities. Ties go to the smaller J·K, then the
/// smaller J. Cells run on up to `threads` workers.
GridResult grid_search(const Corpus& train_corpus, const Corpus& validation, std::span<const std::size_t> J_values,
                       std::span<const std::size_t> K_values, const TrainConfig& base, const Priors& priors,
                       const HeldoutOptions& options = {}, std::size_t threads = 1,
                       const GridProgress& progress = {});

/// Picks the best cell under the tie-break rule.
GridCell best_cell(std::span<const GridCell> cells);

}  // namespace stlda
