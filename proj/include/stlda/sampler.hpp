#pragma once

// Collapsed Gibbs sampling for the two-dimensional topic model.
//
// Each record carries one joint topic pair (j, k): j indexes a temporal
// topic (a distribution over the 24 hours), k a spatial topic (a
// distribution over detectors). The full conditional for a record (t, s) of
// traveler u, with the record itself removed from all counts, is
//
//   p(j, k) ∝ (C_tj + β) / (n_j + Tβ)
//           · (C_sk + γ) / (n_k + Sγ)
//           · (C_ujk + α) / (N_u - 1 + JKα).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stlda/corpus.hpp"
#include "stlda/model.hpp"
#include "stlda/rng.hpp"

namespace stlda {

/// Normalized J x K table of the full conditional for record `w` of traveler
/// `u`. `counts` must already exclude that record.
std::vector<double> gibbs_conditional(const CountState& counts, WordPair w, std::size_t u, const Priors& priors);

Dims dims_for(const Corpus& corpus, std::size_t J, std::size_t K);

/// Assigns every record a topic pair drawn uniformly over J x K.
CountState initialize_state(const Corpus& corpus, const Dims& dims, Rng& rng);

/// Resamples every record once, travelers in order, records in order.
void sweep(CountState& state, const Corpus& corpus, const Priors& priors, Rng& rng);

/// Collapsed log p(w^t, w^s, z | α, β, γ). Used as a convergence trace.
double collapsed_log_likelihood(const CountState& state, const Priors& priors);

struct TrainProgress {
    std::size_t chain = 0;
    std::size_t sweep = 0;  // 1-based
    std::size_t total_sweeps = 0;
    double log_likelihood = 0;
};

using ProgressCallback = std::function<void(const TrainProgress&)>;

/// Runs burn_in sweeps, then keeps `samples` snapshots spaced `thin` sweeps
/// apart (single-chain mode) or one snapshot after burn_in + thin sweeps from
/// each of `samples` independent chains (multi-chain mode). Chains in
/// multi-chain mode run on up to `threads` workers.
TrainedModel train(const Corpus& corpus, const TrainConfig& config, const Priors& priors,
                   const ProgressCallback& progress = {}, std::size_t threads = 1);

struct HeldoutTheta {
    std::size_t J = 0;
    std::size_t K = 0;
    std::vector<double> theta;  // J x K, [j * K + k]
    std::vector<Count> counts;  // J x K
};

inline constexpr std::size_t kDefaultHeldoutIterations = 20;

/// Infers the topic-pair distribution of a traveler absent from training.
/// Training counts stay fixed; the held-out records' own temporal and spatial
/// counts are added on top of them while sampling. Throws
/// OutOfVocabularyError for a spatial word outside the model vocabulary.
HeldoutTheta infer_heldout_theta(const TrainedModel& model, std::span<const WordPair> records,
                                 std::size_t iterations, Rng& rng);

}  // namespace stlda
