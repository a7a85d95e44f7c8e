#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stlda/corpus.hpp"

namespace stlda {

/// Symmetric Dirichlet concentrations. gamma (spatial) is not given a value
/// in the original model description; 0.01 mirrors alpha and beta.
struct Priors {
    double alpha = 0.01;  // traveler topic-pair distribution
    double beta = 0.01;   // temporal topic-word distribution
    double gamma = 0.01;  // spatial topic-word distribution

    void validate() const;
    bool operator==(const Priors&) const = default;
};

struct Dims {
    std::size_t T = kHoursPerDay;  // temporal words
    std::size_t S = 0;             // spatial words (detectors)
    std::size_t J = 0;             // temporal topics
    std::size_t K = 0;             // spatial topics
    std::size_t U = 0;             // travelers

    std::size_t pairs() const noexcept { return J * K; }
    void validate() const;
    bool operator==(const Dims&) const = default;
};

using Count = std::int64_t;

/// Collapsed-Gibbs sufficient statistics plus the per-record topic-pair
/// assignments they are tallied from. A topic pair (j, k) is stored flattened
/// as j * K + k.
struct CountState {
    Dims dims;
    std::vector<Count> temporal;         // T x J, [t * J + j]
    std::vector<Count> spatial;          // S x K, [s * K + k]
    std::vector<Count> traveler;         // U x JK, [u * JK + j * K + k]
    std::vector<Count> temporal_totals;  // J
    std::vector<Count> spatial_totals;   // K
    std::vector<Count> traveler_totals;  // U, equals N_u
    std::vector<std::uint32_t> assignments;  // one per record, corpus order

    explicit CountState(const Dims& d = {});

    /// Tallies counts for `corpus` under the given assignments.
    static CountState tally(const Dims& dims, const Corpus& corpus, std::vector<std::uint32_t> assignments);

    void add(std::size_t u, WordPair w, std::uint32_t pair) { adjust(u, w, pair, +1); }
    void remove(std::size_t u, WordPair w, std::uint32_t pair) { adjust(u, w, pair, -1); }

    /// True when every count equals the tally implied by `assignments`.
    bool consistent_with(const Corpus& corpus) const;

    bool operator==(const CountState&) const = default;

private:
    void adjust(std::size_t u, WordPair w, std::uint32_t pair, Count delta) {
        const std::size_t j = pair / dims.K, k = pair % dims.K;
        temporal[w.t * dims.J + j] += delta;
        spatial[w.s * dims.K + k] += delta;
        traveler[u * dims.pairs() + pair] += delta;
        temporal_totals[j] += delta;
        spatial_totals[k] += delta;
        traveler_totals[u] += delta;
    }
};

/// Point estimates of theta (U x J x K), psi (T x J) and phi (S x K).
struct ParameterSnapshot {
    Dims dims;
    std::vector<double> theta;
    std::vector<double> psi;
    std::vector<double> phi;

    double theta_at(std::size_t u, std::size_t j, std::size_t k) const { return theta[(u * dims.J + j) * dims.K + k]; }
    std::span<const double> theta_of(std::size_t u) const {
        return std::span<const double>(theta).subspan(u * dims.pairs(), dims.pairs());
    }
    double psi_at(std::size_t t, std::size_t j) const { return psi[t * dims.J + j]; }
    double phi_at(std::size_t s, std::size_t k) const { return phi[s * dims.K + k]; }

    bool operator==(const ParameterSnapshot&) const = default;
};

ParameterSnapshot estimate_parameters(const CountState& counts, const Priors& priors);

enum class ChainMode : std::uint8_t {
    /// M snapshots thinned from one chain.
    Single = 0,
    /// M independent chains, one snapshot each.
    Multi = 1,
};

struct TrainConfig {
    std::size_t J = 10;
    std::size_t K = 25;
    std::size_t burn_in = 500;
    std::size_t thin = 20;
    std::size_t samples = 10;  // M
    std::uint64_t seed = 1;
    ChainMode chain_mode = ChainMode::Single;
    /// Rebuild counts from assignments after every sweep and compare.
    bool check_consistency = false;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct TrainedModel {
    Dims dims;
    Priors priors;
    TrainConfig config;
    Vocab vocab;
    std::vector<std::string> traveler_ids;
    std::vector<ParameterSnapshot> snapshots;
    CountState final_counts;
    /// Collapsed log p(w, z) after each sweep of the first chain.
    std::vector<double> log_likelihood;
    /// Free-form run description (the CLI stores its configuration here).
    std::string provenance;

    std::optional<std::size_t> traveler_index(const std::string& id) const;
    /// Parameters estimated from final_counts.
    ParameterSnapshot final_estimate() const { return estimate_parameters(final_counts, priors); }

    bool operator==(const TrainedModel&) const = default;
};

inline constexpr std::uint32_t kModelVersion = 1;

std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::string_view bytes);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

/// Delimited T x J table, one row per hour.
void export_temporal_factors(std::ostream& out, const ParameterSnapshot& snapshot, char delimiter = ',');

struct Coordinates {
    double x = 0;
    double y = 0;
};

/// Delimited S x K table, one row per detector. When coordinates are supplied
/// for a detector label they are joined as x/y columns.
void export_spatial_factors(std::ostream& out, const ParameterSnapshot& snapshot, const Vocab& vocab,
                            const std::unordered_map<std::string, Coordinates>* coordinates = nullptr,
                            char delimiter = ',');

}  // namespace stlda
