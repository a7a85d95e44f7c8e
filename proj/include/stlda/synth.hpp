#pragma once

// Synthetic corpora drawn from the model's own generative process, plus the
// tools that compare learned factors against the planted ones.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "stlda/corpus.hpp"
#include "stlda/model.hpp"
#include "stlda/rng.hpp"

namespace stlda {

struct SynthConfig {
    Dims dims{kHoursPerDay, 50, 3, 4, 200};
    /// Concentrations for drawing the planted θ*, ψ*, φ*. Kept sparse so the
    /// factors are well separated; independent of the inference priors.
    Priors planted{0.1, 0.1, 0.1};
    /// Each traveler's record count is Poisson(mean), at least 1.
    double records_mean = 200;
    /// Records are spread uniformly over this many days from `start`.
    std::size_t days = 28;
    Timestamp start = std::chrono::sys_days{std::chrono::year{2017} / 3 / 1};
    std::uint64_t seed = 1;
};

struct PlantedModel {
    Dims dims;
    Priors priors;
    std::vector<double> theta;  // U x J x K
    std::vector<double> psi;    // T x J
    std::vector<double> phi;    // S x K
    std::vector<std::size_t> record_counts;

    ParameterSnapshot as_snapshot() const { return {dims, theta, psi, phi}; }
};

struct SyntheticCorpus {
    Corpus corpus;
    PlantedModel truth;
};

/// Samples θ*_u ~ Dir_{JK}, ψ*_j ~ Dir_T, φ*_k ~ Dir_S, then for every record
/// a pair (j, k) ~ θ*_u, an hour t ~ ψ*_j and a detector s ~ φ*_k.
/// Detector s is labelled "<10000 + s>|0"; traveler u is "traveler-<u>".
SyntheticCorpus generate(const SynthConfig& config);

/// Dirichlet draw with symmetric concentration `a`, robust for tiny `a`.
std::vector<double> sample_dirichlet(std::size_t n, double a, Rng& rng);

double total_variation(std::span<const double> p, std::span<const double> q);

/// Minimum-cost perfect matching on a square cost matrix (row-major);
/// returns the column assigned to each row.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

struct Alignment {
    /// temporal[j] = recovered topic matched to planted temporal topic j.
    std::vector<std::size_t> temporal;
    std::vector<std::size_t> spatial;
    std::vector<double> temporal_tv;
    std::vector<double> spatial_tv;

    double mean_temporal_tv() const;
    double mean_spatial_tv() const;
};

/// Label-switching alignment: optimal assignment of recovered to planted
/// columns under total-variation cost, separately for ψ and φ.
Alignment match_factors(const ParameterSnapshot& recovered, const PlantedModel& planted);

enum class AnomalyMode { Swap, Uniform };

struct PlantedAnomalies {
    Corpus corpus;
    std::vector<bool> flags;  // aligned with corpus.travelers
};

/// Perturbs round(fraction * n) randomly chosen travelers' records. Swap mode
/// gives each flagged traveler the original records of another random
/// traveler; uniform mode redraws every record uniformly over T x S (the
/// timestamp keeps its day and moves to the new hour).
PlantedAnomalies plant_anomalies(const Corpus& future, double fraction, AnomalyMode mode, std::uint64_t seed);

/// Planted truth as JSON (dims, priors, labels, factors, record counts).
void save_truth(std::ostream& out, const PlantedModel& truth, const Vocab& vocab, const std::string& provenance = {});

struct LoadedTruth {
    PlantedModel model;
    Vocab vocab;
};
LoadedTruth load_truth(std::istream& in);

}  // namespace stlda
