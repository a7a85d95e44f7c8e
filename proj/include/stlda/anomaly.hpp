#pragma once

// Anomaly scoring: how poorly a traveler's own learned mixture predicts the
// records that came after the training window.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlda/corpus.hpp"
#include "stlda/evaluate.hpp"
#include "stlda/model.hpp"

namespace stlda {

/// Predictive perplexity of `future` for training traveler `u`, averaging the
/// record likelihood over the model's M snapshots in the log domain.
PerplexityResult predictive_perplexity(const TrainedModel& model, std::size_t u, std::span<const WordPair> future);

/// Same, looked up by traveler id. Throws DataError if the id is unknown.
PerplexityResult predictive_perplexity(const TrainedModel& model, const Traveler& future);

struct AnomalyRow {
    std::string traveler_id;
    std::optional<double> perplexity;  // empty: nothing to score
    std::size_t n_future = 0;
    std::optional<std::size_t> rank;   // 1 = most anomalous
    std::optional<double> percentile;  // share of scored travelers at or below, in percent
    std::string note;                  // why a row has no score
};

struct AnomalySummary {
    std::size_t scored = 0;
    std::size_t unscored = 0;
    double mean = 0;
    double min = 0;
    double max = 0;
    double p50 = 0;
    double p90 = 0;
    double p95 = 0;
    double p99 = 0;
};

struct AnomalyReport {
    /// Scored rows by rank, then unscored rows by traveler id.
    std::vector<AnomalyRow> rows;
    AnomalySummary summary;
};

/// Scores every model traveler against its records in `future`. Travelers
/// without future records get a null score; future travelers unknown to the
/// model and per-traveler failures appear as flagged rows.
AnomalyReport rank_travelers(const TrainedModel& model, const Corpus& future, std::size_t threads = 1);

/// Linear-interpolation quantile (q in [0, 1]) of an ascending sequence.
double quantile(std::span<const double> sorted, double q);

void write_report(std::ostream& out, const AnomalyReport& report, char delimiter = ',');
void write_top_summary(std::ostream& out, const AnomalyReport& report, std::size_t top_n);

}  // namespace stlda
