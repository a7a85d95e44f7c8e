#include "stlda/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "stlda/parallel.hpp"

namespace stlda {

PerplexityResult predictive_perplexity(const TrainedModel& model, std::size_t u, std::span<const WordPair> future) {
    if (u >= model.dims.U) throw DataError("traveler index " + std::to_string(u) + " is not in the model");
    if (future.empty())
        throw DataError("traveler '" + model.traveler_ids[u] + "' has no future records to score");
    if (model.snapshots.empty()) throw DataError("model has no parameter snapshots");
    for (const auto& w : future) {
        if (w.s >= model.dims.S) throw OutOfVocabularyError("spatial word #" + std::to_string(w.s));
        if (w.t >= model.dims.T) throw DataError("temporal word " + std::to_string(w.t) + " out of range");
    }
    std::vector<double> per_snapshot;
    per_snapshot.reserve(model.snapshots.size());
    for (const auto& snapshot : model.snapshots)
        per_snapshot.push_back(log_likelihood(snapshot.theta_of(u), snapshot, future));
    const double ll = log_mean_exp(per_snapshot);
    return {model.traveler_ids[u], std::exp(-ll / static_cast<double>(future.size())), future.size(), ll};
}

PerplexityResult predictive_perplexity(const TrainedModel& model, const Traveler& future) {
    const auto u = model.traveler_index(future.id);
    if (!u) throw DataError("traveler '" + future.id + "' is not in the model");
    return predictive_perplexity(model, *u, future.word_pairs());
}

double quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

AnomalyReport rank_travelers(const TrainedModel& model, const Corpus& future, std::size_t threads) {
    std::unordered_map<std::string, std::size_t> future_index;
    for (std::size_t i = 0; i < future.travelers.size(); ++i) future_index.emplace(future.travelers[i].id, i);

    std::vector<AnomalyRow> rows(model.dims.U);
    parallel_for(model.dims.U, threads, [&](std::size_t u) {
        AnomalyRow& row = rows[u];
        row.traveler_id = model.traveler_ids[u];
        const auto it = future_index.find(row.traveler_id);
        if (it == future_index.end()) {
            row.note = "no future records";
            return;
        }
        const auto& traveler = future.travelers[it->second];
        row.n_future = traveler.records.size();
        if (traveler.records.empty()) {
            row.note = "no future records";
            return;
        }
        for (const auto& r : traveler.records) {
            if (r.s < model.dims.S) continue;
            const auto label = r.s < future.vocab.spatial_size() ? future.vocab.label(r.s) : "#" + std::to_string(r.s);
            row.note = "detector '" + label + "' is not in the model vocabulary";
            return;
        }
        try {
            row.perplexity = predictive_perplexity(model, u, traveler.word_pairs()).perplexity;
        } catch (const Error& e) {
            row.note = e.what();
        }
    });
    for (const auto& tr : future.travelers) {
        if (!model.traveler_index(tr.id))
            rows.push_back({tr.id, std::nullopt, tr.records.size(), std::nullopt, std::nullopt, "traveler not in model"});
    }

    std::stable_sort(rows.begin(), rows.end(), [](const AnomalyRow& a, const AnomalyRow& b) {
        if (a.perplexity.has_value() != b.perplexity.has_value()) return a.perplexity.has_value();
        if (a.perplexity && *a.perplexity != *b.perplexity) return *a.perplexity > *b.perplexity;
        return a.traveler_id < b.traveler_id;
    });

    AnomalyReport report;
    std::vector<double> scores;
    for (const auto& row : rows)
        if (row.perplexity) scores.push_back(*row.perplexity);
    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].perplexity) continue;
        rows[i].rank = i + 1;
        const auto at_or_below = std::upper_bound(scores.begin(), scores.end(), *rows[i].perplexity) - scores.begin();
        rows[i].percentile = 100.0 * static_cast<double>(at_or_below) / static_cast<double>(n);
    }
    report.summary.scored = n;
    report.summary.unscored = rows.size() - n;
    if (n > 0) {
        report.summary.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
        report.summary.min = scores.front();
        report.summary.max = scores.back();
        report.summary.p50 = quantile(scores, 0.50);
        report.summary.p90 = quantile(scores, 0.90);
        report.summary.p95 = quantile(scores, 0.95);
        report.summary.p99 = quantile(scores, 0.99);
    }
    report.rows = std::move(rows);
    return report;
}

void write_report(std::ostream& out, const AnomalyReport& report, char delimiter) {
    const char d = delimiter;
    out << "rank" << d << "traveler_id" << d << "predictive_perplexity" << d << "percentile" << d << "n_future" << d
        << "note" << '\n';
    out << std::setprecision(17);
    for (const auto& row : report.rows) {
        if (row.rank) out << *row.rank;
        out << d << row.traveler_id << d;
        if (row.perplexity) out << *row.perplexity;
        out << d;
        if (row.percentile) out << *row.percentile;
        out << d << row.n_future << d << row.note << '\n';
    }
}

void write_top_summary(std::ostream& out, const AnomalyReport& report, std::size_t top_n) {
    const auto& s = report.summary;
    out << std::setprecision(6);
    out << "scored travelers: " << s.scored << " (unscored: " << s.unscored << ")\n";
    if (s.scored == 0) return;
    out << "predictive perplexity: mean " << s.mean << ", min " << s.min << ", max " << s.max << '\n';
    out << "percentiles: p50 " << s.p50 << ", p90 " << s.p90 << ", p95 " << s.p95 << ", p99 " << s.p99 << '\n';
    out << "most anomalous:\n";
    for (std::size_t i = 0; i < std::min(top_n, s.scored); ++i) {
        const auto& row = report.rows[i];
        out << "  " << std::setw(4) << *row.rank << "  " << row.traveler_id << "  " << *row.perplexity << "  ("
            << row.n_future << " records)\n";
    }
    out << "most regular:\n";
    for (std::size_t i = 0; i < std::min(top_n, s.scored); ++i) {
        const auto& row = report.rows[s.scored - 1 - i];
        out << "  " << std::setw(4) << *row.rank << "  " << row.traveler_id << "  " << *row.perplexity << "  ("
            << row.n_future << " records)\n";
    }
}

}  // namespace stlda
