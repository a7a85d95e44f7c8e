// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stlda/anomaly.hpp"
#include "stlda/evaluate.hpp"
#include "stlda/rng.hpp"
#include "stlda/sampler.hpp"
#include "stlda/similarity.hpp"
#include "stlda/synth.hpp"

using namespace stlda;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kSeeds = 10;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double peak_rss_mb() {
    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    return static_cast<double>(usage.ru_maxrss) / 1024.0;  // Linux reports KiB
}

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SynthConfig planted_family(std::uint64_t seed) {
    SynthConfig sc;  // T=24, S=50, J*=3, K*=4, 200 travelers, ~200 records, concentrations 0.1
    sc.seed = seed;
    return sc;
}

TrainConfig defaults(std::size_t J, std::size_t K, std::uint64_t seed) {
    TrainConfig c;  // burn_in 500, thin 20, M 10
    c.J = J;
    c.K = K;
    c.seed = seed;
    return c;
}

Timestamp boundary_of(const SynthConfig& sc) { return sc.start + std::chrono::days{21}; }

/// Area under the ROC curve of `score` for separating flagged travelers.
double roc_auc(const std::vector<double>& score, const std::vector<bool>& flag) {
    double pairs = 0, wins = 0;
    for (std::size_t i = 0; i < score.size(); ++i) {
        if (!flag[i]) continue;
        for (std::size_t j = 0; j < score.size(); ++j) {
            if (flag[j]) continue;
            pairs += 1;
            wins += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
        }
    }
    return wins / pairs;
}

Outcome factor_recovery() {
    int good = 0;
    double slowest = 0, worst_psi = 0, worst_phi = 0;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        const auto synthetic = generate(planted_family(static_cast<std::uint64_t>(seed)));
        const auto start = Clock::now();
        const auto model = train(synthetic.corpus, defaults(3, 4, static_cast<std::uint64_t>(seed)), Priors{});
        slowest = std::max(slowest, seconds_since(start));
        const auto a = match_factors(model.final_estimate(), synthetic.truth);
        worst_psi = std::max(worst_psi, a.mean_temporal_tv());
        worst_phi = std::max(worst_phi, a.mean_spatial_tv());
        if (a.mean_temporal_tv() <= 0.10 && a.mean_spatial_tv() <= 0.10) ++good;
    }
    return {good >= 8 && slowest <= 120.0,
            fmt("%d/10 seeds with mean TV <= 0.10 (worst psi %.4f, phi %.4f); slowest run %.1fs of 120s", good,
                worst_psi, worst_phi, slowest)};
}

Outcome grid_sanity() {
    int good = 0;
    double worst = 0;
    const std::vector<std::size_t> Js{2, 3, 4}, Ks{3, 4, 5};
    for (int seed = 1; seed <= kSeeds; ++seed) {
        const auto sc = planted_family(static_cast<std::uint64_t>(seed));
        const auto synthetic = generate(sc);
        const auto split = split_corpus(synthetic.corpus, 200.0 / 2200.0, boundary_of(sc), static_cast<std::uint64_t>(seed));
        const HeldoutOptions options{ThetaMode::Inferred, kDefaultHeldoutIterations, static_cast<std::uint64_t>(seed)};
        const auto grid = grid_search(split.train, split.validation, Js, Ks, defaults(0, 0, static_cast<std::uint64_t>(seed)),
                                      Priors{}, options);
        double planted = 0;
        for (const auto& c : grid.cells)
            if (c.J == 3 && c.K == 4) planted = c.mean_perplexity;
        const double ratio = planted / grid.best.mean_perplexity;
        worst = std::max(worst, ratio);
        if (ratio <= 1.02) ++good;
    }
    return {good >= 8, fmt("%d/10 seeds with planted-cell perplexity within 2%% of the grid minimum (worst ratio %.4f)",
                           good, worst)};
}

Outcome anomaly_power() {
    double auc_swap = 0, auc_uniform = 0;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        const auto sc = planted_family(static_cast<std::uint64_t>(seed));
        const auto synthetic = generate(sc);
        Corpus past, future;
        past.vocab = future.vocab = synthetic.corpus.vocab;
        for (const auto& tr : synthetic.corpus.travelers) {
            Traveler p{tr.id, {}}, f{tr.id, {}};
            for (const auto& r : tr.records) (r.timestamp < boundary_of(sc) ? p : f).records.push_back(r);
            if (p.records.empty()) continue;
            past.travelers.push_back(std::move(p));
            if (!f.records.empty()) future.travelers.push_back(std::move(f));
        }
        const auto model = train(past, defaults(3, 4, static_cast<std::uint64_t>(seed)), Priors{});
        for (auto mode : {AnomalyMode::Swap, AnomalyMode::Uniform}) {
            const auto planted = plant_anomalies(future, 0.05, mode, derive_seed(static_cast<std::uint64_t>(seed), 0xa11));
            std::map<std::string, bool> flagged;
            for (std::size_t i = 0; i < planted.corpus.travelers.size(); ++i)
                flagged[planted.corpus.travelers[i].id] = planted.flags[i];
            const auto report = rank_travelers(model, planted.corpus);
            std::vector<double> score;
            std::vector<bool> flag;
            for (const auto& row : report.rows) {
                if (!row.perplexity) continue;
                score.push_back(*row.perplexity);
                flag.push_back(flagged.at(row.traveler_id));
            }
            (mode == AnomalyMode::Swap ? auc_swap : auc_uniform) += roc_auc(score, flag) / kSeeds;
        }
    }
    return {auc_uniform >= 0.90 && auc_swap >= 0.80,
            fmt("mean ROC-AUC uniform %.4f (>= 0.90), swap %.4f (>= 0.80) over 10 seeds", auc_uniform, auc_swap)};
}

Outcome exact_arithmetic() {
    std::vector<std::string> failed;

    double worst_norm = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng(seed);
        const std::size_t S = 1 + rng.below(20);
        Corpus corpus;
        for (std::size_t s = 0; s < S; ++s) corpus.vocab.add(std::to_string(s));
        for (std::size_t u = 0, n = 1 + rng.below(5); u < n; ++u) {
            Traveler tr{std::to_string(u), {}};
            for (std::size_t i = 0, n = 1 + rng.below(50); i < n; ++i)
                tr.records.push_back({static_cast<std::uint32_t>(rng.below(24)), static_cast<std::uint32_t>(rng.below(S)), {}});
            corpus.travelers.push_back(std::move(tr));
        }
        const auto dims = dims_for(corpus, 1 + rng.below(12), 1 + rng.below(30));
        auto state = initialize_state(corpus, dims, rng);
        sweep(state, corpus, Priors{}, rng);
        // The first record of traveler 0 owns assignment 0.
        const auto w = corpus.travelers[0].records[0].words();
        state.remove(0, w, state.assignments[0]);
        const auto p = gibbs_conditional(state, w, 0, Priors{});
        double sum = 0;
        for (double v : p) sum += v;
        worst_norm = std::max(worst_norm, std::abs(sum - 1.0));
    }
    if (worst_norm > 1e-12) failed.push_back(fmt("conditional normalization off by %.3g", worst_norm));

    {
        Corpus c;
        c.vocab.add("0|0");
        c.travelers.push_back({"u", std::vector<Record>(4, Record{0, 0, {}})});
        const auto counts = CountState::tally(Dims{kHoursPerDay, 1, 2, 2, 1}, c, {0, 0, 0, 1});
        const double theta = estimate_parameters(counts, Priors{}).theta_at(0, 0, 0);
        if (std::abs(theta - 3.01 / 4.04) > 1e-15 || std::abs(theta - 0.745) > 5e-4)
            failed.push_back(fmt("theta estimate %.6f", theta));
    }

    const double j = jsd(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5});
    if (std::abs(j - 0.2158) > 1e-4) failed.push_back(fmt("JSD %.6f", j));

    Rng rng(2024);
    int violations = 0;
    for (int i = 0; i < 10000; ++i) {
        const double a = i % 2 ? 0.1 : 1.0;
        const auto x = sample_dirichlet(12, a, rng), y = sample_dirichlet(12, a, rng), z = sample_dirichlet(12, a, rng);
        if (std::sqrt(jsd(x, z)) > std::sqrt(jsd(x, y)) + std::sqrt(jsd(y, z)) + 1e-12) ++violations;
    }
    if (violations) failed.push_back(fmt("%d triangle violations", violations));

    std::vector<std::vector<double>> thetas;
    for (int i = 0; i < 400; ++i) thetas.push_back(sample_dirichlet(12, 0.2, rng));
    const auto tree = average_linkage(distance_matrix(thetas));
    for (std::size_t m = 1; m < tree.merges.size(); ++m)
        if (tree.merges[m].height < tree.merges[m - 1].height - 1e-12) {
            failed.push_back("UPGMA heights decrease");
            break;
        }

    {
        TrainedModel m;
        m.dims = {kHoursPerDay, 10, 1, 1, 1};
        for (int s = 0; s < 10; ++s) m.vocab.add(std::to_string(s));
        m.traveler_ids = {"u"};
        m.snapshots = {ParameterSnapshot{m.dims, {1.0}, std::vector<double>(24, 1.0 / 24), std::vector<double>(10, 0.1)}};
        m.final_counts = CountState(m.dims);
        Traveler tr{"v", {}};
        for (int i = 0; i < 37; ++i)
            tr.records.push_back({static_cast<std::uint32_t>(rng.below(24)), static_cast<std::uint32_t>(rng.below(10)), {}});
        const double heldout = heldout_perplexity(m, tr).perplexity;
        const double predictive = predictive_perplexity(m, 0, tr.word_pairs()).perplexity;
        if (std::abs(heldout - 240) > 1e-9 || std::abs(predictive - 240) > 1e-9)
            failed.push_back(fmt("uniform perplexity %.12f / %.12f", heldout, predictive));
    }

    std::string detail = failed.empty() ? fmt("normalization within %.2g, theta 3.01/4.04, JSD %.6f, 10^4 triangles, "
                                              "%zu monotone merges, perplexity 240",
                                              worst_norm, j, tree.merges.size())
                                        : "";
    for (const auto& f : failed) detail += (detail.empty() ? "" : "; ") + f;
    return {failed.empty(), detail};
}

Outcome determinism() {
    auto sc = planted_family(5);
    sc.dims.U = 60;
    const auto synthetic = generate(sc);
    auto cfg = defaults(3, 4, 11);
    cfg.burn_in = 50;
    cfg.thin = 5;
    cfg.samples = 4;
    const auto a = serialize_model(train(synthetic.corpus, cfg, Priors{}));
    const auto b = serialize_model(train(synthetic.corpus, cfg, Priors{}));

    auto debug = cfg;
    debug.burn_in = 90;
    debug.thin = 10;
    debug.samples = 1;
    debug.check_consistency = true;
    std::size_t sweeps = 0;
    const auto checked = train(synthetic.corpus, debug, Priors{}, [&](const TrainProgress&) { ++sweeps; });

    const auto path = (std::filesystem::temp_directory_path() / "stlda-acceptance.stlda").string();
    save_model(checked, path);
    const bool round_trip = load_model(path) == checked;
    std::filesystem::remove(path);

    const bool identical = a == b;
    return {identical && sweeps == 100 && round_trip,
            fmt("model bytes %s (%zu bytes); %zu consistency-checked sweeps; save/load %s",
                identical ? "identical" : "differ", a.size(), sweeps, round_trip ? "equal" : "differ")};
}

Outcome scale() {
    SynthConfig sc;
    sc.dims = {kHoursPerDay, 200, 5, 8, 500};
    sc.records_mean = 220;
    auto corpus = generate(sc).corpus;
    // Trim to exactly 10^5 records.
    std::size_t budget = 100000;
    for (auto& tr : corpus.travelers) {
        tr.records.resize(std::min(tr.records.size(), budget));
        budget -= tr.records.size();
    }
    std::erase_if(corpus.travelers, [](const Traveler& t) { return t.records.empty(); });
    auto cfg = defaults(10, 25, 1);
    cfg.burn_in = 480;
    cfg.thin = 20;
    cfg.samples = 1;
    const auto start = Clock::now();
    const auto model = train(corpus, cfg, Priors{});
    const double elapsed = seconds_since(start);
    const double rss = peak_rss_mb();
    return {corpus.record_count() == 100000 && model.log_likelihood.size() == 500 && elapsed <= 300 && rss <= 1024,
            fmt("%zu records, %zu sweeps in %.1fs (<= 300s), peak RSS %.0f MiB (<= 1024)", corpus.record_count(),
                model.log_likelihood.size(), elapsed, rss)};
}

Outcome log_domain() {
    double worst = 0;
    int cases = 0;
    for (int seed = 1; seed <= 10; ++seed) {
        auto sc = planted_family(static_cast<std::uint64_t>(seed));
        sc.dims.U = 30;
        sc.records_mean = 40;
        const auto synthetic = generate(sc);
        auto cfg = defaults(3, 4, static_cast<std::uint64_t>(seed));
        cfg.burn_in = 100;
        cfg.thin = 10;
        const auto model = train(synthetic.corpus, cfg, Priors{});
        auto heldout_cfg = sc;
        heldout_cfg.seed += 100;
        heldout_cfg.records_mean = 15;
        for (const auto& tr : generate(heldout_cfg).corpus.travelers) {
            // Linear domain: (1/M) Σ_m Π_i Σ_jk (1/JK) ψ φ.
            const auto& d = model.dims;
            double mean = 0;
            for (const auto& snap : model.snapshots) {
                double prod = 1;
                for (const auto& r : tr.records) {
                    double p = 0;
                    for (std::size_t j = 0; j < d.J; ++j)
                        for (std::size_t k = 0; k < d.K; ++k) p += snap.psi_at(r.t, j) * snap.phi_at(r.s, k);
                    prod *= p / static_cast<double>(d.pairs());
                }
                mean += prod;
            }
            mean /= static_cast<double>(model.snapshots.size());
            if (!(mean > 1e-250)) continue;
            const double linear = std::pow(mean, -1.0 / static_cast<double>(tr.records.size()));
            const double logged = heldout_perplexity(model, tr).perplexity;
            worst = std::max(worst, std::abs(logged - linear) / linear);
            ++cases;
        }
    }
    return {cases > 100 && worst <= 1e-9, fmt("%d travelers, worst relative difference %.3g (<= 1e-9)", cases, worst)};
}

}  // namespace

int main() {
    report(1, "factor recovery", factor_recovery);
    report(2, "grid-search sanity", grid_sanity);
    report(3, "anomaly detection power", anomaly_power);
    report(4, "exact arithmetic", exact_arithmetic);
    report(5, "determinism and consistency", determinism);
    report(6, "scale", scale);
    report(7, "log-domain correctness", log_domain);
    std::printf("%s: %d of 7 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
