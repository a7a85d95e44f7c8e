#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "stlda/rng.hpp"
#include "stlda/synth.hpp"

using namespace stlda;

namespace {

std::string corpus_bytes(const Corpus& c) {
    std::ostringstream out;
    save_corpus(out, c);
    return out.str();
}

/// Expected (t, s) cell masses given the planted factors and record counts.
std::vector<double> expected_cells(const PlantedModel& m) {
    const auto& d = m.dims;
    std::vector<double> mass(d.T * d.S, 0.0);
    const double total = static_cast<double>(std::accumulate(m.record_counts.begin(), m.record_counts.end(), 0.0));
    std::vector<double> weight(d.pairs(), 0.0);
    for (std::size_t u = 0; u < d.U; ++u)
        for (std::size_t z = 0; z < d.pairs(); ++z)
            weight[z] += static_cast<double>(m.record_counts[u]) / total * m.theta[u * d.pairs() + z];
    for (std::size_t z = 0; z < d.pairs(); ++z) {
        const std::size_t j = z / d.K, k = z % d.K;
        for (std::size_t t = 0; t < d.T; ++t)
            for (std::size_t s = 0; s < d.S; ++s) mass[t * d.S + s] += weight[z] * m.psi[t * d.J + j] * m.phi[s * d.K + k];
    }
    return mass;
}

std::vector<double> observed_cells(const SyntheticCorpus& g) {
    std::vector<double> counts(g.truth.dims.T * g.truth.dims.S, 0.0);
    for (const auto& tr : g.corpus.travelers)
        for (const auto& r : tr.records) counts[r.t * g.truth.dims.S + r.s] += 1;
    return counts;
}

double brute_force_assignment(const std::vector<double>& cost, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double c = 0;
        for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

PlantedModel small_planted(std::uint64_t seed) {
    SynthConfig sc;
    sc.dims = {kHoursPerDay, 20, 3, 4, 5};
    sc.seed = seed;
    return generate(sc).truth;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
    SynthConfig sc;
    sc.dims.U = 30;
    const auto a = generate(sc);
    const auto b = generate(sc);
    CHECK(corpus_bytes(a.corpus) == corpus_bytes(b.corpus));
    CHECK(a.truth.theta == b.truth.theta);
    sc.seed = 2;
    CHECK(corpus_bytes(generate(sc).corpus) != corpus_bytes(a.corpus));
}

TEST_CASE("planted factors are normalized and record counts match") {
    SynthConfig sc;
    sc.dims.U = 25;
    const auto g = generate(sc);
    const auto& d = g.truth.dims;
    for (std::size_t u = 0; u < d.U; ++u) {
        double sum = 0;
        for (std::size_t z = 0; z < d.pairs(); ++z) sum += g.truth.theta[u * d.pairs() + z];
        CHECK(std::abs(sum - 1) <= 1e-12);
        CHECK(g.corpus.travelers[u].records.size() == g.truth.record_counts[u]);
        CHECK(g.truth.record_counts[u] >= 1);
    }
    for (std::size_t j = 0; j < d.J; ++j) {
        double sum = 0;
        for (std::size_t t = 0; t < d.T; ++t) sum += g.truth.psi[t * d.J + j];
        CHECK(std::abs(sum - 1) <= 1e-12);
    }
    for (std::size_t k = 0; k < d.K; ++k) {
        double sum = 0;
        for (std::size_t s = 0; s < d.S; ++s) sum += g.truth.phi[s * d.K + k];
        CHECK(std::abs(sum - 1) <= 1e-12);
    }
    CHECK_NOTHROW(g.corpus.validate());
}

TEST_CASE("near-zero concentration with one topic pair gives identical records") {
    SynthConfig sc;
    sc.dims = {kHoursPerDay, 10, 1, 1, 5};
    sc.planted = {1e-9, 1e-9, 1e-9};
    const auto g = generate(sc);
    const auto first = g.corpus.travelers[0].records[0].words();
    for (const auto& tr : g.corpus.travelers)
        for (const auto& r : tr.records) CHECK(r.words() == first);
}

TEST_CASE("synthetic records survive the event-log round trip") {
    SynthConfig sc;
    sc.dims.U = 20;
    const auto g = generate(sc);
    const auto again = encode_corpus(decode_corpus(g.corpus));
    REQUIRE(again.travelers.size() == g.corpus.travelers.size());
    for (std::size_t u = 0; u < again.travelers.size(); ++u) {
        const auto& a = again.travelers[u].records;
        const auto& b = g.corpus.travelers[u].records;
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].t == b[i].t);
            CHECK(again.vocab.label(a[i].s) == g.corpus.vocab.label(b[i].s));
        }
    }
}

TEST_CASE("cell frequencies of a million records match the planted mixture") {
    SynthConfig sc;
    sc.dims = {kHoursPerDay, 50, 3, 4, 5000};
    sc.records_mean = 200;
    const auto g = generate(sc);
    const auto expected = expected_cells(g.truth);
    const auto observed = observed_cells(g);
    const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
    CHECK(n > 9.9e5);
    int cells = 0;
    for (std::size_t c = 0; c < expected.size(); ++c) {
        if (expected[c] <= 0.01) continue;
        ++cells;
        // Binomial z-score; a one-percent error here is about one standard
        // deviation, so the relative check runs on the larger corpus below.
        const double z = (observed[c] - n * expected[c]) / std::sqrt(n * expected[c] * (1 - expected[c]));
        CHECK(std::abs(z) < 5);
    }
    CHECK(cells > 5);
}

TEST_CASE("cell frequencies of ten million records are within one percent") {
    SynthConfig sc;
    sc.dims = {kHoursPerDay, 50, 3, 4, 5000};
    sc.records_mean = 2000;
    sc.seed = 2;
    const auto g = generate(sc);
    const auto expected = expected_cells(g.truth);
    const auto observed = observed_cells(g);
    const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
    for (std::size_t c = 0; c < expected.size(); ++c) {
        if (expected[c] <= 0.01) continue;
        CHECK(std::abs(observed[c] / n - expected[c]) <= 0.01 * expected[c]);
    }
}

TEST_CASE("dirichlet draws") {
    Rng rng(4);
    for (double a : {1e-6, 0.01, 0.1, 1.0, 10.0}) {
        const auto p = sample_dirichlet(30, a, rng);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1) <= 1e-12);
        for (double v : p) CHECK(v >= 0);
    }
    // The mean of Dir(a) is uniform.
    std::vector<double> mean(4, 0.0);
    for (int i = 0; i < 20000; ++i) {
        const auto p = sample_dirichlet(4, 0.3, rng);
        for (int j = 0; j < 4; ++j) mean[j] += p[j] / 20000;
    }
    for (double m : mean) CHECK(m == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("total variation") {
    CHECK(total_variation(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 1.0);
    CHECK(total_variation(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == 0.0);
    CHECK(total_variation(std::vector<double>{0.2, 0.8}, std::vector<double>{0.5, 0.5}) == doctest::Approx(0.3));
}

TEST_CASE("assignment matches brute force") {
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        Rng rng(seed);
        const std::size_t n = 1 + rng.below(7);
        std::vector<double> cost(n * n);
        for (auto& c : cost) c = seed % 3 == 0 ? static_cast<double>(rng.below(3)) : rng.uniform();
        const auto perm = solve_assignment(cost, n);
        std::vector<std::size_t> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) total += cost[i * n + perm[i]];
        CHECK(total == doctest::Approx(brute_force_assignment(cost, n)).epsilon(1e-12));
    }
}

TEST_CASE("matching the planted factors to themselves") {
    const auto planted = small_planted(3);
    const auto a = match_factors(planted.as_snapshot(), planted);
    CHECK(a.temporal == std::vector<std::size_t>{0, 1, 2});
    CHECK(a.spatial == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(a.mean_temporal_tv() == 0.0);
    CHECK(a.mean_spatial_tv() == 0.0);
}

TEST_CASE("swapped columns are undone") {
    const auto planted = small_planted(4);
    auto recovered = planted.as_snapshot();
    const auto& d = planted.dims;
    for (std::size_t t = 0; t < d.T; ++t) std::swap(recovered.psi[t * d.J + 0], recovered.psi[t * d.J + 2]);
    for (std::size_t s = 0; s < d.S; ++s) std::swap(recovered.phi[s * d.K + 1], recovered.phi[s * d.K + 3]);
    const auto a = match_factors(recovered, planted);
    CHECK(a.temporal == std::vector<std::size_t>{2, 1, 0});
    CHECK(a.spatial == std::vector<std::size_t>{0, 3, 2, 1});
    CHECK(a.mean_temporal_tv() == 0.0);
    CHECK(a.mean_spatial_tv() == 0.0);
}

TEST_CASE("a 90/10 blend costs a tenth of the pair's distance") {
    const auto planted = small_planted(5);
    const auto& d = planted.dims;
    auto recovered = planted.as_snapshot();
    std::vector<double> a(d.S), b(d.S), blend(d.S);
    for (std::size_t s = 0; s < d.S; ++s) {
        a[s] = planted.phi[s * d.K + 1];
        b[s] = planted.phi[s * d.K + 2];
        blend[s] = 0.9 * a[s] + 0.1 * b[s];
        recovered.phi[s * d.K + 1] = blend[s];
    }
    // Oracle: every spatial matching scored by brute force.
    std::vector<double> cost(d.K * d.K);
    for (std::size_t i = 0; i < d.K; ++i)
        for (std::size_t j = 0; j < d.K; ++j) {
            double tv = 0;
            for (std::size_t s = 0; s < d.S; ++s)
                tv += std::abs(planted.phi[s * d.K + i] - recovered.phi[s * d.K + j]);
            cost[i * d.K + j] = tv / 2;
        }
    const double oracle = brute_force_assignment(cost, d.K);

    const auto al = match_factors(recovered, planted);
    CHECK(al.spatial == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(al.spatial_tv[1] == doctest::Approx(0.1 * total_variation(a, b)).epsilon(1e-12));
    CHECK(al.spatial_tv[0] == 0.0);
    CHECK(al.spatial_tv[2] == 0.0);
    CHECK(al.spatial_tv[3] == 0.0);
    CHECK(al.mean_spatial_tv() * d.K == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("planting anomalies") {
    SynthConfig sc;
    sc.dims.U = 40;
    const auto g = generate(sc);
    const auto swap = plant_anomalies(g.corpus, 0.05, AnomalyMode::Swap, 1);
    CHECK(std::count(swap.flags.begin(), swap.flags.end(), true) == 2);
    for (std::size_t u = 0; u < 40; ++u) {
        CHECK(swap.corpus.travelers[u].id == g.corpus.travelers[u].id);
        if (!swap.flags[u]) CHECK(swap.corpus.travelers[u] == g.corpus.travelers[u]);
        else CHECK_FALSE(swap.corpus.travelers[u].records == g.corpus.travelers[u].records);
    }
    const auto again = plant_anomalies(g.corpus, 0.05, AnomalyMode::Swap, 1);
    CHECK(again.corpus == swap.corpus);
    const auto half = plant_anomalies(g.corpus, 0.5, AnomalyMode::Swap, 2);
    CHECK(std::count(half.flags.begin(), half.flags.end(), true) == 20);

    const auto uniform = plant_anomalies(g.corpus, 0.1, AnomalyMode::Uniform, 3);
    for (std::size_t u = 0; u < 40; ++u) {
        if (!uniform.flags[u]) continue;
        const auto& before = g.corpus.travelers[u].records;
        const auto& after = uniform.corpus.travelers[u].records;
        REQUIRE(after.size() == before.size());
        for (std::size_t i = 0; i < after.size(); ++i) {
            CHECK(start_of_day(after[i].timestamp) == start_of_day(before[i].timestamp));
            CHECK(static_cast<std::uint32_t>(hour_of_day(after[i].timestamp)) == after[i].t);
            CHECK(after[i].s < g.corpus.vocab.spatial_size());
        }
    }
    CHECK_THROWS_AS(plant_anomalies(g.corpus, 0.0, AnomalyMode::Swap, 1), ConfigError);
    CHECK_THROWS_AS(plant_anomalies(g.corpus, 1.0, AnomalyMode::Swap, 1), ConfigError);
}

TEST_CASE("swapping two travelers exchanges their records") {
    SynthConfig sc;
    sc.dims.U = 2;
    const auto g = generate(sc);
    const auto p = plant_anomalies(g.corpus, 0.9, AnomalyMode::Swap, 7);
    CHECK(p.flags == std::vector<bool>{true, true});
    CHECK(p.corpus.travelers[0].records == g.corpus.travelers[1].records);
    CHECK(p.corpus.travelers[1].records == g.corpus.travelers[0].records);
}

TEST_CASE("truth files round-trip") {
    SynthConfig sc;
    sc.dims.U = 8;
    const auto g = generate(sc);
    std::stringstream buf;
    save_truth(buf, g.truth, g.corpus.vocab, R"({"seed":1})");
    const auto back = load_truth(buf);
    CHECK(back.vocab == g.corpus.vocab);
    CHECK(back.model.dims == g.truth.dims);
    CHECK(back.model.theta == g.truth.theta);
    CHECK(back.model.psi == g.truth.psi);
    CHECK(back.model.phi == g.truth.phi);
    CHECK(back.model.record_counts == g.truth.record_counts);

    std::istringstream junk("{\"format\": \"other\"}");
    CHECK_THROWS_AS(load_truth(junk), ParseError);
}
