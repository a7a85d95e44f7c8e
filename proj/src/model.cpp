#include "stlda/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

namespace stlda {

namespace {

std::string shortest(double v) {
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    return {buf, end};
}

}  // namespace

void Priors::validate() const {
    if (!(alpha > 0) || !(beta > 0) || !(gamma > 0) || !std::isfinite(alpha) || !std::isfinite(beta) ||
        !std::isfinite(gamma))
        throw ConfigError("Dirichlet priors must be finite and strictly positive");
}

void Dims::validate() const {
    if (T == 0 || S == 0 || J == 0 || K == 0 || U == 0)
        throw ConfigError("model dimensions T, S, J, K and U must all be at least 1");
}

void TrainConfig::validate() const {
    if (J == 0 || K == 0) throw ConfigError("topic counts J and K must be at least 1");
    if (thin == 0) throw ConfigError("thinning interval must be at least 1");
    if (samples == 0) throw ConfigError("snapshot count M must be at least 1");
}

CountState::CountState(const Dims& d)
    : dims(d),
      temporal(d.T * d.J, 0),
      spatial(d.S * d.K, 0),
      traveler(d.U * d.pairs(), 0),
      temporal_totals(d.J, 0),
      spatial_totals(d.K, 0),
      traveler_totals(d.U, 0) {}

CountState CountState::tally(const Dims& dims, const Corpus& corpus, std::vector<std::uint32_t> assignments) {
    if (assignments.size() != corpus.record_count())
        throw DataError("assignment count does not match corpus record count");
    CountState state(dims);
    std::size_t i = 0;
    for (std::size_t u = 0; u < corpus.travelers.size(); ++u)
        for (const auto& r : corpus.travelers[u].records) state.add(u, r.words(), assignments[i++]);
    state.assignments = std::move(assignments);
    return state;
}

bool CountState::consistent_with(const Corpus& corpus) const {
    return tally(dims, corpus, assignments) == *this;
}

ParameterSnapshot estimate_parameters(const CountState& counts, const Priors& priors) {
    const Dims& d = counts.dims;
    ParameterSnapshot p;
    p.dims = d;
    p.theta.resize(d.U * d.pairs());
    p.psi.resize(d.T * d.J);
    p.phi.resize(d.S * d.K);
    const double jk_alpha = static_cast<double>(d.pairs()) * priors.alpha;
    for (std::size_t u = 0; u < d.U; ++u) {
        const double denom = static_cast<double>(counts.traveler_totals[u]) + jk_alpha;
        for (std::size_t z = 0; z < d.pairs(); ++z)
            p.theta[u * d.pairs() + z] = (static_cast<double>(counts.traveler[u * d.pairs() + z]) + priors.alpha) / denom;
    }
    for (std::size_t j = 0; j < d.J; ++j) {
        const double denom = static_cast<double>(counts.temporal_totals[j]) + static_cast<double>(d.T) * priors.beta;
        for (std::size_t t = 0; t < d.T; ++t)
            p.psi[t * d.J + j] = (static_cast<double>(counts.temporal[t * d.J + j]) + priors.beta) / denom;
    }
    for (std::size_t k = 0; k < d.K; ++k) {
        const double denom = static_cast<double>(counts.spatial_totals[k]) + static_cast<double>(d.S) * priors.gamma;
        for (std::size_t s = 0; s < d.S; ++s)
            p.phi[s * d.K + k] = (static_cast<double>(counts.spatial[s * d.K + k]) + priors.gamma) / denom;
    }
    return p;
}

std::optional<std::size_t> TrainedModel::traveler_index(const std::string& id) const {
    const auto it = std::find(traveler_ids.begin(), traveler_ids.end(), id);
    if (it == traveler_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - traveler_ids.begin());
}

void export_temporal_factors(std::ostream& out, const ParameterSnapshot& snapshot, char delimiter) {
    const auto& d = snapshot.dims;
    out << "hour";
    for (std::size_t j = 0; j < d.J; ++j) out << delimiter << "psi_" << j;
    out << '\n';
    out.precision(17);
    for (std::size_t t = 0; t < d.T; ++t) {
        out << t;
        for (std::size_t j = 0; j < d.J; ++j) out << delimiter << snapshot.psi_at(t, j);
        out << '\n';
    }
}

void export_spatial_factors(std::ostream& out, const ParameterSnapshot& snapshot, const Vocab& vocab,
                            const std::unordered_map<std::string, Coordinates>* coordinates, char delimiter) {
    const auto& d = snapshot.dims;
    out << "detector";
    if (coordinates) out << delimiter << "x" << delimiter << "y";
    for (std::size_t k = 0; k < d.K; ++k) out << delimiter << "phi_" << k;
    out << '\n';
    out.precision(17);
    for (std::size_t s = 0; s < d.S; ++s) {
        const auto& label = vocab.label(static_cast<std::uint32_t>(s));
        out << label;
        if (coordinates) {
            const auto it = coordinates->find(label);
            if (it != coordinates->end())
                out << delimiter << shortest(it->second.x) << delimiter << shortest(it->second.y);
            else
                out << delimiter << delimiter;
        }
        for (std::size_t k = 0; k < d.K; ++k) out << delimiter << snapshot.phi_at(s, k);
        out << '\n';
    }
}

}  // namespace stlda
