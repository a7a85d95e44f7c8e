#include "cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stlda/anomaly.hpp"
#include "stlda/corpus.hpp"
#include "stlda/evaluate.hpp"
#include "stlda/model.hpp"
#include "stlda/sampler.hpp"
#include "stlda/similarity.hpp"
#include "stlda/synth.hpp"

namespace stlda::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunConfig {
    std::string subcommand;
    std::string input;
    std::string output;  // file (ingest) or directory
    std::string model;
    std::string truth;
    std::string coordinates;

    std::string delimiter = ",";
    ColumnNames columns;
    bool strict = false;

    std::size_t J = 10;
    std::size_t K = 25;
    std::vector<std::size_t> grid_j{8, 10, 12, 14};
    std::vector<std::size_t> grid_k{15, 20, 25, 30};
    Priors priors;
    std::size_t burn_in = 500;
    std::size_t thin = 20;
    std::size_t samples = 10;
    std::string chains = "single";
    bool check_consistency = false;

    std::size_t heldout_iterations = kDefaultHeldoutIterations;
    std::string theta_mode = "equal";
    double validation_fraction = 200.0 / 2200.0;
    std::string boundary;

    std::size_t clusters = 12;
    double cut_height = -1;
    std::size_t sample_size = 0;
    std::size_t top = 10;

    std::size_t travelers = 200;
    std::size_t detectors = 50;
    std::size_t planted_j = 3;
    std::size_t planted_k = 4;
    Priors planted{0.1, 0.1, 0.1};
    double records_mean = 200;
    std::size_t days = 28;
    std::size_t boundary_day = 21;
    double anomaly_fraction = 0;
    std::string anomaly_mode = "swap";

    std::uint64_t seed = 1;
    std::size_t threads = 1;
    bool quiet = false;

    char delim() const { return delimiter.front(); }

    json to_json() const {
        return json{{"subcommand", subcommand},
                    {"input", input},
                    {"output", output},
                    {"model", model},
                    {"truth", truth},
                    {"coordinates", coordinates},
                    {"delimiter", delimiter},
                    {"columns",
                     {{"vehicle", columns.vehicle},
                      {"location", columns.location},
                      {"direction", columns.direction},
                      {"timestamp", columns.timestamp}}},
                    {"strict", strict},
                    {"J", J},
                    {"K", K},
                    {"grid_j", grid_j},
                    {"grid_k", grid_k},
                    {"alpha", priors.alpha},
                    {"beta", priors.beta},
                    {"gamma", priors.gamma},
                    {"burn_in", burn_in},
                    {"thin", thin},
                    {"samples", samples},
                    {"chains", chains},
                    {"check_consistency", check_consistency},
                    {"heldout_iterations", heldout_iterations},
                    {"theta_mode", theta_mode},
                    {"validation_fraction", validation_fraction},
                    {"boundary", boundary},
                    {"clusters", clusters},
                    {"cut_height", cut_height},
                    {"sample_size", sample_size},
                    {"top", top},
                    {"travelers", travelers},
                    {"detectors", detectors},
                    {"planted_j", planted_j},
                    {"planted_k", planted_k},
                    {"planted_alpha", planted.alpha},
                    {"planted_beta", planted.beta},
                    {"planted_gamma", planted.gamma},
                    {"records_mean", records_mean},
                    {"days", days},
                    {"boundary_day", boundary_day},
                    {"anomaly_fraction", anomaly_fraction},
                    {"anomaly_mode", anomaly_mode},
                    {"seed", seed},
                    {"threads", threads}};
    }

    TrainConfig train_config() const {
        TrainConfig c;
        c.J = J;
        c.K = K;
        c.burn_in = burn_in;
        c.thin = thin;
        c.samples = samples;
        c.seed = seed;
        c.chain_mode = chains == "multi" ? ChainMode::Multi : ChainMode::Single;
        c.check_consistency = check_consistency;
        return c;
    }

    HeldoutOptions heldout_options() const {
        return {theta_mode == "inferred" ? ThetaMode::Inferred : ThetaMode::EqualWeight, heldout_iterations, seed};
    }
};

/// Collects output files written to temporaries; commit() renames them all
/// into place. Uncommitted temporaries are removed on destruction.
class OutputSet {
public:
    explicit OutputSet(std::string header) : header_(std::move(header)) {}
    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;
    ~OutputSet() {
        for (const auto& f : files_) {
            std::error_code ec;
            fs::remove(f.temp, ec);
        }
    }

    /// Opens a text output. Tabular files start with the run configuration as
    /// a '#' comment line.
    std::ofstream& open(const fs::path& path, bool with_header = true) {
        auto& f = files_.emplace_back();
        f.final = path;
        f.temp = path;
        f.temp += ".tmp-" + std::to_string(::getpid());
        f.stream = std::make_unique<std::ofstream>(f.temp, std::ios::binary | std::ios::trunc);
        if (!*f.stream) throw IoError("cannot open '" + f.temp.string() + "' for writing");
        if (with_header) *f.stream << "# config: " << header_ << '\n';
        return *f.stream;
    }

    void commit() {
        for (auto& f : files_) {
            f.stream->close();
            if (!*f.stream) throw IoError("write error on '" + f.temp.string() + "'");
        }
        for (auto& f : files_) {
            std::error_code ec;
            fs::rename(f.temp, f.final, ec);
            if (ec) throw IoError("cannot move output into place at '" + f.final.string() + "': " + ec.message());
        }
        files_.clear();
    }

private:
    struct File {
        fs::path final, temp;
        std::unique_ptr<std::ofstream> stream;
    };
    std::string header_;
    std::vector<File> files_;
};

void ensure_directory(const std::string& dir) {
    if (dir.empty()) throw ConfigError("an output directory is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

Timestamp parse_boundary(const std::string& text) {
    const auto ts = parse_timestamp(text);
    if (!ts) throw ConfigError("cannot parse boundary '" + text + "'");
    return *ts;
}

/// Midnight six days before the last day in the data, so the final seven
/// calendar days form the future window.
Timestamp default_boundary(const Corpus& corpus) {
    Timestamp latest = Timestamp::min();
    for (const auto& tr : corpus.travelers)
        for (const auto& r : tr.records) latest = std::max(latest, r.timestamp);
    return start_of_day(latest) - std::chrono::days{6};
}

class Command {
public:
    Command(RunConfig& config, std::ostream& out, std::ostream& err) : cfg_(config), out_(out), err_(err) {}

    void log(const std::string& message) {
        if (!cfg_.quiet) {
            std::lock_guard lock(log_mutex_);
            err_ << message << '\n';
        }
    }
    void warn(const std::string& message) {
        std::lock_guard lock(log_mutex_);
        err_ << "warning: " << message << '\n';
    }

    std::vector<RawRecord> read_records(const std::string& path) {
        if (path.empty()) throw ConfigError("an input file is required");
        if (!fs::exists(path)) throw IoError("input file '" + path + "' does not exist");
        if (is_corpus_file(path)) {
            std::ifstream in(path);
            return decode_corpus(load_corpus(in));
        }
        ReadOptions options{cfg_.columns, cfg_.delim(), !cfg_.strict};
        auto log = read_event_log(path, options);
        for (const auto& e : log.skipped) warn(std::string("skipped malformed row: ") + e.what());
        log_line("read " + std::to_string(log.records.size()) + " records from " + path);
        return std::move(log.records);
    }

    Corpus read_corpus(const std::string& path) {
        if (!path.empty() && fs::exists(path) && is_corpus_file(path)) {
            std::ifstream in(path);
            return load_corpus(in);
        }
        const auto records = read_records(path);
        return encode_corpus(records);
    }

    CorpusSplit split(const Corpus& corpus) {
        const Timestamp boundary = cfg_.boundary.empty() ? default_boundary(corpus) : parse_boundary(cfg_.boundary);
        cfg_.boundary = format_timestamp(boundary);
        auto result = split_corpus(corpus, cfg_.validation_fraction, boundary, cfg_.seed);
        for (const auto& tr : result.excluded.travelers)
            warn("traveler '" + tr.id + "' has no records before " + cfg_.boundary + "; excluded from training");
        log_line("split at " + cfg_.boundary + ": " + std::to_string(result.train.travelers.size()) +
                 " training travelers (" + std::to_string(result.train.record_count()) + " past records), " +
                 std::to_string(result.validation.travelers.size()) + " validation travelers");
        return result;
    }

    ProgressCallback train_progress() {
        if (cfg_.quiet) return {};
        return [this](const TrainProgress& p) {
            if (p.sweep % 50 == 0 || p.sweep == p.total_sweeps) {
                std::ostringstream msg;
                msg << "chain " << p.chain << " sweep " << p.sweep << "/" << p.total_sweeps << " log p(w,z) "
                    << std::setprecision(10) << p.log_likelihood;
                log(msg.str());
            }
        };
    }

    void log_line(const std::string& message) { log(message); }

    RunConfig& cfg_;
    std::ostream& out_;
    std::ostream& err_;
    std::mutex log_mutex_;
};

void cmd_ingest(Command& cmd) {
    auto& cfg = cmd.cfg_;
    if (cfg.output.empty()) throw ConfigError("--output is required");
    const auto corpus = encode_corpus(cmd.read_records(cfg.input));
    const auto header = cfg.to_json().dump();
    OutputSet outputs(header);
    save_corpus(outputs.open(cfg.output, false), corpus, "config: " + header);
    outputs.commit();
    cmd.out_ << "travelers " << corpus.travelers.size() << ", detectors " << corpus.vocab.spatial_size()
             << ", records " << corpus.record_count() << '\n';
}

void cmd_train(Command& cmd) {
    auto& cfg = cmd.cfg_;
    ensure_directory(cfg.output);
    std::unordered_map<std::string, Coordinates> coords;
    if (!cfg.coordinates.empty()) {
        std::ifstream in(cfg.coordinates);
        if (!in) throw IoError("cannot open coordinates file '" + cfg.coordinates + "'");
        std::string line;
        std::size_t line_no = 0;
        bool header = true;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            if (header) {
                header = false;
                continue;
            }
            std::vector<std::string> fields;
            std::stringstream ss(line);
            for (std::string f; std::getline(ss, f, cfg.delim());) fields.push_back(f);
            if (fields.size() < 3) throw ParseError(line_no, "coordinates rows need detector, x, y");
            try {
                coords[fields[0]] = {std::stod(fields[1]), std::stod(fields[2])};
            } catch (const std::exception&) {
                throw ParseError(line_no, "non-numeric coordinate");
            }
        }
    }

    const auto corpus = cmd.read_corpus(cfg.input);
    const auto parts = cmd.split(corpus);
    auto model = train(parts.train, cfg.train_config(), cfg.priors, cmd.train_progress(), cfg.threads);
    const auto header = cfg.to_json().dump();
    // The output location is left out so identical runs give identical bytes.
    auto provenance = cfg.to_json();
    provenance.erase("output");
    model.provenance = provenance.dump();

    OutputSet outputs(header);
    const fs::path dir = cfg.output;
    auto& model_out = outputs.open(dir / "model.stlda", false);
    const auto bytes = serialize_model(model);
    model_out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

    auto& trace = outputs.open(dir / "trace.csv");
    trace << "sweep" << cfg.delim() << "log_likelihood\n" << std::setprecision(17);
    for (std::size_t i = 0; i < model.log_likelihood.size(); ++i)
        trace << i + 1 << cfg.delim() << model.log_likelihood[i] << '\n';

    const auto estimate = model.final_estimate();
    export_temporal_factors(outputs.open(dir / "temporal_factors.csv"), estimate, cfg.delim());
    export_spatial_factors(outputs.open(dir / "spatial_factors.csv"), estimate, model.vocab,
                           cfg.coordinates.empty() ? nullptr : &coords, cfg.delim());
    outputs.commit();
    cmd.out_ << "trained J=" << cfg.J << " K=" << cfg.K << " on " << model.dims.U << " travelers, "
             << model.final_counts.assignments.size() << " records; " << model.snapshots.size()
             << " snapshots; model written to " << (dir / "model.stlda").string() << '\n';
}

void cmd_select(Command& cmd) {
    auto& cfg = cmd.cfg_;
    ensure_directory(cfg.output);
    const auto corpus = cmd.read_corpus(cfg.input);
    const auto parts = cmd.split(corpus);
    const auto result = grid_search(parts.train, parts.validation, cfg.grid_j, cfg.grid_k, cfg.train_config(),
                                    cfg.priors, cfg.heldout_options(), cfg.threads, [&](const GridCell& c) {
                                        std::ostringstream msg;
                                        msg << "cell J=" << c.J << " K=" << c.K << " mean perplexity "
                                            << std::setprecision(8) << c.mean_perplexity;
                                        cmd.log(msg.str());
                                    });
    OutputSet outputs(cfg.to_json().dump());
    auto& table = outputs.open(fs::path(cfg.output) / "grid.csv");
    table << "J" << cfg.delim() << "K" << cfg.delim() << "mean_perplexity\n" << std::setprecision(17);
    for (const auto& c : result.cells) table << c.J << cfg.delim() << c.K << cfg.delim() << c.mean_perplexity << '\n';
    outputs.commit();
    cmd.out_ << std::setprecision(8) << "best J=" << result.best.J << " K=" << result.best.K
             << " mean validation perplexity " << result.best.mean_perplexity << '\n';
}

void cmd_score(Command& cmd) {
    auto& cfg = cmd.cfg_;
    ensure_directory(cfg.output);
    if (cfg.model.empty()) throw ConfigError("--model is required");
    const auto model = load_model(cfg.model);
    if (cfg.boundary.empty()) {
        try {
            cfg.boundary = json::parse(model.provenance).at("boundary").get<std::string>();
        } catch (const json::exception&) {
            throw ConfigError("model carries no boundary; pass --boundary");
        }
    }
    const Timestamp boundary = parse_boundary(cfg.boundary);

    std::vector<RawRecord> future_records;
    for (auto& r : cmd.read_records(cfg.input))
        if (r.timestamp >= boundary && model.traveler_index(r.vehicle_id)) future_records.push_back(std::move(r));
    Corpus future;
    future.vocab = model.vocab;
    if (!future_records.empty()) future = encode_corpus(future_records, model.vocab, VocabPolicy::Extend);
    const auto report = rank_travelers(model, future, cfg.threads);

    OutputSet outputs(cfg.to_json().dump());
    write_report(outputs.open(fs::path(cfg.output) / "anomaly.csv"), report, cfg.delim());
    outputs.commit();
    write_top_summary(cmd.out_, report, cfg.top);
}

void cmd_cluster(Command& cmd) {
    auto& cfg = cmd.cfg_;
    ensure_directory(cfg.output);
    if (cfg.model.empty()) throw ConfigError("--model is required");
    const auto model = load_model(cfg.model);
    auto thetas = traveler_thetas(model);
    std::vector<std::size_t> members(thetas.size());
    std::iota(members.begin(), members.end(), 0);
    if (cfg.sample_size > 0 && cfg.sample_size < members.size()) {
        Rng rng(cfg.seed);
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
        members.resize(cfg.sample_size);
        std::sort(members.begin(), members.end());
    }
    std::vector<std::vector<double>> sample;
    for (auto u : members) sample.push_back(thetas[u]);
    if (sample.size() < 2) throw DataError("clustering needs at least two travelers");

    const auto dendrogram = average_linkage(distance_matrix(sample, cfg.threads));
    const auto labels = cfg.cut_height >= 0 ? cut_dendrogram_at(dendrogram, cfg.cut_height)
                                            : cut_dendrogram(dendrogram, std::min(cfg.clusters, sample.size()));
    const auto means = cluster_mean_theta(labels, sample);

    OutputSet outputs(cfg.to_json().dump());
    const fs::path dir = cfg.output;
    auto& tree = outputs.open(dir / "dendrogram.csv");
    tree << "# leaf i is traveler_id row i of labels.csv\n";
    write_dendrogram(tree, dendrogram, cfg.delim());
    auto& label_out = outputs.open(dir / "labels.csv");
    label_out << "leaf" << cfg.delim() << "traveler_id" << cfg.delim() << "cluster\n";
    for (std::size_t i = 0; i < members.size(); ++i)
        label_out << i << cfg.delim() << model.traveler_ids[members[i]] << cfg.delim() << labels[i] << '\n';
    auto& mean_out = outputs.open(dir / "cluster_theta.csv");
    mean_out << "cluster" << cfg.delim() << "size" << cfg.delim() << "j" << cfg.delim() << "k" << cfg.delim()
             << "theta\n"
             << std::setprecision(17);
    std::vector<std::size_t> sizes(means.size(), 0);
    for (auto l : labels) ++sizes[l];
    for (std::size_t c = 0; c < means.size(); ++c)
        for (std::size_t j = 0; j < model.dims.J; ++j)
            for (std::size_t k = 0; k < model.dims.K; ++k)
                mean_out << c << cfg.delim() << sizes[c] << cfg.delim() << j << cfg.delim() << k << cfg.delim()
                         << means[c][j * model.dims.K + k] << '\n';
    outputs.commit();
    cmd.out_ << "clustered " << sample.size() << " travelers into " << means.size() << " clusters\n";
}

void cmd_synth(Command& cmd) {
    auto& cfg = cmd.cfg_;
    ensure_directory(cfg.output);
    if (cfg.boundary_day > cfg.days) throw ConfigError("--boundary-day must not exceed --days");
    SynthConfig sc;
    sc.dims = {kHoursPerDay, cfg.detectors, cfg.planted_j, cfg.planted_k, cfg.travelers};
    sc.planted = cfg.planted;
    sc.records_mean = cfg.records_mean;
    sc.days = cfg.days;
    sc.seed = cfg.seed;
    auto synthetic = generate(sc);
    const Timestamp boundary = sc.start + std::chrono::days{cfg.boundary_day};
    cfg.boundary = format_timestamp(boundary);

    std::vector<bool> flags(synthetic.corpus.travelers.size(), false);
    if (cfg.anomaly_fraction > 0) {
        // Perturb only the records at or after the boundary.
        Corpus future;
        future.vocab = synthetic.corpus.vocab;
        for (const auto& tr : synthetic.corpus.travelers) {
            Traveler f{tr.id, {}};
            for (const auto& r : tr.records)
                if (r.timestamp >= boundary) f.records.push_back(r);
            future.travelers.push_back(std::move(f));
        }
        const auto mode = cfg.anomaly_mode == "uniform" ? AnomalyMode::Uniform : AnomalyMode::Swap;
        const auto planted = plant_anomalies(future, cfg.anomaly_fraction, mode, derive_seed(cfg.seed, 0xa11));
        flags = planted.flags;
        for (std::size_t u = 0; u < flags.size(); ++u) {
            if (!flags[u]) continue;
            auto& records = synthetic.corpus.travelers[u].records;
            std::erase_if(records, [&](const Record& r) { return r.timestamp >= boundary; });
            for (const auto& r : planted.corpus.travelers[u].records) records.push_back(r);
        }
    }

    const auto header = cfg.to_json().dump();
    OutputSet outputs(header);
    const fs::path dir = cfg.output;
    const auto raw = decode_corpus(synthetic.corpus);
    write_event_log(outputs.open(dir / "events.csv"), raw, cfg.columns, cfg.delim());
    save_truth(outputs.open(dir / "truth.json", false), synthetic.truth, synthetic.corpus.vocab, header);
    if (cfg.anomaly_fraction > 0) {
        auto& flag_out = outputs.open(dir / "anomalies.csv");
        flag_out << "traveler_id" << cfg.delim() << "flagged\n";
        for (std::size_t u = 0; u < flags.size(); ++u)
            flag_out << synthetic.corpus.travelers[u].id << cfg.delim() << (flags[u] ? 1 : 0) << '\n';
    }
    outputs.commit();
    cmd.out_ << "generated " << synthetic.corpus.travelers.size() << " travelers, " << raw.size()
             << " records; past/future boundary " << cfg.boundary << '\n';
}

void cmd_check(Command& cmd) {
    auto& cfg = cmd.cfg_;
    ensure_directory(cfg.output);
    if (cfg.model.empty() || cfg.truth.empty()) throw ConfigError("--model and --truth are required");
    const auto model = load_model(cfg.model);
    std::ifstream in(cfg.truth);
    if (!in) throw IoError("cannot open truth file '" + cfg.truth + "'");
    const auto truth = load_truth(in);
    const Dims& pd = truth.model.dims;
    if (model.dims.J != pd.J || model.dims.K != pd.K)
        throw ConfigError("model topic counts differ from the planted ones (J=" + std::to_string(pd.J) +
                          ", K=" + std::to_string(pd.K) + ")");

    // Re-index the recovered spatial factors into the planted detector order.
    const auto estimate = model.final_estimate();
    ParameterSnapshot aligned;
    aligned.dims = pd;
    aligned.psi = estimate.psi;
    aligned.phi.assign(pd.S * pd.K, 0.0);
    for (std::size_t s = 0; s < model.dims.S; ++s) {
        const auto planted_s = truth.vocab.find(model.vocab.label(static_cast<std::uint32_t>(s)));
        if (!planted_s) throw DataError("detector '" + model.vocab.label(static_cast<std::uint32_t>(s)) +
                                        "' does not occur in the planted truth");
        for (std::size_t k = 0; k < pd.K; ++k) aligned.phi[*planted_s * pd.K + k] = estimate.phi[s * pd.K + k];
    }
    const auto alignment = match_factors(aligned, truth.model);

    OutputSet outputs(cfg.to_json().dump());
    auto& table = outputs.open(fs::path(cfg.output) / "alignment.csv");
    table << "factor" << cfg.delim() << "planted" << cfg.delim() << "recovered" << cfg.delim() << "tv\n"
          << std::setprecision(17);
    for (std::size_t j = 0; j < pd.J; ++j)
        table << "temporal" << cfg.delim() << j << cfg.delim() << alignment.temporal[j] << cfg.delim()
              << alignment.temporal_tv[j] << '\n';
    for (std::size_t k = 0; k < pd.K; ++k)
        table << "spatial" << cfg.delim() << k << cfg.delim() << alignment.spatial[k] << cfg.delim()
              << alignment.spatial_tv[k] << '\n';
    outputs.commit();
    cmd.out_ << std::setprecision(6) << "mean TV temporal " << alignment.mean_temporal_tv() << ", spatial "
             << alignment.mean_spatial_tv() << '\n';
}

int exit_code(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::Io: return kIo;
        case ErrorCategory::Parse: return kParse;
        case ErrorCategory::Config: return kConfig;
        case ErrorCategory::Numeric: return kNumeric;
        case ErrorCategory::Format: return kFormat;
        case ErrorCategory::Data: return kData;
    }
    return kUnexpected;
}

void add_common(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--threads", cfg.threads, "Worker thread cap")->check(CLI::PositiveNumber);
    sub->add_option("--delimiter", cfg.delimiter, "Field delimiter for tables")
        ->check(CLI::Validator([](std::string& s) { return s.size() == 1 ? "" : "delimiter must be one character"; },
                               "CHAR"));
    sub->add_flag("--quiet", cfg.quiet, "Suppress progress messages");
}

void add_columns(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--vehicle-column", cfg.columns.vehicle, "Header name of the vehicle id column");
    sub->add_option("--location-column", cfg.columns.location, "Header name of the location column");
    sub->add_option("--direction-column", cfg.columns.direction, "Header name of the direction column");
    sub->add_option("--time-column", cfg.columns.timestamp, "Header name of the timestamp column");
    sub->add_flag("--strict", cfg.strict, "Abort on the first malformed row instead of skipping it");
}

void add_input(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("-i,--input", cfg.input, "Event log (delimited, with header) or encoded corpus")
        ->envname("STLDA_INPUT");
}

void add_output_dir(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("-o,--output-dir", cfg.output, "Directory for output files")->envname("STLDA_OUTPUT_DIR");
}

void add_split(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--validation-fraction", cfg.validation_fraction, "Share of travelers held out for validation")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--boundary", cfg.boundary,
                    "Past/future boundary date-time (default: midnight starting the last 7 days)");
}

void add_training(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--alpha", cfg.priors.alpha, "Traveler topic-pair prior")->check(CLI::PositiveNumber);
    sub->add_option("--beta", cfg.priors.beta, "Temporal topic prior")->check(CLI::PositiveNumber);
    sub->add_option("--gamma", cfg.priors.gamma, "Spatial topic prior")->check(CLI::PositiveNumber);
    sub->add_option("--burn-in", cfg.burn_in, "Sweeps before the first snapshot");
    sub->add_option("--thin", cfg.thin, "Sweeps between snapshots")->check(CLI::PositiveNumber);
    sub->add_option("-M,--samples", cfg.samples, "Number of snapshots M")->check(CLI::PositiveNumber);
    sub->add_option("--chains", cfg.chains, "single: M thinned snapshots of one chain; multi: M chains")
        ->check(CLI::IsMember({"single", "multi"}));
    sub->add_flag("--check-consistency", cfg.check_consistency, "Verify counts against assignments after each sweep");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Spatiotemporal topic modelling of traveler event logs and behaviour anomaly scoring", "stlda"};
    app.set_config("--config", "", "TOML/INI file with option values (command-line flags take precedence)");
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "Encode an event log into a corpus file");
    add_input(ingest, cfg);
    ingest->add_option("-o,--output", cfg.output, "Encoded corpus file")->envname("STLDA_OUTPUT");
    add_columns(ingest, cfg);
    add_common(ingest, cfg);

    auto* train_cmd = app.add_subcommand("train", "Train a model on the training travelers' past records");
    add_input(train_cmd, cfg);
    add_output_dir(train_cmd, cfg);
    train_cmd->add_option("-J", cfg.J, "Temporal topics")->check(CLI::PositiveNumber);
    train_cmd->add_option("-K", cfg.K, "Spatial topics")->check(CLI::PositiveNumber);
    train_cmd->add_option("--coordinates", cfg.coordinates, "detector,x,y table joined into spatial_factors.csv");
    add_training(train_cmd, cfg);
    add_split(train_cmd, cfg);
    add_columns(train_cmd, cfg);
    add_common(train_cmd, cfg);

    auto* select = app.add_subcommand("select", "Grid search over (J, K) by validation perplexity");
    add_input(select, cfg);
    add_output_dir(select, cfg);
    select->add_option("--grid-j", cfg.grid_j, "Temporal topic counts to try")->delimiter(',');
    select->add_option("--grid-k", cfg.grid_k, "Spatial topic counts to try")->delimiter(',');
    select->add_option("--theta-mode", cfg.theta_mode, "equal: uniform theta weights; inferred: fold-in theta")
        ->check(CLI::IsMember({"equal", "inferred"}));
    select->add_option("--heldout-iterations", cfg.heldout_iterations, "Fold-in sweeps (inferred mode)");
    add_training(select, cfg);
    add_split(select, cfg);
    add_columns(select, cfg);
    add_common(select, cfg);

    auto* score = app.add_subcommand("score", "Rank training travelers by predictive perplexity of future records");
    add_input(score, cfg);
    add_output_dir(score, cfg);
    score->add_option("-m,--model", cfg.model, "Model file")->envname("STLDA_MODEL");
    score->add_option("--boundary", cfg.boundary, "Past/future boundary (default: the one used for training)");
    score->add_option("--top", cfg.top, "Rows shown in the summary");
    add_columns(score, cfg);
    add_common(score, cfg);

    auto* cluster = app.add_subcommand("cluster", "Average-linkage clustering of travelers by sqrt(JSD)");
    add_output_dir(cluster, cfg);
    cluster->add_option("-m,--model", cfg.model, "Model file")->envname("STLDA_MODEL");
    cluster->add_option("--clusters", cfg.clusters, "Number of clusters to cut")->check(CLI::PositiveNumber);
    cluster->add_option("--cut-height", cfg.cut_height, "Cut at this merge height instead of a cluster count");
    cluster->add_option("--sample-size", cfg.sample_size, "Cluster a random subset of travelers (0: all)");
    add_common(cluster, cfg);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic event log from planted factors");
    add_output_dir(synth, cfg);
    synth->add_option("--travelers", cfg.travelers, "Travelers")->check(CLI::PositiveNumber);
    synth->add_option("--detectors", cfg.detectors, "Spatial vocabulary size S")->check(CLI::PositiveNumber);
    synth->add_option("-J", cfg.planted_j, "Planted temporal topics")->check(CLI::PositiveNumber);
    synth->add_option("-K", cfg.planted_k, "Planted spatial topics")->check(CLI::PositiveNumber);
    synth->add_option("--records", cfg.records_mean, "Mean records per traveler")->check(CLI::PositiveNumber);
    synth->add_option("--planted-alpha", cfg.planted.alpha, "Concentration of planted theta")->check(CLI::PositiveNumber);
    synth->add_option("--planted-beta", cfg.planted.beta, "Concentration of planted psi")->check(CLI::PositiveNumber);
    synth->add_option("--planted-gamma", cfg.planted.gamma, "Concentration of planted phi")->check(CLI::PositiveNumber);
    synth->add_option("--days", cfg.days, "Days spanned by the log")->check(CLI::PositiveNumber);
    synth->add_option("--boundary-day", cfg.boundary_day, "First day of the future window");
    synth->add_option("--anomaly-fraction", cfg.anomaly_fraction, "Share of travelers with perturbed futures")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--anomaly-mode", cfg.anomaly_mode, "swap or uniform")->check(CLI::IsMember({"swap", "uniform"}));
    synth->add_option("--vehicle-column", cfg.columns.vehicle, "Header name of the vehicle id column");
    synth->add_option("--location-column", cfg.columns.location, "Header name of the location column");
    synth->add_option("--direction-column", cfg.columns.direction, "Header name of the direction column");
    synth->add_option("--time-column", cfg.columns.timestamp, "Header name of the timestamp column");
    add_common(synth, cfg);

    auto* check = app.add_subcommand("check", "Compare a trained model's factors with planted truth");
    add_output_dir(check, cfg);
    check->add_option("-m,--model", cfg.model, "Model file")->envname("STLDA_MODEL");
    check->add_option("--truth", cfg.truth, "truth.json written by synth")->envname("STLDA_TRUTH");
    add_common(check, cfg);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfig;
    }

    auto* chosen = app.get_subcommands().front();
    cfg.subcommand = chosen->get_name();
    if (cfg.anomaly_fraction >= 1) {
        err << "error [config]: --anomaly-fraction must be below 1\n";
        return kConfig;
    }
    if (!(cfg.validation_fraction > 0 && cfg.validation_fraction < 1)) {
        err << "error [config]: --validation-fraction must lie strictly between 0 and 1\n";
        return kConfig;
    }

    Command cmd(cfg, out, err);
    try {
        if (cfg.subcommand == "ingest") cmd_ingest(cmd);
        else if (cfg.subcommand == "train") cmd_train(cmd);
        else if (cfg.subcommand == "select") cmd_select(cmd);
        else if (cfg.subcommand == "score") cmd_score(cmd);
        else if (cfg.subcommand == "cluster") cmd_cluster(cmd);
        else if (cfg.subcommand == "synth") cmd_synth(cmd);
        else if (cfg.subcommand == "check") cmd_check(cmd);
    } catch (const Error& e) {
        err << "error [" << to_string(e.category()) << "]: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::bad_alloc&) {
        err << "error [numeric]: out of memory\n";
        return kNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUnexpected;
    }
    return kOk;
}

}  // namespace stlda::cli
