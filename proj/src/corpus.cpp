#include "stlda/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stlda/rng.hpp"

namespace stlda {

const char* const kCorpusMagic = "stlda-corpus";
namespace {
constexpr int kCorpusVersion = 1;

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view row, char delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = row.find(delimiter, start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(row.substr(start)));
            break;
        }
        fields.push_back(trim(row.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

// Reads exactly `width` digits starting at `pos`.
bool read_int(std::string_view s, std::size_t pos, std::size_t width, int& value) {
    if (pos + width > s.size()) return false;
    for (std::size_t i = pos; i < pos + width; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + width, value);
    return ec == std::errc{};
}

bool is_blank_or_comment(std::string_view line) {
    const auto t = trim(line);
    return t.empty() || t.front() == '#';
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    text = trim(text);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    std::size_t pos = 0;
    if (text.size() >= 10 && text[4] == '-' && text[7] == '-') {
        if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, mo) || !read_int(text, 8, 2, d)) return std::nullopt;
    } else if (text.size() >= 10 && text[2] == '/' && text[5] == '/') {
        if (!read_int(text, 0, 2, mo) || !read_int(text, 3, 2, d) || !read_int(text, 6, 4, y)) return std::nullopt;
    } else {
        return std::nullopt;
    }
    pos = 10;
    if (pos < text.size()) {
        if (text[pos] != ' ' && text[pos] != 'T') return std::nullopt;
        if (text.size() != pos + 9 || text[pos + 3] != ':' || text[pos + 6] != ':') return std::nullopt;
        if (!read_int(text, pos + 1, 2, h) || !read_int(text, pos + 4, 2, mi) || !read_int(text, pos + 7, 2, sec))
            return std::nullopt;
        if (h > 23 || mi > 59 || sec > 59) return std::nullopt;
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto day_start = floor<days>(ts);
    const year_month_day ymd{day_start};
    const hh_mm_ss hms{ts - day_start};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

int hour_of_day(Timestamp ts) {
    using namespace std::chrono;
    return static_cast<int>(floor<hours>(ts - floor<days>(ts)).count());
}

Timestamp start_of_day(Timestamp ts) { return std::chrono::floor<std::chrono::days>(ts); }

RawRecord parse_record(std::string_view row, std::size_t line, const ColumnLayout& layout, char delimiter) {
    const auto fields = split_fields(row, delimiter);
    const std::size_t needed =
        std::max({layout.vehicle, layout.location, layout.direction, layout.timestamp}) + 1;
    if (fields.size() < needed)
        throw ParseError(line, "expected at least " + std::to_string(needed) + " fields, found " +
                                   std::to_string(fields.size()));
    RawRecord record;
    record.vehicle_id = std::string(fields[layout.vehicle]);
    record.location_id = std::string(fields[layout.location]);
    record.direction = std::string(fields[layout.direction]);
    if (record.vehicle_id.empty()) throw ParseError(line, "empty vehicle id");
    if (record.location_id.empty()) throw ParseError(line, "empty location id");
    const auto ts = parse_timestamp(fields[layout.timestamp]);
    if (!ts) throw ParseError(line, "unparseable timestamp '" + std::string(fields[layout.timestamp]) + "'");
    record.timestamp = *ts;
    return record;
}

EventLog read_event_log(std::istream& in, const ReadOptions& options) {
    EventLog log;
    std::string line;
    std::size_t line_no = 0;
    std::optional<ColumnLayout> layout;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank_or_comment(line)) continue;
        if (!layout) {
            const auto header = split_fields(line, options.delimiter);
            auto locate = [&](const std::string& name) {
                const auto it = std::find(header.begin(), header.end(), name);
                if (it == header.end())
                    throw ParseError(line_no, "header has no column named '" + name + "'");
                return static_cast<std::size_t>(it - header.begin());
            };
            layout = ColumnLayout{locate(options.columns.vehicle), locate(options.columns.location),
                                  locate(options.columns.direction), locate(options.columns.timestamp)};
            continue;
        }
        try {
            log.records.push_back(parse_record(line, line_no, *layout, options.delimiter));
        } catch (const ParseError& e) {
            if (!options.skip_malformed) throw;
            log.skipped.push_back(e);
        }
    }
    if (in.bad()) throw IoError("read error on event log");
    if (!layout) throw ParseError(line_no, "event log has no header row");
    return log;
}

EventLog read_event_log(const std::string& path, const ReadOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open event log '" + path + "'");
    return read_event_log(in, options);
}

void write_event_log(std::ostream& out, std::span<const RawRecord> records, const ColumnNames& columns,
                     char delimiter) {
    out << columns.vehicle << delimiter << columns.location << delimiter << columns.direction << delimiter
        << columns.timestamp << '\n';
    for (const auto& r : records) {
        out << r.vehicle_id << delimiter << r.location_id << delimiter << r.direction << delimiter
            << format_timestamp(r.timestamp) << '\n';
    }
}

std::string Vocab::make_label(std::string_view location, std::string_view direction) {
    std::string label;
    label.reserve(location.size() + direction.size() + 1);
    label.append(location).append("|").append(direction);
    return label;
}

std::uint32_t Vocab::add(const std::string& label) {
    const auto [it, inserted] = index_.try_emplace(label, static_cast<std::uint32_t>(labels_.size()));
    if (inserted) labels_.push_back(label);
    return it->second;
}

std::optional<std::uint32_t> Vocab::find(const std::string& label) const {
    const auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<WordPair> Traveler::word_pairs() const {
    std::vector<WordPair> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.words());
    return out;
}

std::size_t Corpus::record_count() const {
    std::size_t n = 0;
    for (const auto& tr : travelers) n += tr.records.size();
    return n;
}

void Corpus::validate() const {
    for (const auto& tr : travelers) {
        if (tr.records.empty()) throw DataError("traveler '" + tr.id + "' has no records");
        for (const auto& r : tr.records) {
            if (r.t >= vocab.temporal_size())
                throw DataError("temporal word " + std::to_string(r.t) + " out of range");
            if (r.s >= vocab.spatial_size())
                throw DataError("spatial word " + std::to_string(r.s) + " out of range");
        }
    }
}

namespace {

template <typename IndexOf>
Corpus encode_with(std::span<const RawRecord> records, Vocab vocab, IndexOf&& index_of) {
    if (records.empty()) throw DataError("cannot encode an empty record list");
    Corpus corpus;
    std::unordered_map<std::string, std::size_t> traveler_index;
    for (const auto& raw : records) {
        const auto s = index_of(vocab, Vocab::make_label(raw.location_id, raw.direction));
        const auto [it, inserted] = traveler_index.try_emplace(raw.vehicle_id, corpus.travelers.size());
        if (inserted) corpus.travelers.push_back(Traveler{raw.vehicle_id, {}});
        corpus.travelers[it->second].records.push_back(
            Record{static_cast<std::uint32_t>(hour_of_day(raw.timestamp)), s, raw.timestamp});
    }
    corpus.vocab = std::move(vocab);
    return corpus;
}

}  // namespace

Corpus encode_corpus(std::span<const RawRecord> records) {
    return encode_with(records, Vocab{}, [](Vocab& v, const std::string& label) { return v.add(label); });
}

Corpus encode_corpus(std::span<const RawRecord> records, const Vocab& vocab, VocabPolicy policy) {
    if (policy == VocabPolicy::Extend)
        return encode_with(records, vocab, [](Vocab& v, const std::string& label) { return v.add(label); });
    return encode_with(records, vocab, [](Vocab& v, const std::string& label) {
        const auto index = v.find(label);
        if (!index) throw OutOfVocabularyError(label);
        return *index;
    });
}

std::vector<RawRecord> decode_corpus(const Corpus& corpus) {
    std::vector<RawRecord> out;
    out.reserve(corpus.record_count());
    for (const auto& tr : corpus.travelers) {
        for (const auto& r : tr.records) {
            const auto& label = corpus.vocab.label(r.s);
            const auto bar = label.rfind('|');
            out.push_back(RawRecord{tr.id, label.substr(0, bar), label.substr(bar + 1), r.timestamp});
        }
    }
    return out;
}

CorpusSplit split_corpus(const Corpus& corpus, double validation_fraction, Timestamp boundary,
                         std::uint64_t seed) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation fraction must lie strictly between 0 and 1");
    const std::size_t n = corpus.travelers.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_validation = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    std::vector<bool> is_validation(n, false);
    for (std::size_t i = 0; i < n_validation; ++i) is_validation[order[i]] = true;

    CorpusSplit split;
    split.boundary = boundary;
    split.train.vocab = split.train_future.vocab = split.validation.vocab = split.excluded.vocab = corpus.vocab;
    // Corpus order is kept within each partition.
    for (std::size_t u = 0; u < n; ++u) {
        const auto& tr = corpus.travelers[u];
        if (is_validation[u]) {
            split.validation.travelers.push_back(tr);
            continue;
        }
        Traveler past{tr.id, {}}, future{tr.id, {}};
        for (const auto& r : tr.records) (r.timestamp < boundary ? past : future).records.push_back(r);
        if (past.records.empty()) {
            split.excluded.travelers.push_back(tr);
            continue;
        }
        split.train.travelers.push_back(std::move(past));
        if (!future.records.empty()) split.train_future.travelers.push_back(std::move(future));
    }
    return split;
}

void save_corpus(std::ostream& out, const Corpus& corpus, const std::string& comment) {
    out << kCorpusMagic << " v" << kCorpusVersion << '\n';
    if (!comment.empty()) out << "# " << comment << '\n';
    out << "T " << corpus.vocab.temporal_size() << " S " << corpus.vocab.spatial_size() << " U "
        << corpus.travelers.size() << " N " << corpus.record_count() << '\n';
    for (std::size_t s = 0; s < corpus.vocab.spatial_size(); ++s)
        out << "detector " << s << ' ' << corpus.vocab.label(static_cast<std::uint32_t>(s)) << '\n';
    for (const auto& tr : corpus.travelers) {
        out << "traveler " << tr.records.size() << ' ' << tr.id << '\n';
        for (const auto& r : tr.records) out << r.t << ' ' << r.s << ' ' << r.timestamp.time_since_epoch().count() << '\n';
    }
    if (!out) throw IoError("write error on corpus dump");
}

Corpus load_corpus(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::string& {
        do {
            if (!std::getline(in, line)) throw ParseError(line_no + 1, "unexpected end of corpus file");
            ++line_no;
        } while (line_no > 1 && !line.empty() && line.front() == '#');
        return line;
    };
    {
        std::istringstream head(next_line());
        std::string magic, version;
        head >> magic >> version;
        if (magic != kCorpusMagic) throw ParseError(line_no, "not an encoded corpus file");
        if (version != "v" + std::to_string(kCorpusVersion))
            throw ParseError(line_no, "unsupported corpus version '" + version + "'");
    }
    std::size_t T = 0, S = 0, U = 0, N = 0;
    {
        std::istringstream dims(next_line());
        std::string kt, ks, ku, kn;
        if (!(dims >> kt >> T >> ks >> S >> ku >> U >> kn >> N) || kt != "T" || ks != "S" || ku != "U" || kn != "N")
            throw ParseError(line_no, "malformed dimension line");
        if (T != kHoursPerDay) throw ParseError(line_no, "temporal size must be 24");
    }
    Corpus corpus;
    for (std::size_t s = 0; s < S; ++s) {
        const auto& l = next_line();
        const std::string prefix = "detector " + std::to_string(s) + ' ';
        if (l.rfind(prefix, 0) != 0) throw ParseError(line_no, "expected detector " + std::to_string(s));
        corpus.vocab.add(l.substr(prefix.size()));
    }
    if (corpus.vocab.spatial_size() != S) throw ParseError(line_no, "duplicate detector labels");
    for (std::size_t u = 0; u < U; ++u) {
        const auto& l = next_line();
        std::istringstream head(l);
        std::string key;
        std::size_t count = 0;
        if (!(head >> key >> count) || key != "traveler") throw ParseError(line_no, "expected traveler header");
        const auto id_pos = l.find(' ', l.find(' ') + 1);
        if (id_pos == std::string::npos) throw ParseError(line_no, "traveler header has no id");
        Traveler tr{l.substr(id_pos + 1), {}};
        tr.records.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::istringstream rec(next_line());
            std::int64_t t = 0, s = 0, secs = 0;
            if (!(rec >> t >> s >> secs) || t < 0 || s < 0 || static_cast<std::size_t>(t) >= T ||
                static_cast<std::size_t>(s) >= S)
                throw ParseError(line_no, "malformed or out-of-range record");
            tr.records.push_back(Record{static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(s),
                                        Timestamp{std::chrono::seconds{secs}}});
        }
        corpus.travelers.push_back(std::move(tr));
    }
    if (corpus.record_count() != N) throw ParseError(line_no, "record count does not match header");
    corpus.validate();
    return corpus;
}

bool is_corpus_file(const std::string& path) {
    std::ifstream in(path);
    std::string first;
    return in && std::getline(in, first) && first.rfind(kCorpusMagic, 0) == 0;
}

}  // namespace stlda
