#pragma once

// Event-log ingestion: raw license-plate style records are turned into
// per-traveler bags of (hour-of-day, detector) word pairs.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stlda/error.hpp"

namespace stlda {

/// Local wall-clock time at second resolution. No time zone is attached; the
/// value is stored as if it were UTC so that calendar arithmetic is exact.
using Timestamp = std::chrono::sys_seconds;

/// Accepts "MM/DD/YYYY HH:MM:SS", "YYYY-MM-DD HH:MM:SS", "YYYY-MM-DDTHH:MM:SS"
/// and the bare dates "YYYY-MM-DD" / "MM/DD/YYYY" (midnight).
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// ISO-8601 "YYYY-MM-DDTHH:MM:SS".
std::string format_timestamp(Timestamp ts);

int hour_of_day(Timestamp ts);

/// Midnight of the day containing ts.
Timestamp start_of_day(Timestamp ts);

constexpr std::size_t kHoursPerDay = 24;

struct RawRecord {
    std::string vehicle_id;
    std::string location_id;
    std::string direction;
    Timestamp timestamp{};

    bool operator==(const RawRecord&) const = default;
};

/// Zero-based field positions of the four columns in a delimited row.
struct ColumnLayout {
    std::size_t vehicle = 0;
    std::size_t location = 1;
    std::size_t direction = 2;
    std::size_t timestamp = 3;
};

/// Header names used to locate the columns in an event log.
struct ColumnNames {
    std::string vehicle = "vehicle_id";
    std::string location = "location_id";
    std::string direction = "direction";
    std::string timestamp = "timestamp";
};

/// Parses one data row. Throws ParseError (carrying `line`) on a malformed row.
RawRecord parse_record(std::string_view row, std::size_t line = 0, const ColumnLayout& layout = {},
                       char delimiter = ',');

struct ReadOptions {
    ColumnNames columns;
    char delimiter = ',';
    /// When false the first malformed row aborts the read.
    bool skip_malformed = true;
};

struct EventLog {
    std::vector<RawRecord> records;
    std::vector<ParseError> skipped;
};

/// Reads a delimited event log with a header row. Blank lines and lines
/// starting with '#' are ignored.
EventLog read_event_log(std::istream& in, const ReadOptions& options = {});
EventLog read_event_log(const std::string& path, const ReadOptions& options = {});

void write_event_log(std::ostream& out, std::span<const RawRecord> records, const ColumnNames& columns = {},
                     char delimiter = ',');

/// Bijection between detector labels ("location|direction") and spatial word
/// indices. The temporal vocabulary is always the 24 hours of the day.
class Vocab {
public:
    static std::string make_label(std::string_view location, std::string_view direction);

    std::size_t temporal_size() const noexcept { return kHoursPerDay; }
    std::size_t spatial_size() const noexcept { return labels_.size(); }

    /// Returns the index of `label`, assigning the next free index if new.
    std::uint32_t add(const std::string& label);
    std::optional<std::uint32_t> find(const std::string& label) const;
    const std::string& label(std::uint32_t index) const { return labels_.at(index); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    bool operator==(const Vocab& other) const { return labels_ == other.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

/// One encoded observation: temporal word t, spatial word s.
struct WordPair {
    std::uint32_t t = 0;
    std::uint32_t s = 0;

    bool operator==(const WordPair&) const = default;
};

struct Record {
    std::uint32_t t = 0;
    std::uint32_t s = 0;
    Timestamp timestamp{};

    WordPair words() const { return {t, s}; }
    bool operator==(const Record&) const = default;
};

struct Traveler {
    std::string id;
    std::vector<Record> records;

    std::vector<WordPair> word_pairs() const;
    bool operator==(const Traveler&) const = default;
};

struct Corpus {
    Vocab vocab;
    std::vector<Traveler> travelers;

    std::size_t record_count() const;
    /// Throws DataError if a word index is out of range or a traveler is empty.
    void validate() const;
    bool operator==(const Corpus&) const = default;
};

/// Groups records by vehicle (first-appearance order, input order within a
/// vehicle) and assigns detector indices in first-appearance order.
Corpus encode_corpus(std::span<const RawRecord> records);

enum class VocabPolicy {
    /// An unknown detector throws OutOfVocabularyError.
    Fixed,
    /// Unknown detectors are appended after the existing ones.
    Extend,
};

/// Encodes against an existing vocabulary.
Corpus encode_corpus(std::span<const RawRecord> records, const Vocab& vocab, VocabPolicy policy = VocabPolicy::Fixed);

/// Recovers raw records from a corpus (vehicle, location, direction, time).
std::vector<RawRecord> decode_corpus(const Corpus& corpus);

struct CorpusSplit {
    /// Training travelers, records strictly before the boundary.
    Corpus train;
    /// The same travelers' records at or after the boundary (a traveler with
    /// no such records is absent).
    Corpus train_future;
    /// Held-out travelers with all their records.
    Corpus validation;
    /// Training-group travelers with no record before the boundary.
    Corpus excluded;
    Timestamp boundary{};
};

/// Random traveler-level partition (round(fraction * U) validation
/// travelers), then a time-level past/future partition of the rest.
/// Requires 0 < validation_fraction < 1.
CorpusSplit split_corpus(const Corpus& corpus, double validation_fraction, Timestamp boundary,
                         std::uint64_t seed);

/// Encoded-corpus dump: a versioned line-oriented text file. A non-empty
/// `comment` is written as a '#' line after the magic line.
void save_corpus(std::ostream& out, const Corpus& corpus, const std::string& comment = {});
Corpus load_corpus(std::istream& in);

/// True when the file starts with the encoded-corpus magic line.
bool is_corpus_file(const std::string& path);

extern const char* const kCorpusMagic;

}  // namespace stlda
