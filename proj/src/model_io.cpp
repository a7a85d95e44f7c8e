// Binary model container.
//
//   magic    8 bytes  "STLDAMDL"
//   version  u32
//   length   u64      payload byte count
//   payload  ...
//   crc32    u32      over every preceding byte
//
// All integers little-endian; doubles are stored as their IEEE-754 bit
// patterns so values round-trip exactly.

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stlda/model.hpp"

namespace stlda {
namespace {

constexpr char kMagic[8] = {'S', 'T', 'L', 'D', 'A', 'M', 'D', 'L'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

std::uint32_t checksum(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in pieces.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const auto n = std::min(kChunk, bytes.size() - off);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        buf_.append(s);
    }
    void counts(const std::vector<Count>& v) {
        u64(v.size());
        for (auto c : v) u64(static_cast<std::uint64_t>(c));
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        for (auto x : v) f64(x);
    }
    void raw(const char* p, std::size_t n) { buf_.append(p, n); }
    std::string& bytes() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t size() {
        const auto n = u64();
        // Every element takes at least one byte, so this bounds corrupt sizes.
        if (n > bytes_.size() - pos_) throw FormatError("model file: element count exceeds payload");
        return static_cast<std::size_t>(n);
    }
    std::string str() {
        const auto n = size();
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::vector<Count> counts(std::size_t expected) {
        const auto n = size();
        if (n != expected) throw FormatError("model file: count block has unexpected size");
        std::vector<Count> v(n);
        for (auto& c : v) c = static_cast<Count>(u64());
        return v;
    }
    std::vector<double> doubles(std::optional<std::size_t> expected = std::nullopt) {
        const auto n = size();
        if (expected && n != *expected) throw FormatError("model file: parameter block has unexpected size");
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("model file: payload ends inside a field");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void write_dims(Writer& w, const Dims& d) {
    for (auto v : {d.T, d.S, d.J, d.K, d.U}) w.u64(v);
}

Dims read_dims(Reader& r) {
    Dims d;
    d.T = r.u64();
    d.S = r.u64();
    d.J = r.u64();
    d.K = r.u64();
    d.U = r.u64();
    return d;
}

}  // namespace

std::string serialize_model(const TrainedModel& model) {
    Writer payload;
    write_dims(payload, model.dims);
    payload.f64(model.priors.alpha);
    payload.f64(model.priors.beta);
    payload.f64(model.priors.gamma);

    const auto& c = model.config;
    for (auto v : {c.J, c.K, c.burn_in, c.thin, c.samples}) payload.u64(v);
    payload.u64(c.seed);
    payload.u8(static_cast<std::uint8_t>(c.chain_mode));
    payload.u8(c.check_consistency ? 1 : 0);

    payload.str(model.provenance);
    payload.u64(model.vocab.spatial_size());
    for (const auto& label : model.vocab.labels()) payload.str(label);
    payload.u64(model.traveler_ids.size());
    for (const auto& id : model.traveler_ids) payload.str(id);

    const auto& fc = model.final_counts;
    write_dims(payload, fc.dims);
    payload.counts(fc.temporal);
    payload.counts(fc.spatial);
    payload.counts(fc.traveler);
    payload.counts(fc.temporal_totals);
    payload.counts(fc.spatial_totals);
    payload.counts(fc.traveler_totals);
    payload.u64(fc.assignments.size());
    for (auto z : fc.assignments) payload.u32(z);

    payload.u64(model.snapshots.size());
    for (const auto& s : model.snapshots) {
        write_dims(payload, s.dims);
        payload.doubles(s.theta);
        payload.doubles(s.psi);
        payload.doubles(s.phi);
    }
    payload.doubles(model.log_likelihood);

    Writer file;
    file.raw(kMagic, sizeof kMagic);
    file.u32(kModelVersion);
    file.u64(payload.bytes().size());
    file.bytes().append(payload.bytes());
    file.u32(checksum(file.bytes()));
    return std::move(file.bytes());
}

TrainedModel deserialize_model(std::string_view bytes) {
    if (bytes.size() < sizeof kMagic) throw TruncatedFileError("model file is truncated (no header)");
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw FormatError("not a model file (bad magic bytes)");
    if (bytes.size() < kHeaderSize) throw TruncatedFileError("model file is truncated (partial header)");
    Reader header(bytes.substr(sizeof kMagic, kHeaderSize - sizeof kMagic));
    const auto version = header.u32();
    if (version != kModelVersion) throw VersionError(version, kModelVersion);
    const auto length = header.u64();
    if (length > bytes.size() || bytes.size() - kHeaderSize < length + 4)
        throw TruncatedFileError("model file is truncated (payload shorter than declared)");
    if (bytes.size() != kHeaderSize + length + 4) throw FormatError("model file has trailing bytes");
    const auto body = bytes.substr(0, kHeaderSize + length);
    Reader tail(bytes.substr(kHeaderSize + length));
    if (tail.u32() != checksum(body)) throw ChecksumError("model file checksum mismatch");

    Reader r(bytes.substr(kHeaderSize, length));
    TrainedModel m;
    m.dims = read_dims(r);
    m.priors.alpha = r.f64();
    m.priors.beta = r.f64();
    m.priors.gamma = r.f64();

    auto& c = m.config;
    c.J = r.u64();
    c.K = r.u64();
    c.burn_in = r.u64();
    c.thin = r.u64();
    c.samples = r.u64();
    c.seed = r.u64();
    const auto mode = r.u8();
    if (mode > 1) throw FormatError("model file: unknown chain mode");
    c.chain_mode = static_cast<ChainMode>(mode);
    c.check_consistency = r.u8() != 0;

    m.provenance = r.str();
    const auto n_labels = r.size();
    for (std::size_t i = 0; i < n_labels; ++i) m.vocab.add(r.str());
    if (m.vocab.spatial_size() != n_labels) throw FormatError("model file: duplicate detector labels");
    const auto n_travelers = r.size();
    m.traveler_ids.reserve(n_travelers);
    for (std::size_t i = 0; i < n_travelers; ++i) m.traveler_ids.push_back(r.str());

    const Dims d = read_dims(r);
    if (!(d == m.dims)) throw FormatError("model file: count dimensions disagree with header");
    if (d.S != n_labels || d.U != n_travelers) throw FormatError("model file: vocabulary or traveler table size mismatch");
    CountState& fc = m.final_counts;
    fc.dims = d;
    fc.temporal = r.counts(d.T * d.J);
    fc.spatial = r.counts(d.S * d.K);
    fc.traveler = r.counts(d.U * d.pairs());
    fc.temporal_totals = r.counts(d.J);
    fc.spatial_totals = r.counts(d.K);
    fc.traveler_totals = r.counts(d.U);
    const auto n_assign = r.size();
    fc.assignments.resize(n_assign);
    for (auto& z : fc.assignments) z = r.u32();

    const auto n_snapshots = r.size();
    m.snapshots.resize(n_snapshots);
    for (auto& s : m.snapshots) {
        s.dims = read_dims(r);
        if (!(s.dims == d)) throw FormatError("model file: snapshot dimensions disagree with header");
        s.theta = r.doubles(d.U * d.pairs());
        s.psi = r.doubles(d.T * d.J);
        s.phi = r.doubles(d.S * d.K);
    }
    m.log_likelihood = r.doubles();
    if (!r.done()) throw FormatError("model file: unread bytes at end of payload");
    return m;
}

void save_model(const TrainedModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write error on '" + path + "'");
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read error on '" + path + "'");
    return deserialize_model(bytes);
}

}  // namespace stlda
