#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "text.hpp"

namespace snt {

using EmbeddingVector = std::vector<float>;

/// Returns v scaled to unit Euclidean norm. Accumulates in double so the
/// result is within 1e-6 of unit norm for any float input.
inline EmbeddingVector normalize(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    double norm = std::sqrt(sq);
    if (!(norm >= 1e-12)) throw Error(ErrorKind::ZeroVector, "cannot normalize a zero vector");
    EmbeddingVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
    return out;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

struct IndexEntry {
    std::uint64_t entry_id = 0;
    EmbeddingVector vector;
    std::string caption;
    std::string entity_id;
    std::string image_uri;
    std::string source_uri;

    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct SimilarityHit {
    std::uint64_t entry_id = 0;
    double score = 0.0;
    std::string caption;
    std::string entity_id;

    friend bool operator==(const SimilarityHit&, const SimilarityHit&) = default;
};

/// Hits in descending score order, ties by ascending entry_id.
struct RetrievalSet {
    std::vector<SimilarityHit> hits;
};

/// Ordering used by every retrieval path: higher score first, then lower id.
inline bool hit_before(double score_a, std::uint64_t id_a, double score_b, std::uint64_t id_b) {
    if (score_a != score_b) return score_a > score_b;
    return id_a < id_b;
}

inline void to_json(nlohmann::json& j, const SimilarityHit& h) {
    j = {{"entry_id", h.entry_id}, {"score", h.score}, {"caption", h.caption},
         {"entity_id", h.entity_id}};
}

inline void from_json(const nlohmann::json& j, SimilarityHit& h) {
    h.entry_id = j.at("entry_id").get<std::uint64_t>();
    h.score = j.at("score").get<double>();
    h.caption = j.at("caption").get<std::string>();
    h.entity_id = j.at("entity_id").get<std::string>();
}

inline void to_json(nlohmann::json& j, const RetrievalSet& rs) { j = rs.hits; }
inline void from_json(const nlohmann::json& j, RetrievalSet& rs) {
    rs.hits = j.get<std::vector<SimilarityHit>>();
}

/// Exact cosine k-NN over normalized vectors held in one contiguous buffer.
///
/// Built by a single writer through add(); after seal() the index rejects
/// writes and const queries may run concurrently.
class EmbeddingIndex {
public:
    static constexpr std::string_view kMagic = "SNTIDX01";
    static constexpr std::uint32_t kVersion = 1;

    EmbeddingIndex() = default;

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    bool sealed() const noexcept { return sealed_; }
    void seal() noexcept { sealed_ = true; }

    std::uint64_t add(IndexEntry entry) {
        if (sealed_) throw Error(ErrorKind::SealedIndex, "index is sealed");
        if (entry.vector.empty()) throw Error(ErrorKind::DimMismatch, "vector has dimension 0");
        if (!entries_.empty() && entry.vector.size() != dim_)
            throw Error(ErrorKind::DimMismatch, "expected dim " + std::to_string(dim_) + ", got " +
                                                    std::to_string(entry.vector.size()));
        if (entry.caption.empty() || entry.entity_id.empty())
            throw Error(ErrorKind::InvalidArgument, "caption and entity_id must be non-empty");
        if (by_id_.contains(entry.entry_id))
            throw Error(ErrorKind::DuplicateId,
                        "entry_id " + std::to_string(entry.entry_id) + " already present");

        entry.vector = normalize(entry.vector);
        insert_normalized(std::move(entry));
        return entries_.back().entry_id;
    }

    const IndexEntry& entry(std::uint64_t id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw Error(ErrorKind::NotFound, "no entry " + std::to_string(id));
        return entries_[it->second];
    }

    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }

    RetrievalSet knn(std::span<const float> query, std::size_t k) const {
        if (entries_.empty()) throw Error(ErrorKind::EmptyIndex, "index is empty");
        if (query.size() != dim_)
            throw Error(ErrorKind::DimMismatch, "query dim " + std::to_string(query.size()) +
                                                    " != index dim " + std::to_string(dim_));
        if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be positive");
        auto q = normalize(query);

        struct Scored {
            double score;
            std::uint64_t id;
            std::size_t row;
        };
        std::vector<Scored> scored;
        scored.reserve(entries_.size());
        for (std::size_t row = 0; row < entries_.size(); ++row) {
            std::span<const float> v(vectors_.data() + row * dim_, dim_);
            scored.push_back({dot(q, v), entries_[row].entry_id, row});
        }
        auto cmp = [](const Scored& a, const Scored& b) {
            return hit_before(a.score, a.id, b.score, b.id);
        };
        std::size_t take = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                          scored.end(), cmp);

        RetrievalSet out;
        out.hits.reserve(take);
        for (std::size_t i = 0; i < take; ++i) {
            const auto& e = entries_[scored[i].row];
            out.hits.push_back({e.entry_id, scored[i].score, e.caption, e.entity_id});
        }
        return out;
    }

    void save(const std::filesystem::path& path) const;
    static EmbeddingIndex load(const std::filesystem::path& path);

private:
    void insert_normalized(IndexEntry entry) {
        if (entries_.empty()) dim_ = entry.vector.size();
        vectors_.insert(vectors_.end(), entry.vector.begin(), entry.vector.end());
        by_id_.emplace(entry.entry_id, entries_.size());
        entries_.push_back(std::move(entry));
    }

    std::size_t dim_ = 0;
    bool sealed_ = false;
    std::vector<IndexEntry> entries_;
    std::vector<float> vectors_; // row-major copy for the scan
    std::unordered_map<std::uint64_t, std::size_t> by_id_;
};

namespace detail {

class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.append(s); }
    template <typename T>
    void le(T value) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        le(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    const std::string& buffer() const noexcept { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    bool has(std::size_t n) const noexcept { return data_.size() - pos_ >= n; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    template <typename T>
    T le() {
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(data_[pos_ + i]))
                 << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    std::string str() {
        auto n = le<std::uint32_t>();
        return std::string(bytes(n));
    }

private:
    void need(std::size_t n) const {
        if (!has(n)) throw Error(ErrorKind::TruncatedPayload, "unexpected end of data");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

} // namespace detail

inline void EmbeddingIndex::save(const std::filesystem::path& path) const {
    detail::ByteWriter w;
    w.bytes(kMagic);
    w.le(kVersion);
    w.le(static_cast<std::uint32_t>(dim_));
    w.le(static_cast<std::uint64_t>(entries_.size()));

    // Canonical on-disk order: ascending entry_id.
    std::vector<const IndexEntry*> order;
    order.reserve(entries_.size());
    for (const auto& e : entries_) order.push_back(&e);
    std::ranges::sort(order, {}, [](const IndexEntry* e) { return e->entry_id; });

    for (const IndexEntry* e : order) {
        w.le(e->entry_id);
        for (float x : e->vector) w.f32(x);
        w.str(e->caption);
        w.str(e->entity_id);
        w.str(e->image_uri);
        w.str(e->source_uri);
    }
    detail::write_file(path, w.buffer());
}

inline EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
    std::string data = detail::read_file(path);
    detail::ByteReader r(data);
    if (!r.has(kMagic.size() + 16) || r.bytes(kMagic.size()) != kMagic)
        throw Error(ErrorKind::CorruptHeader, "bad magic in " + path.string());
    auto version = r.le<std::uint32_t>();
    if (version != kVersion)
        throw Error(ErrorKind::CorruptHeader, "unsupported version " + std::to_string(version));
    auto dim = r.le<std::uint32_t>();
    auto count = r.le<std::uint64_t>();
    if (dim == 0 && count > 0) throw Error(ErrorKind::CorruptHeader, "zero dimension");

    EmbeddingIndex index;
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        e.entry_id = r.le<std::uint64_t>();
        e.vector.resize(dim);
        for (auto& x : e.vector) x = r.f32();
        e.caption = r.str();
        e.entity_id = r.str();
        e.image_uri = r.str();
        e.source_uri = r.str();
        if (index.by_id_.contains(e.entry_id))
            throw Error(ErrorKind::DuplicateId, "duplicate entry_id in file");
        index.insert_normalized(std::move(e));
    }
    if (r.remaining() != 0) throw Error(ErrorKind::CorruptHeader, "trailing bytes after payload");
    index.dim_ = dim;
    index.seal();
    return index;
}

/// Float vector packed as little-endian f32 bytes, base64 encoded.
inline std::string encode_vector_b64(std::span<const float> v) {
    detail::ByteWriter w;
    for (float x : v) w.f32(x);
    const auto& buf = w.buffer();
    return text::base64_encode(
        {reinterpret_cast<const std::uint8_t*>(buf.data()), buf.size()});
}

inline EmbeddingVector decode_vector_b64(std::string_view b64) {
    auto bytes = text::base64_decode(b64);
    if (bytes.size() % 4 != 0)
        throw Error(ErrorKind::ParseError, "base64 vector length is not a multiple of 4");
    std::string_view raw(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    detail::ByteReader r(raw);
    EmbeddingVector v(bytes.size() / 4);
    for (auto& x : v) x = r.f32();
    return v;
}

/// One JSONL row: {entry_id, vector_b64 | vector, caption, entity_id, image_uri, source_uri}.
inline IndexEntry entry_from_json(const nlohmann::json& j) {
    IndexEntry e;
    e.entry_id = j.at("entry_id").get<std::uint64_t>();
    if (j.contains("vector_b64"))
        e.vector = decode_vector_b64(j.at("vector_b64").get<std::string>());
    else
        e.vector = j.at("vector").get<std::vector<float>>();
    e.caption = j.at("caption").get<std::string>();
    e.entity_id = j.at("entity_id").get<std::string>();
    e.image_uri = j.value("image_uri", "");
    e.source_uri = j.value("source_uri", "");
    return e;
}

inline nlohmann::json entry_to_json(const IndexEntry& e) {
    return {{"entry_id", e.entry_id},   {"vector_b64", encode_vector_b64(e.vector)},
            {"caption", e.caption},     {"entity_id", e.entity_id},
            {"image_uri", e.image_uri}, {"source_uri", e.source_uri}};
}

/// Reads a JSONL file line by line, skipping blank lines. `fn` gets the
/// parsed object and its 1-based line number.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        fn(j, lineno);
    }
}

inline EmbeddingIndex build_index_from_jsonl(const std::filesystem::path& path) {
    EmbeddingIndex index;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        try {
            index.add(entry_from_json(j));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    });
    index.seal();
    return index;
}

} // namespace snt
