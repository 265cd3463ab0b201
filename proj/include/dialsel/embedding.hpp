#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dialsel/corpus.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/rng.hpp"
#include "dialsel/text.hpp"

namespace dialsel {

using Vec = std::vector<double>;

inline void check_finite(const Vec& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw DataError(std::string(what) + ": non-finite value");
    }
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Vec& v) { return std::sqrt(dot(v, v)); }

// Cosine similarity. Returns 0 when either vector has zero norm; that is the
// neutral value for both the representativeness and redundancy terms.
inline double cosine(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw DataError("cosine: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
    }
    check_finite(a, "cosine");
    check_finite(b, "cosine");
    double na = l2_norm(a);
    double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline Vec l2_normalized(Vec v) {
    double n = l2_norm(v);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    }
    return v;
}

// Component-wise arithmetic mean of the per-query vectors.
inline Vec trajectory_embedding(const std::vector<Vec>& query_vectors) {
    if (query_vectors.empty()) {
        throw DataError("trajectory_embedding: empty query vector list");
    }
    const std::size_t dim = query_vectors.front().size();
    Vec mean(dim, 0.0);
    for (const Vec& q : query_vectors) {
        if (q.size() != dim) {
            throw DataError("trajectory_embedding: mixed dimensions");
        }
        for (std::size_t i = 0; i < dim; ++i) mean[i] += q[i];
    }
    for (double& x : mean) x /= static_cast<double>(query_vectors.size());
    return mean;
}

enum class EncoderKind { hash, precomputed, remote };

struct EncoderSpec {
    EncoderKind kind = EncoderKind::hash;
    // hash
    std::size_t dim = 64;
    std::uint64_t seed = 0;
    // precomputed
    std::string file;
    // remote
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    std::size_t batch_size = 16;
    unsigned max_retries = 3;
    unsigned backoff_ms = 250;
    // aggregation
    bool normalize_before_mean = false;
};

inline std::string encoder_kind_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::hash: return "hash";
        case EncoderKind::precomputed: return "precomputed";
        case EncoderKind::remote: return "remote";
    }
    return "?";
}

// One vector per user turn, in turn order.
class QueryEncoder {
public:
    virtual ~QueryEncoder() = default;
    virtual std::vector<Vec> encode_queries(const Dialogue& d) = 0;
    virtual std::string fingerprint() const = 0;
    virtual bool deterministic() const { return true; }
};

// Seeded feature hashing: every whitespace-or-punctuation token picks an
// index and a sign from a stable 64-bit hash, contributions are summed and
// the result L2-normalized (zero vector when the text has no tokens).
// Deterministic desk-scale stand-in for a sentence encoder, not a semantic
// model.
class HashQueryEncoder : public QueryEncoder {
public:
    HashQueryEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim_ == 0) throw UsageError("hash encoder: dimension must be >= 1");
    }

    Vec encode_text(std::string_view text) const {
        Vec v(dim_, 0.0);
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i == start) break;
            std::uint64_t h = fnv1a64(text.substr(start, i - start)) ^ seed_;
            h = splitmix64(h);
            std::size_t idx = static_cast<std::size_t>(h % dim_);
            v[idx] += (h >> 63) ? 1.0 : -1.0;
        }
        return l2_normalized(std::move(v));
    }

    std::vector<Vec> encode_queries(const Dialogue& d) override {
        std::vector<Vec> out;
        out.reserve(d.turns.size());
        for (const Turn& t : d.turns) out.push_back(encode_text(t.query));
        return out;
    }

    std::string fingerprint() const override {
        return "hash:d" + std::to_string(dim_) + ":s" + std::to_string(seed_);
    }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Vectors loaded from a JSONL file of {"dialogue_id", "turn", "vector"}
// records, keyed by (dialogue_id, 1-based turn index).
class PrecomputedQueryEncoder : public QueryEncoder {
public:
    explicit PrecomputedQueryEncoder(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw BackendError("precomputed vectors: cannot open " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.contains("dialogue_id") ||
                !rec.contains("turn") || !rec.contains("vector")) {
                throw BackendError("precomputed vectors: bad record at line " +
                                   std::to_string(line_no));
            }
            Vec v = rec["vector"].get<Vec>();
            check_finite(v, "precomputed vector");
            if (dim_ == 0) dim_ = v.size();
            if (v.size() != dim_) {
                throw BackendError("precomputed vectors: dimension mismatch at line " +
                                   std::to_string(line_no));
            }
            table_[{rec["dialogue_id"].get<std::string>(),
                    rec["turn"].get<std::size_t>()}] = std::move(v);
        }
    }

    std::vector<Vec> encode_queries(const Dialogue& d) override {
        std::vector<Vec> out;
        out.reserve(d.turns.size());
        for (std::size_t t = 1; t <= d.turns.size(); ++t) {
            auto it = table_.find({d.id, t});
            if (it == table_.end()) {
                throw BackendError("precomputed vectors: missing vector for (" + d.id +
                                   ", turn " + std::to_string(t) + ")");
            }
            out.push_back(it->second);
        }
        return out;
    }

    std::string fingerprint() const override { return "precomputed:" + path_; }

private:
    std::string path_;
    std::size_t dim_ = 0;
    std::map<std::pair<std::string, std::size_t>, Vec> table_;
};

// Mean of the per-query vectors, optionally normalizing each vector first.
inline Vec dialogue_embedding(const Dialogue& d, QueryEncoder& encoder,
                              bool normalize_before_mean) {
    std::vector<Vec> qs = encoder.encode_queries(d);
    if (normalize_before_mean) {
        for (Vec& q : qs) q = l2_normalized(std::move(q));
    }
    return trajectory_embedding(qs);
}

} // namespace dialsel
