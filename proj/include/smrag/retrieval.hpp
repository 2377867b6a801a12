#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "smrag/core.hpp"
#include "smrag/jsonl.hpp"

namespace smrag {

/// Passages in ingestion order with an id lookup. Immutable once built.
class Corpus {
public:
    Corpus() = default;

    /// Appends a passage. Rejects duplicate ids and empty text.
    void add(Passage p);

    const Passage* find(std::string_view id) const;
    std::size_t position_of(std::string_view id) const;  // throws if absent

    std::size_t size() const noexcept { return passages_.size(); }
    bool empty() const noexcept { return passages_.empty(); }
    const std::vector<Passage>& passages() const noexcept { return passages_; }
    const Passage& at(std::size_t pos) const { return passages_.at(pos); }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> id_index_;
};

/// Builds a corpus from {id, title?, text} records. Errors name the
/// duplicate id or the record index (0-based) with empty text.
Corpus ingest_corpus(const std::vector<json>& records);
Corpus ingest_corpus(std::istream& jsonl);
Corpus load_corpus_file(const std::filesystem::path& path);

/// Lowercases and splits on every non-alphanumeric run. ASCII letters and
/// digits are word characters; non-ASCII punctuation and spaces (dashes,
/// quotes, NBSP, ideographic punctuation) separate terms; other non-ASCII
/// code points are kept as word characters.
std::vector<std::string> tokenize(std::string_view text);

struct RankedEntry {
    std::string id;
    double score = 0.0;

    bool operator==(const RankedEntry&) const = default;
};

/// Descending by score; ids unique.
struct RankedList {
    std::vector<RankedEntry> entries;

    std::vector<std::string> ids() const;
    bool empty() const noexcept { return entries.empty(); }
    std::size_t size() const noexcept { return entries.size(); }

    bool operator==(const RankedList&) const = default;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    bool operator==(const Bm25Params&) const = default;
};

struct Posting {
    std::size_t doc = 0;  // passage position
    std::size_t tf = 0;

    bool operator==(const Posting&) const = default;
};

inline constexpr std::string_view kBm25SnapshotMagic = "smrag-bm25-index";
inline constexpr int kBm25SnapshotVersion = 1;

class Bm25Index {
public:
    static Bm25Index build(const Corpus& corpus, Bm25Params params = {});

    /// Top-k by BM25; zero-score documents excluded; ties by ascending position.
    RankedList search(std::string_view query, std::size_t k) const;

    /// BM25 score of a single document (0 when it has no query term).
    double score(std::string_view query, std::size_t doc) const;

    double idf(std::string_view term) const;
    std::size_t document_frequency(std::string_view term) const;

    std::size_t doc_count() const noexcept { return doc_lengths_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const std::vector<std::size_t>& doc_lengths() const noexcept { return doc_lengths_; }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    const Bm25Params& params() const noexcept { return params_; }
    const std::vector<Posting>* postings(std::string_view term) const;
    std::size_t vocabulary_size() const noexcept { return postings_.size(); }

    json to_snapshot() const;
    static Bm25Index from_snapshot(const json& snapshot);
    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

    bool operator==(const Bm25Index&) const = default;

private:
    double term_weight(double idf, std::size_t tf, std::size_t doc_len) const;

    Bm25Params params_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::size_t> doc_lengths_;
    std::vector<std::string> doc_ids_;
    double avg_doc_length_ = 0.0;
};

inline Bm25Index build_bm25(const Corpus& corpus, Bm25Params params = {}) {
    return Bm25Index::build(corpus, params);
}

inline RankedList bm25_search(const Bm25Index& index, std::string_view query, std::size_t k) {
    return index.search(query, k);
}

/// Text-to-vector contract. Implementations must be deterministic and
/// thread-safe.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// L2-normalized term-count vector over a fixed vocabulary.
class VocabularyEmbedder final : public EmbeddingBackend {
public:
    explicit VocabularyEmbedder(std::vector<std::string> vocabulary);
    std::size_t dim() const override { return vocabulary_.size(); }
    std::vector<double> embed(std::string_view text) const override;

private:
    std::vector<std::string> vocabulary_;
    std::unordered_map<std::string, std::size_t> slot_;
};

/// L2-normalized term counts hashed (FNV-1a) into `dim` buckets. A
/// deterministic stand-in for a neural encoder on arbitrary corpora.
class HashingEmbedder final : public EmbeddingBackend {
public:
    explicit HashingEmbedder(std::size_t dim = 256);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(std::string_view text) const override;

private:
    std::size_t dim_;
};

/// Brute-force cosine search over precomputed passage embeddings.
class DenseIndex {
public:
    DenseIndex(std::shared_ptr<const EmbeddingBackend> backend, const Corpus& corpus);

    /// Zero-norm passages and queries are excluded and reported in `warnings`.
    RankedList search(std::string_view query, std::size_t k, std::vector<std::string>* warnings = nullptr) const;

    const std::vector<std::string>& zero_norm_ids() const noexcept { return zero_norm_ids_; }

private:
    std::shared_ptr<const EmbeddingBackend> backend_;
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> vectors_;
    std::vector<double> norms_;
    std::vector<std::string> zero_norm_ids_;
};

RankedList dense_search(const EmbeddingBackend& backend, const Corpus& corpus, std::string_view query,
                        std::size_t k, std::vector<std::string>* warnings = nullptr);

/// |gold ∩ top-k| / |gold|. Throws on empty gold.
double recall_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k);

/// 1 if any gold id appears in the top k. Throws on empty gold.
double hit_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k);

/// Query-to-passages contract the pipeline retrieves through.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual RankedList retrieve(std::string_view query, std::size_t k) const = 0;
    virtual std::string name() const = 0;
};

class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(std::shared_ptr<const Bm25Index> index) : index_(std::move(index)) {}
    RankedList retrieve(std::string_view query, std::size_t k) const override { return index_->search(query, k); }
    std::string name() const override { return "bm25"; }

private:
    std::shared_ptr<const Bm25Index> index_;
};

class DenseRetriever final : public Retriever {
public:
    explicit DenseRetriever(std::shared_ptr<const DenseIndex> index) : index_(std::move(index)) {}
    RankedList retrieve(std::string_view query, std::size_t k) const override { return index_->search(query, k); }
    std::string name() const override { return "dense"; }

private:
    std::shared_ptr<const DenseIndex> index_;
};

void to_json(json& j, const RankedList& r);
void from_json(const json& j, RankedList& r);

}  // namespace smrag
