#include "smrag/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace smrag {

// ---------------------------------------------------------------- corpus

void Corpus::add(Passage p) {
    if (trim(p.text).empty())
        throw DataError("passage '" + p.id + "' at record " + std::to_string(passages_.size()) + " has empty text");
    if (id_index_.contains(p.id)) throw DataError("duplicate passage id '" + p.id + "'");
    id_index_.emplace(p.id, passages_.size());
    passages_.push_back(std::move(p));
}

const Passage* Corpus::find(std::string_view id) const {
    auto it = id_index_.find(std::string(id));
    return it == id_index_.end() ? nullptr : &passages_[it->second];
}

std::size_t Corpus::position_of(std::string_view id) const {
    auto it = id_index_.find(std::string(id));
    if (it == id_index_.end()) throw DataError("unknown passage id '" + std::string(id) + "'");
    return it->second;
}

Corpus ingest_corpus(const std::vector<json>& records) {
    Corpus corpus;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const json& r = records[i];
        if (!r.is_object() || !r.contains("id") || !r.contains("text"))
            throw DataError("record " + std::to_string(i) + " lacks id or text");
        Passage p;
        try {
            from_json(r, p);
        } catch (const json::exception& e) {
            throw DataError("record " + std::to_string(i) + ": " + e.what());
        }
        if (trim(p.text).empty()) throw DataError("record " + std::to_string(i) + " has empty text");
        corpus.add(std::move(p));
    }
    return corpus;
}

Corpus ingest_corpus(std::istream& jsonl) {
    std::vector<json> records;
    for (auto& r : read_jsonl(jsonl)) records.push_back(std::move(r.value));
    return ingest_corpus(records);
}

Corpus load_corpus_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus " + path.string());
    return ingest_corpus(in);
}

// ------------------------------------------------------------- tokenizer

namespace {

// Decodes one UTF-8 code point starting at i; invalid bytes decode as
// U+FFFD and consume one byte.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
    const auto c = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (c < 0x80) {
        ++i;
        return c;
    }
    int len = 0;
    char32_t cp = 0;
    if ((c & 0xE0) == 0xC0) { len = 2; cp = c & 0x1F; }
    else if ((c & 0xF0) == 0xE0) { len = 3; cp = c & 0x0F; }
    else if ((c & 0xF8) == 0xF0) { len = 4; cp = c & 0x07; }
    else { ++i; return 0xFFFD; }
    for (int k = 1; k < len; ++k) {
        const int b = cont(static_cast<std::size_t>(k));
        if (b < 0) { ++i; return 0xFFFD; }
        cp = (cp << 6) | static_cast<char32_t>(b);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

bool is_separator(char32_t cp) {
    if (cp < 0x80) return !std::isalnum(static_cast<unsigned char>(cp));
    if (cp <= 0xBF) return true;                      // C1 controls, NBSP, Latin-1 punctuation
    if (cp == 0xD7 || cp == 0xF7) return true;        // multiplication, division signs
    if (cp >= 0x2000 && cp <= 0x2BFF) return true;    // general punctuation .. misc symbols
    if (cp >= 0x3000 && cp <= 0x303F) return true;    // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return true;
    if (cp == 0xFEFF || cp == 0xFFFD) return true;
    return false;
}

char32_t lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;  // Latin-1 capitals
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> terms;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = decode_utf8(text, i);
        if (is_separator(cp)) {
            if (!current.empty()) terms.push_back(std::move(current));
            current.clear();
        } else {
            append_utf8(current, lower(cp));
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

// ---------------------------------------------------------------- ranked

std::vector<std::string> RankedList::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

namespace {

struct Scored {
    std::size_t pos;
    double score;
};

// Descending score, then ascending position.
RankedList top_k(std::vector<Scored> scored, std::size_t k, const std::vector<std::string>& ids) {
    auto better = [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.pos < b.pos;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    RankedList out;
    out.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.entries.push_back({ids[scored[i].pos], scored[i].score});
    return out;
}

}  // namespace

// ------------------------------------------------------------------ bm25

Bm25Index Bm25Index::build(const Corpus& corpus, Bm25Params params) {
    Bm25Index index;
    index.params_ = params;
    index.doc_lengths_.reserve(corpus.size());
    index.doc_ids_.reserve(corpus.size());
    std::size_t total = 0;
    for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
        const Passage& p = corpus.at(pos);
        const auto terms = tokenize(p.indexed_text());
        std::map<std::string, std::size_t> counts;
        for (const auto& t : terms) ++counts[t];
        for (auto& [term, tf] : counts) index.postings_[term].push_back({pos, tf});
        index.doc_lengths_.push_back(terms.size());
        index.doc_ids_.push_back(p.id);
        total += terms.size();
    }
    index.avg_doc_length_ = corpus.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(corpus.size());
    return index;
}

const std::vector<Posting>* Bm25Index::postings(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    return it == postings_.end() ? nullptr : &it->second;
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
    const auto* p = postings(term);
    return p ? p->size() : 0;
}

double Bm25Index::idf(std::string_view term) const {
    const double n = static_cast<double>(doc_count());
    const double df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Index::term_weight(double idf, std::size_t tf, std::size_t doc_len) const {
    const double f = static_cast<double>(tf);
    const double len_ratio = avg_doc_length_ > 0.0 ? static_cast<double>(doc_len) / avg_doc_length_ : 0.0;
    return idf * (f * (params_.k1 + 1.0)) / (f + params_.k1 * (1.0 - params_.b + params_.b * len_ratio));
}

RankedList Bm25Index::search(std::string_view query, std::size_t k) const {
    if (k == 0) return {};
    // Every query-term occurrence contributes, so a repeated query term
    // counts once per repetition.
    std::unordered_map<std::size_t, double> acc;
    for (const auto& term : tokenize(query)) {
        const auto* plist = postings(term);
        if (!plist) continue;
        const double w_idf = idf(term);
        for (const auto& p : *plist) acc[p.doc] += term_weight(w_idf, p.tf, doc_lengths_[p.doc]);
    }
    std::vector<Scored> scored;
    scored.reserve(acc.size());
    for (const auto& [doc, s] : acc)
        if (s > 0.0) scored.push_back({doc, s});
    return top_k(std::move(scored), k, doc_ids_);
}

double Bm25Index::score(std::string_view query, std::size_t doc) const {
    double s = 0.0;
    for (const auto& term : tokenize(query)) {
        const auto* plist = postings(term);
        if (!plist) continue;
        auto it = std::lower_bound(plist->begin(), plist->end(), doc,
                                   [](const Posting& p, std::size_t d) { return p.doc < d; });
        if (it != plist->end() && it->doc == doc) s += term_weight(idf(term), it->tf, doc_lengths_[doc]);
    }
    return s;
}

json Bm25Index::to_snapshot() const {
    json postings = json::object();
    std::map<std::string, const std::vector<Posting>*> sorted;
    for (const auto& [term, plist] : postings_) sorted.emplace(term, &plist);
    for (const auto& [term, plist] : sorted) {
        json arr = json::array();
        for (const auto& p : *plist) arr.push_back({p.doc, p.tf});
        postings[term] = std::move(arr);
    }
    return json{{"magic", kBm25SnapshotMagic},
                {"version", kBm25SnapshotVersion},
                {"params", {{"k1", params_.k1}, {"b", params_.b}}},
                {"doc_count", doc_count()},
                {"doc_ids", doc_ids_},
                {"doc_lengths", doc_lengths_},
                {"postings", std::move(postings)}};
}

Bm25Index Bm25Index::from_snapshot(const json& snapshot) {
    if (!snapshot.is_object() || snapshot.value("magic", std::string{}) != kBm25SnapshotMagic)
        throw DataError("not a BM25 index snapshot");
    const int version = snapshot.value("version", -1);
    if (version != kBm25SnapshotVersion)
        throw DataError("index snapshot version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kBm25SnapshotVersion) + ")");
    Bm25Index index;
    try {
        index.params_.k1 = snapshot.at("params").at("k1").get<double>();
        index.params_.b = snapshot.at("params").at("b").get<double>();
        index.doc_ids_ = snapshot.at("doc_ids").get<std::vector<std::string>>();
        index.doc_lengths_ = snapshot.at("doc_lengths").get<std::vector<std::size_t>>();
        for (const auto& [term, arr] : snapshot.at("postings").items()) {
            auto& plist = index.postings_[term];
            for (const auto& e : arr) plist.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt index snapshot: ") + e.what());
    }
    if (index.doc_ids_.size() != index.doc_lengths_.size() ||
        snapshot.value("doc_count", std::size_t{0}) != index.doc_ids_.size())
        throw DataError("corrupt index snapshot: inconsistent document counts");
    const std::size_t total = std::accumulate(index.doc_lengths_.begin(), index.doc_lengths_.end(), std::size_t{0});
    index.avg_doc_length_ =
        index.doc_lengths_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(index.doc_lengths_.size());
    return index;
}

void Bm25Index::save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_snapshot().dump() + "\n");
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    json snapshot;
    try {
        snapshot = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw DataError("cannot parse index snapshot " + path.string() + ": " + e.what());
    }
    return from_snapshot(snapshot);
}

// ----------------------------------------------------------------- dense

namespace {

void l2_normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
}

double norm_of(const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    return std::sqrt(n);
}

}  // namespace

VocabularyEmbedder::VocabularyEmbedder(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) slot_.emplace(vocabulary_[i], i);
}

std::vector<double> VocabularyEmbedder::embed(std::string_view text) const {
    std::vector<double> v(vocabulary_.size(), 0.0);
    for (const auto& t : tokenize(text))
        if (auto it = slot_.find(t); it != slot_.end()) v[it->second] += 1.0;
    l2_normalize(v);
    return v;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw DataError("embedding dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(std::string_view text) const {
    std::vector<double> v(dim_, 0.0);
    for (const auto& t : tokenize(text)) v[fnv1a64(t) % dim_] += 1.0;
    l2_normalize(v);
    return v;
}

DenseIndex::DenseIndex(std::shared_ptr<const EmbeddingBackend> backend, const Corpus& corpus)
    : backend_(std::move(backend)) {
    ids_.reserve(corpus.size());
    vectors_.reserve(corpus.size());
    for (const auto& p : corpus.passages()) {
        auto v = backend_->embed(p.indexed_text());
        if (v.size() != backend_->dim())
            throw DataError("embedding backend returned wrong dimension for '" + p.id + "'");
        for (double x : v)
            if (!std::isfinite(x)) throw DataError("embedding backend returned a non-finite value for '" + p.id + "'");
        const double n = norm_of(v);
        if (n == 0.0) zero_norm_ids_.push_back(p.id);
        ids_.push_back(p.id);
        norms_.push_back(n);
        vectors_.push_back(std::move(v));
    }
}

RankedList DenseIndex::search(std::string_view query, std::size_t k, std::vector<std::string>* warnings) const {
    if (k == 0 || vectors_.empty()) return {};
    const auto q = backend_->embed(query);
    const double qn = norm_of(q);
    if (warnings)
        for (const auto& id : zero_norm_ids_) warnings->push_back("zero-norm embedding for passage '" + id + "'");
    if (qn == 0.0) {
        if (warnings) warnings->push_back("zero-norm embedding for query");
        return {};
    }
    std::vector<Scored> scored;
    scored.reserve(vectors_.size());
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        if (norms_[i] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * vectors_[i][d];
        scored.push_back({i, dot / (qn * norms_[i])});
    }
    return top_k(std::move(scored), k, ids_);
}

RankedList dense_search(const EmbeddingBackend& backend, const Corpus& corpus, std::string_view query,
                        std::size_t k, std::vector<std::string>* warnings) {
    // Non-owning view of the caller's backend for the lifetime of this call.
    std::shared_ptr<const EmbeddingBackend> view(&backend, [](const EmbeddingBackend*) {});
    return DenseIndex(view, corpus).search(query, k, warnings);
}

// --------------------------------------------------------------- metrics

namespace {

std::size_t gold_found(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw DataError("undefined recall: empty gold set");
    std::size_t found = 0;
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i)
        if (gold.contains(ranked.entries[i].id)) ++found;
    return found;
}

}  // namespace

double recall_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k) {
    return static_cast<double>(gold_found(ranked, gold, k)) / static_cast<double>(gold.size());
}

double hit_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k) {
    return gold_found(ranked, gold, k) > 0 ? 1.0 : 0.0;
}

void to_json(json& j, const RankedList& r) {
    j = json::array();
    for (const auto& e : r.entries) j.push_back({{"id", e.id}, {"score", e.score}});
}

void from_json(const json& j, RankedList& r) {
    r.entries.clear();
    for (const auto& e : j) r.entries.push_back({e.at("id").get<std::string>(), e.at("score").get<double>()});
}

}  // namespace smrag
