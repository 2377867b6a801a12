#pragma once

// Independent reference implementations used only by tests. None of these
// call into the library code they check.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// ASCII-only tokenizer: lowercase alphanumeric runs.
inline std::vector<std::string> words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Doc {
    std::string id;
    std::string text;
};

/// BM25 by direct document scan: df and tf recounted for every query.
/// Returns (id, score) for nonzero scores, ordered by score descending then
/// input position.
inline std::vector<std::pair<std::string, double>> bm25_rank(const std::vector<Doc>& docs, const std::string& query,
                                                             double k1 = 1.2, double b = 0.75) {
    const double n = static_cast<double>(docs.size());
    std::vector<std::vector<std::string>> toks;
    double total_len = 0;
    for (const auto& d : docs) {
        toks.push_back(words(d.text));
        total_len += static_cast<double>(toks.back().size());
    }
    const double avgdl = docs.empty() ? 0.0 : total_len / n;
    const auto q = words(query);

    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double score = 0.0;
        for (const auto& term : q) {
            double df = 0;
            for (const auto& t : toks)
                if (std::find(t.begin(), t.end(), term) != t.end()) df += 1;
            const double tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), term));
            if (tf == 0) continue;
            const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
            const double len = static_cast<double>(toks[i].size());
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl));
        }
        if (score > 0) scored.push_back({score, i});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [s, i] : scored) out.push_back({docs[i].id, s});
    return out;
}

/// Best path through a full score table by enumerating every path.
/// table[step][prefix-code] lists continuation scores; here the table is a
/// function from a prefix to its continuations.
template <typename F>
std::pair<std::vector<std::size_t>, double> best_path(F continuations, std::size_t max_steps) {
    std::vector<std::size_t> best;
    double best_score = -INFINITY;
    bool found = false;
    std::vector<std::size_t> path;
    auto walk = [&](auto&& self, double total) -> void {
        const std::vector<double> opts = path.size() < max_steps ? continuations(path) : std::vector<double>{};
        if (opts.empty()) {
            if (path.empty()) return;
            if (!found || total > best_score || (total == best_score && path < best)) {
                best = path;
                best_score = total;
                found = true;
            }
            return;
        }
        for (std::size_t i = 0; i < opts.size(); ++i) {
            path.push_back(i);
            self(self, total + opts[i]);
            path.pop_back();
        }
    };
    walk(walk, 0.0);
    return {best, best_score};
}

/// Softmax written out term by term.
inline std::vector<double> softmax(const std::vector<double>& lp) {
    double m = -INFINITY;
    for (double v : lp) m = std::max(m, v);
    std::vector<double> e;
    double z = 0;
    for (double v : lp) {
        e.push_back(std::isinf(v) ? 0.0 : std::exp(v - m));
        z += e.back();
    }
    for (double& v : e) v /= z;
    return e;
}

inline double recall(const std::vector<std::string>& ranked, const std::set<std::string>& gold, std::size_t k) {
    std::size_t found = 0;
    for (const auto& g : gold) {
        for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
            if (ranked[i] == g) {
                ++found;
                break;
            }
        }
    }
    return static_cast<double>(found) / static_cast<double>(gold.size());
}

}  // namespace oracle
