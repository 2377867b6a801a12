#include "smrag/reflection.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace smrag {

namespace {

constexpr std::array<TokenEntry, 13> kTable{{
    {ReflectionToken::retrieve, TokenGroup::retrieval3, "[Retrieve]"},
    {ReflectionToken::no_retrieve, TokenGroup::retrieval3, "[No Retrieve]"},
    {ReflectionToken::continue_to_use_evidence, TokenGroup::retrieval3, "[Continue to Use Evidence]"},
    {ReflectionToken::relevant, TokenGroup::relevance, "[Relevant]"},
    {ReflectionToken::non_relevant, TokenGroup::relevance, "[Non Relevant]"},
    {ReflectionToken::fully_supported, TokenGroup::groundedness, "[Fully supported]"},
    {ReflectionToken::partially_supported, TokenGroup::groundedness, "[Partially supported]"},
    {ReflectionToken::no_support, TokenGroup::groundedness, "[No support]"},
    {ReflectionToken::utility_1, TokenGroup::utility, "[Utility:1]"},
    {ReflectionToken::utility_2, TokenGroup::utility, "[Utility:2]"},
    {ReflectionToken::utility_3, TokenGroup::utility, "[Utility:3]"},
    {ReflectionToken::utility_4, TokenGroup::utility, "[Utility:4]"},
    {ReflectionToken::utility_5, TokenGroup::utility, "[Utility:5]"},
}};

struct Alias {
    std::string_view surface;
    ReflectionToken token;
};

// Surface forms seen in labeling prompts and judge replies.
constexpr std::array<Alias, 7> kAliases{{
    {"[Irrelevant]", ReflectionToken::non_relevant},
    {"[No support / Contradictory]", ReflectionToken::no_support},
    {"[Continue to use evidence]", ReflectionToken::continue_to_use_evidence},
    {"[Fully Supported]", ReflectionToken::fully_supported},
    {"[Partially Supported]", ReflectionToken::partially_supported},
    {"[Retrieval]", ReflectionToken::retrieve},
    {"[No Retrieval]", ReflectionToken::no_retrieve},
}};

constexpr std::array<ReflectionToken, 3> kRetrieval3{
    ReflectionToken::retrieve, ReflectionToken::no_retrieve, ReflectionToken::continue_to_use_evidence};
constexpr std::array<ReflectionToken, 2> kRelevance{ReflectionToken::relevant, ReflectionToken::non_relevant};
constexpr std::array<ReflectionToken, 3> kGroundedness{
    ReflectionToken::fully_supported, ReflectionToken::partially_supported, ReflectionToken::no_support};
constexpr std::array<ReflectionToken, 5> kUtility{ReflectionToken::utility_1, ReflectionToken::utility_2,
                                                  ReflectionToken::utility_3, ReflectionToken::utility_4,
                                                  ReflectionToken::utility_5};

}  // namespace

std::span<const TokenEntry> token_table() noexcept { return kTable; }

std::string_view surface(ReflectionToken token) noexcept {
    return kTable[static_cast<std::size_t>(token)].surface;
}

TokenGroup group_of(ReflectionToken token) noexcept {
    return kTable[static_cast<std::size_t>(token)].group;
}

std::span<const ReflectionToken> group_tokens(TokenGroup group) noexcept {
    switch (group) {
    case TokenGroup::retrieval3: return kRetrieval3;
    case TokenGroup::relevance: return kRelevance;
    case TokenGroup::groundedness: return kGroundedness;
    case TokenGroup::utility: return kUtility;
    }
    return {};
}

std::vector<std::string> group_surfaces(TokenGroup group) {
    std::vector<std::string> out;
    for (auto t : group_tokens(group)) out.emplace_back(surface(t));
    return out;
}

const char* to_string(TokenGroup group) noexcept {
    switch (group) {
    case TokenGroup::retrieval3: return "retrieval3";
    case TokenGroup::relevance: return "relevance";
    case TokenGroup::groundedness: return "groundedness";
    case TokenGroup::utility: return "utility";
    }
    return "?";
}

TokenGroup token_group_from_string(std::string_view s) {
    for (auto g : {TokenGroup::retrieval3, TokenGroup::relevance, TokenGroup::groundedness, TokenGroup::utility})
        if (s == to_string(g)) return g;
    throw DataError("unknown token group '" + std::string(s) + "'");
}

std::optional<ReflectionToken> lookup_token(std::string_view bracketed) {
    for (const auto& e : kTable)
        if (e.surface == bracketed) return e.token;
    for (const auto& a : kAliases)
        if (a.surface == bracketed) return a.token;
    return std::nullopt;
}

double GroupScores::prob(ReflectionToken token) const {
    const auto tokens = group_tokens(group);
    const auto it = std::find(tokens.begin(), tokens.end(), token);
    if (it == tokens.end() || probs.size() != tokens.size())
        throw DataError(std::string("token ") + std::string(surface(token)) + " not in group " + to_string(group));
    return probs[static_cast<std::size_t>(it - tokens.begin())];
}

ReflectionToken GroupScores::argmax() const {
    const auto tokens = group_tokens(group);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return tokens[best];
}

GroupScores normalize_group(const std::map<ReflectionToken, double>& raw, TokenGroup group) {
    const auto tokens = group_tokens(group);
    for (const auto& [tok, lp] : raw) {
        if (group_of(tok) != group)
            throw DataError(std::string(surface(tok)) + " does not belong to group " + to_string(group));
        if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
            throw DataError(std::string("non-finite log-probability for ") + std::string(surface(tok)));
    }

    std::vector<double> lps;
    lps.reserve(tokens.size());
    for (auto t : tokens) {
        auto it = raw.find(t);
        lps.push_back(it == raw.end() ? kNoMass : it->second);
    }
    const double peak = *std::max_element(lps.begin(), lps.end());
    if (peak == kNoMass)
        throw DataError(std::string("no probability mass to normalize in group ") + to_string(group));

    GroupScores gs{group, {}};
    gs.probs.resize(lps.size());
    double total = 0.0;
    for (std::size_t i = 0; i < lps.size(); ++i) {
        gs.probs[i] = lps[i] == kNoMass ? 0.0 : std::exp(lps[i] - peak);
        total += gs.probs[i];
    }
    for (auto& p : gs.probs) p /= total;
    return gs;
}

GroupScores normalize_group(const std::map<std::string, double>& raw, TokenGroup group) {
    std::map<ReflectionToken, double> keyed;
    for (const auto& [s, lp] : raw) {
        auto tok = lookup_token(s);
        if (!tok) throw DataError("unknown reflection token '" + s + "'");
        keyed[*tok] = lp;
    }
    return normalize_group(keyed, group);
}

double desirable_score(const GroupScores& gs) {
    switch (gs.group) {
    case TokenGroup::relevance: return gs.prob(ReflectionToken::relevant);
    case TokenGroup::groundedness: return gs.prob(ReflectionToken::fully_supported);
    case TokenGroup::utility: return gs.prob(ReflectionToken::utility_5);
    case TokenGroup::retrieval3: break;
    }
    throw DataError("retrieval3 is a decision group and has no desirable score");
}

double weighted_score(const GroupScores& gs) {
    switch (gs.group) {
    case TokenGroup::relevance: return gs.prob(ReflectionToken::relevant);
    case TokenGroup::groundedness:
        return gs.prob(ReflectionToken::fully_supported) + 0.5 * gs.prob(ReflectionToken::partially_supported);
    case TokenGroup::utility: {
        double credit = 0.0;
        for (std::size_t i = 0; i < gs.probs.size(); ++i) credit += gs.probs[i] * static_cast<double>(i) / 4.0;
        return credit;
    }
    case TokenGroup::retrieval3: break;
    }
    throw DataError("retrieval3 is a decision group and has no desirable score");
}

double group_score(const GroupScores& gs, ScoringMode mode) {
    return mode == ScoringMode::desirable ? desirable_score(gs) : weighted_score(gs);
}

double compose_score(double p_norm, double s_rel, double s_grd, double s_utl, const ScoringWeights& w) {
    return p_norm + w.relevance * s_rel + w.groundedness * s_grd + w.utility * s_utl;
}

double CandidateScore::recompute(const ScoringWeights& w) const {
    return compose_score(p_norm, s_rel.value_or(0.0), s_grd.value_or(0.0), s_utl, w);
}

bool CandidateScore::consistent_with(const ScoringWeights& w, double tol) const {
    return std::abs(recompute(w) - composite) <= tol;
}

CandidateScore make_candidate_score(double p_norm, std::optional<double> s_rel, std::optional<double> s_grd,
                                    double s_utl, const ScoringWeights& w) {
    CandidateScore s;
    s.p_norm = p_norm;
    s.s_rel = s_rel;
    s.s_grd = s_grd;
    s.s_utl = s_utl;
    s.composite = s.recompute(w);
    return s;
}

std::string AnnotatedOutput::plain_text() const {
    std::string out;
    for (const auto& s : segments) out += s.text;
    return out;
}

std::size_t AnnotatedOutput::token_count() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.tokens.size();
    return n;
}

AnnotatedOutput parse_annotated(std::string_view text) {
    AnnotatedOutput out;
    out.segments.emplace_back();
    bool closed = false;

    auto current = [&]() -> AnnotatedSegment& { return out.segments.back(); };
    auto open_new = [&](std::size_t at) {
        AnnotatedSegment seg;
        seg.begin = at;
        out.segments.push_back(std::move(seg));
        closed = false;
    };

    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '[') {
            const auto close = text.find(']', i + 1);
            if (close != std::string_view::npos) {
                const auto span = text.substr(i, close - i + 1);
                if (auto tok = lookup_token(span)) {
                    // Only utility tokens may trail a closed segment.
                    if (closed && group_of(*tok) != TokenGroup::utility) open_new(i);
                    current().tokens.push_back({*tok, i});
                    if (group_of(*tok) == TokenGroup::groundedness) closed = true;
                    i = close + 1;
                    current().end = i;
                    continue;
                }
            }
        }
        if (closed) open_new(i);
        current().text.push_back(text[i]);
        ++i;
        current().end = i;
    }
    return out;
}

std::string strip_tokens(std::string_view text) {
    return parse_annotated(text).plain_text();
}

void to_json(json& j, const GroupScores& gs) {
    json probs = json::object();
    const auto tokens = group_tokens(gs.group);
    for (std::size_t i = 0; i < tokens.size() && i < gs.probs.size(); ++i)
        probs[std::string(surface(tokens[i]))] = gs.probs[i];
    j = json{{"group", to_string(gs.group)}, {"probs", probs}};
}

void from_json(const json& j, GroupScores& gs) {
    gs.group = token_group_from_string(j.at("group").get<std::string>());
    const auto& probs = j.at("probs");
    gs.probs.clear();
    for (auto t : group_tokens(gs.group)) gs.probs.push_back(probs.at(std::string(surface(t))).get<double>());
}

void to_json(json& j, const CandidateScore& s) {
    j = json{{"p_norm", s.p_norm},
             {"s_rel", s.s_rel ? json(*s.s_rel) : json(nullptr)},
             {"s_grd", s.s_grd ? json(*s.s_grd) : json(nullptr)},
             {"s_utl", s.s_utl},
             {"composite", s.composite},
             {"p_unavailable", s.p_unavailable}};
}

void from_json(const json& j, CandidateScore& s) {
    s.p_norm = j.at("p_norm").get<double>();
    s.s_rel = j.at("s_rel").is_null() ? std::nullopt : std::optional<double>(j.at("s_rel").get<double>());
    s.s_grd = j.at("s_grd").is_null() ? std::nullopt : std::optional<double>(j.at("s_grd").get<double>());
    s.s_utl = j.at("s_utl").get<double>();
    s.composite = j.at("composite").get<double>();
    s.p_unavailable = j.value("p_unavailable", false);
}

}  // namespace smrag
