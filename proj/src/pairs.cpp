#include "cpl/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cpl/errors.hpp"

namespace cpl {

namespace {

using ojson = nlohmann::ordered_json;

// Indices of the two candidates under `condition`, in declaration order.
std::array<std::size_t, 2> condition_slots(const CandidateSet& set, Cond condition) {
    std::array<std::size_t, 2> slots{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < set.cands.size(); ++i) {
        if (set.cands[i].condition == condition) {
            if (n == 2) throw UsageError("CandidateSet: more than two candidates for one condition");
            slots[n++] = i;
        }
    }
    if (n != 2) throw UsageError("CandidateSet: expected exactly two candidates per condition");
    return slots;
}

ojson key_json(const UnitKey& key) {
    ojson j;
    j["doc_id"] = key.doc_id;
    j["index"] = key.index;
    return j;
}

UnitKey key_from_json(const ojson& j) {
    return UnitKey{j.at("doc_id").get<std::string>(), j.at("index").get<std::int32_t>()};
}

bool filter_core(std::size_t words_hi, std::size_t words_lo, double score_hi, double score_lo,
                 const FilterConfig& cfg) {
    if (words_hi < cfg.min_words || words_hi > cfg.max_words) return false;
    if (words_lo < cfg.min_words || words_lo > cfg.max_words) return false;
    if (!(score_hi > cfg.min_score) || !(score_lo > cfg.min_score)) return false;
    const double margin = score_hi - score_lo;
    return margin >= cfg.margin_lo && margin <= cfg.margin_hi;
}

}  // namespace

std::optional<IntraPair> label_intra(const CandidateSet& set, Cond condition) {
    const auto slots = condition_slots(set, condition);
    const Candidate& a = set.cands[slots[0]];
    const Candidate& b = set.cands[slots[1]];
    if (a.score == b.score) return std::nullopt;
    const Candidate& hi = a.score > b.score ? a : b;
    const Candidate& lo = a.score > b.score ? b : a;
    IntraPair pair;
    pair.key = set.key;
    pair.condition = condition;
    pair.preferred = hi.tokens;
    pair.dispreferred = lo.tokens;
    pair.score_plus = hi.score;
    pair.score_minus = lo.score;
    return pair;
}

std::vector<CrossPair> build_cross_pairs(const CandidateSet& set) {
    const auto s_slots = condition_slots(set, Cond::Sent);
    const auto c_slots = condition_slots(set, Cond::Ctx);

    std::size_t best = 0;
    for (std::size_t i = 1; i < set.cands.size(); ++i) {
        if (set.cands[i].score > set.cands[best].score) best = i;
    }
    const double best_score = set.cands[best].score;
    const Cond winner = set.cands[best].condition;

    // A cross-condition tie for the global best leaves the winner undefined.
    for (std::size_t i = 0; i < set.cands.size(); ++i) {
        if (set.cands[i].score == best_score && set.cands[i].condition != winner) return {};
    }

    const auto& loser_slots = (winner == Cond::Sent) ? c_slots : s_slots;
    const Candidate& r0 = set.cands[loser_slots[0]];
    const Candidate& r1 = set.cands[loser_slots[1]];
    const Candidate& rival_plus = r0.score >= r1.score ? r0 : r1;
    const Candidate& rival_minus = r0.score >= r1.score ? r1 : r0;

    std::vector<CrossPair> out;
    for (const auto& [rival, rank] :
         {std::pair<const Candidate*, RivalRank>{&rival_plus, RivalRank::Plus},
          std::pair<const Candidate*, RivalRank>{&rival_minus, RivalRank::Minus}}) {
        CrossPair pair;
        pair.key = set.key;
        pair.winner_condition = winner;
        pair.best = set.cands[best].tokens;
        pair.rival = rival->tokens;
        pair.rival_rank = rank;
        pair.winner_score = best_score;
        pair.rival_score = rival->score;
        out.push_back(std::move(pair));
    }
    return out;
}

bool passes_filter(const IntraPair& pair, const FilterConfig& cfg) {
    return filter_core(word_count(pair.preferred), word_count(pair.dispreferred), pair.score_plus,
                       pair.score_minus, cfg);
}

bool passes_filter(const CrossPair& pair, const FilterConfig& cfg) {
    return filter_core(word_count(pair.best), word_count(pair.rival), pair.winner_score, pair.rival_score, cfg);
}

std::string_view ablation_name(CrossAblation a) {
    switch (a) {
        case CrossAblation::Full: return "full";
        case CrossAblation::DropWlPlus: return "drop_wl_plus";
        case CrossAblation::DropWlMinus: return "drop_wl_minus";
    }
    return "full";
}

CrossAblation ablation_from_name(std::string_view name) {
    if (name == "full") return CrossAblation::Full;
    if (name == "drop_wl_plus") return CrossAblation::DropWlPlus;
    if (name == "drop_wl_minus") return CrossAblation::DropWlMinus;
    throw ConfigError("unknown ablation '" + std::string(name) + "' (want full|drop_wl_plus|drop_wl_minus)");
}

PairCorpus build_pair_corpus(std::span<const CandidateSet> candidates, const FilterConfig& cfg,
                             CrossAblation ablation) {
    if (cfg.min_words > cfg.max_words) throw ConfigError("FilterConfig: min_words > max_words");
    if (cfg.margin_lo > cfg.margin_hi) throw ConfigError("FilterConfig: margin_lo > margin_hi");

    PairCorpus out;
    out.counts.candidate_sets = candidates.size();
    for (const auto& set : candidates) {
        for (const auto& cand : set.cands) {
            if (std::isnan(cand.score)) {
                throw UsageError("build_pair_corpus: unscored candidate set (" + set.key.doc_id + ", " +
                                 std::to_string(set.key.index) + ")");
            }
        }
        if (auto pair = label_intra(set, Cond::Sent)) {
            ++out.counts.sent_labeled;
            if (passes_filter(*pair, cfg)) {
                out.sent.push_back(std::move(*pair));
                ++out.counts.sent_kept;
            }
        }
        if (auto pair = label_intra(set, Cond::Ctx)) {
            ++out.counts.ctx_labeled;
            if (passes_filter(*pair, cfg)) {
                out.ctx.push_back(std::move(*pair));
                ++out.counts.ctx_kept;
            }
        }
        auto crosses = build_cross_pairs(set);
        if (crosses.empty()) ++out.counts.cross_ties;
        for (auto& pair : crosses) {
            ++out.counts.cross_built;
            if (ablation == CrossAblation::DropWlPlus && pair.rival_rank == RivalRank::Plus) continue;
            if (ablation == CrossAblation::DropWlMinus && pair.rival_rank == RivalRank::Minus) continue;
            if (passes_filter(pair, cfg)) {
                out.cross.push_back(std::move(pair));
                ++out.counts.cross_kept;
            }
        }
    }
    auto by_key = [](const auto& a, const auto& b) { return a.key < b.key; };
    std::stable_sort(out.sent.begin(), out.sent.end(), by_key);
    std::stable_sort(out.ctx.begin(), out.ctx.end(), by_key);
    std::stable_sort(out.cross.begin(), out.cross.end(), by_key);
    return out;
}

void write_pairs_jsonl(const PairCorpus& pairs, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("pairs: cannot write " + path.string());
    auto write_intra = [&](const IntraPair& p) {
        ojson j;
        j["unit"] = key_json(p.key);
        j["kind"] = "intra";
        j["condition"] = std::string(1, static_cast<char>(p.condition));
        j["y_plus"] = p.preferred;
        j["y_minus"] = p.dispreferred;
        j["score_plus"] = p.score_plus;
        j["score_minus"] = p.score_minus;
        os << j.dump() << '\n';
    };
    for (const auto& p : pairs.sent) write_intra(p);
    for (const auto& p : pairs.ctx) write_intra(p);
    for (const auto& p : pairs.cross) {
        ojson j;
        j["unit"] = key_json(p.key);
        j["kind"] = "cross";
        j["winner_condition"] = std::string(1, static_cast<char>(p.winner_condition));
        j["y_plus"] = p.best;
        j["rival"] = p.rival;
        j["rival_rank"] = p.rival_rank == RivalRank::Plus ? "plus" : "minus";
        j["winner_score"] = p.winner_score;
        j["rival_score"] = p.rival_score;
        os << j.dump() << '\n';
    }
}

PairCorpus read_pairs_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("pairs: cannot read " + path.string());
    PairCorpus out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "intra") {
                IntraPair p;
                p.key = key_from_json(j.at("unit"));
                p.condition = j.at("condition").get<std::string>() == "c" ? Cond::Ctx : Cond::Sent;
                p.preferred = j.at("y_plus").get<TokenSeq>();
                p.dispreferred = j.at("y_minus").get<TokenSeq>();
                p.score_plus = j.at("score_plus").get<double>();
                p.score_minus = j.at("score_minus").get<double>();
                (p.condition == Cond::Sent ? out.sent : out.ctx).push_back(std::move(p));
            } else if (kind == "cross") {
                CrossPair p;
                p.key = key_from_json(j.at("unit"));
                p.winner_condition = j.at("winner_condition").get<std::string>() == "c" ? Cond::Ctx : Cond::Sent;
                p.best = j.at("y_plus").get<TokenSeq>();
                p.rival = j.at("rival").get<TokenSeq>();
                p.rival_rank = j.at("rival_rank").get<std::string>() == "plus" ? RivalRank::Plus : RivalRank::Minus;
                p.winner_score = j.at("winner_score").get<double>();
                p.rival_score = j.at("rival_score").get<double>();
                out.cross.push_back(std::move(p));
            } else {
                throw UsageError("unknown pair kind '" + kind + "'");
            }
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            throw UsageError("pairs line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    out.counts.sent_kept = out.sent.size();
    out.counts.ctx_kept = out.ctx.size();
    out.counts.cross_kept = out.cross.size();
    return out;
}

void write_pair_counts_csv(const PairCounts& counts, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("pairs: cannot write " + path.string());
    os << "set,constructed,kept\n";
    os << "sent," << counts.sent_labeled << ',' << counts.sent_kept << '\n';
    os << "ctx," << counts.ctx_labeled << ',' << counts.ctx_kept << '\n';
    os << "cross," << counts.cross_built << ',' << counts.cross_kept << '\n';
    os << "cross_tie_drops," << counts.cross_ties << ",0\n";
}

void write_candidates_jsonl(std::span<const CandidateSet> sets, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("candidates: cannot write " + path.string());
    for (const auto& set : sets) {
        ojson j;
        j["doc_id"] = set.key.doc_id;
        j["index"] = set.key.index;
        ojson arr = ojson::array();
        for (const auto& cand : set.cands) {
            ojson cj;
            cj["condition"] = std::string(1, static_cast<char>(cand.condition));
            cj["tokens"] = cand.tokens;
            cj["score"] = cand.score;
            arr.push_back(std::move(cj));
        }
        j["cands"] = std::move(arr);
        os << j.dump() << '\n';
    }
}

std::vector<CandidateSet> read_candidates_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("candidates: cannot read " + path.string());
    std::vector<CandidateSet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = ojson::parse(line);
            CandidateSet set;
            set.key.doc_id = j.at("doc_id").get<std::string>();
            set.key.index = j.at("index").get<std::int32_t>();
            const auto& arr = j.at("cands");
            if (arr.size() != 4) throw UsageError("expected 4 candidates");
            for (std::size_t i = 0; i < 4; ++i) {
                set.cands[i].condition = arr[i].at("condition").get<std::string>() == "c" ? Cond::Ctx : Cond::Sent;
                set.cands[i].tokens = arr[i].at("tokens").get<TokenSeq>();
                set.cands[i].score = arr[i].at("score").get<double>();
            }
            out.push_back(std::move(set));
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            throw UsageError("candidates line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace cpl
