#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpl/corpus.hpp"

namespace cpl {

/// Candidate generation condition tag.
enum class Cond : char { Sent = 's', Ctx = 'c' };

struct UnitKey {
    std::string doc_id;
    std::int32_t index = 0;
    auto operator<=>(const UnitKey&) const = default;
};

struct Candidate {
    Cond condition = Cond::Sent;
    TokenSeq tokens;
    double score = 0.0;  // configured selection metric
};

/// Exactly four scored candidates per sentence: two sampled under each
/// condition.
struct CandidateSet {
    UnitKey key;
    std::array<Candidate, 4> cands;
};

struct IntraPair {
    UnitKey key;
    Cond condition = Cond::Sent;
    TokenSeq preferred;
    TokenSeq dispreferred;
    double score_plus = 0.0;
    double score_minus = 0.0;  // strictly below score_plus
};

/// Which of the losing condition's candidates the global best is paired
/// against.
enum class RivalRank : char { Plus = '+', Minus = '-' };

struct CrossPair {
    UnitKey key;
    Cond winner_condition = Cond::Sent;
    TokenSeq best;   // global best of the four candidates
    TokenSeq rival;  // from the opposite condition
    RivalRank rival_rank = RivalRank::Plus;
    double winner_score = 0.0;
    double rival_score = 0.0;
};

struct FilterConfig {
    std::size_t min_words = 6;
    std::size_t max_words = 100;
    double min_score = 0.3;
    double margin_lo = 0.2;
    double margin_hi = 10.0;
};

/// (higher, lower)-scored candidates of one condition; nothing on a tie.
std::optional<IntraPair> label_intra(const CandidateSet& set, Cond condition);

/// Pairs the global-best candidate against both opposite-condition
/// candidates. A cross-condition tie for the global best emits nothing.
std::vector<CrossPair> build_cross_pairs(const CandidateSet& set);

/// Both members within [min_words, max_words] words, both scores above
/// min_score, and the score margin within [margin_lo, margin_hi].
bool passes_filter(const IntraPair& pair, const FilterConfig& cfg);
bool passes_filter(const CrossPair& pair, const FilterConfig& cfg);

enum class CrossAblation { Full, DropWlPlus, DropWlMinus };

std::string_view ablation_name(CrossAblation a);
CrossAblation ablation_from_name(std::string_view name);

struct PairCounts {
    std::size_t candidate_sets = 0;
    std::size_t sent_labeled = 0, sent_kept = 0;
    std::size_t ctx_labeled = 0, ctx_kept = 0;
    std::size_t cross_built = 0, cross_kept = 0;
    std::size_t cross_ties = 0;  // global-score ties (logged, no pair)
};

struct PairCorpus {
    std::vector<IntraPair> sent;   // P_s
    std::vector<IntraPair> ctx;    // P_c
    std::vector<CrossPair> cross;  // P_cr
    PairCounts counts;
};

/// Labels, filters, and (optionally) ablates cross pairs. Output order is
/// by unit key regardless of input order. Throws UsageError if any
/// candidate set carries unset scores (NaN).
PairCorpus build_pair_corpus(std::span<const CandidateSet> candidates, const FilterConfig& cfg,
                             CrossAblation ablation = CrossAblation::Full);

void write_pairs_jsonl(const PairCorpus& pairs, const std::filesystem::path& path);
PairCorpus read_pairs_jsonl(const std::filesystem::path& path);
void write_pair_counts_csv(const PairCounts& counts, const std::filesystem::path& path);

void write_candidates_jsonl(std::span<const CandidateSet> sets, const std::filesystem::path& path);
std::vector<CandidateSet> read_candidates_jsonl(const std::filesystem::path& path);

}  // namespace cpl
