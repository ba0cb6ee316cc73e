#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/pairs.hpp"
#include "cpl/policy.hpp"

namespace cpl {

/// One sentence decoded under both conditions from the same checkpoint.
struct EvalRow {
    UnitKey key;
    TokenSeq hyp_sent, hyp_ctx;
    double s_sent = 0.0, s_ctx = 0.0;
    double d_sent = 0.0, d_ctx = 0.0;
    double lp_sent = 0.0, lp_ctx = 0.0;  // log-prob of each hyp under its own condition
};

/// Argmax decoding, ties to the lowest token id; stops at EOS or max_len
/// (EOS appended in the latter case).
TokenSeq greedy_decode(const PolicyParams& params, const Condition& cond, std::size_t max_len);

enum class DecodeMode { Greedy, Sampled };

/// One hypothesis per corpus unit under the given condition. Sampled mode
/// draws at temperature 1 from the seeded stream; greedy ignores the seed.
std::vector<TokenSeq> decode_corpus(const PolicyParams& params, const std::vector<Document>& corpus,
                                    ConditionKind kind, std::size_t K, std::size_t max_len,
                                    DecodeMode mode = DecodeMode::Greedy, std::uint64_t seed = 0);

/// Decodes every unit under SentOnly and WithContext and scores both
/// hypotheses. d-scores use the previous unit's decoded hypothesis (same
/// condition) as the preceding segment.
std::vector<EvalRow> build_eval_rows(const PolicyParams& params, const std::vector<Document>& corpus,
                                     const Vocab& vocab, std::size_t K, std::size_t max_len);

struct CorpusSummary {
    double mean_s_sent = 0.0, mean_s_ctx = 0.0;
    double mean_d_sent = 0.0, mean_d_ctx = 0.0;
    std::size_t rows = 0;
};

CorpusSummary corpus_eval(std::span<const EvalRow> rows);

/// Mean of the per-row better condition (reference-based s-proxy).
double oracle_select_mean(std::span<const EvalRow> rows);

/// Five-way partition of the per-row delta = s_ctx - s_sent. Thresholds are
/// on the proxy's [0,1] scale; `from_percent` converts from the 0-100
/// convention (defaults 0.5 / 1.0 there, i.e. 0.005 / 0.01 here).
struct DeltaBins {
    double clearly_better = 0.0, better = 0.0, on_par = 0.0, worse = 0.0, clearly_worse = 0.0;
    double t1 = 0.005, t2 = 0.01;
    static double from_percent(double threshold_0_100) { return threshold_0_100 / 100.0; }
};

DeltaBins delta_bins(std::span<const EvalRow> rows, double t1 = 0.005, double t2 = 0.01);

enum class RerankStrategy { Prob, Qe, Oracle };

struct RerankResult {
    double mean_selected_score = 0.0;  // reference-based s-proxy of the chosen hypothesis
    std::size_t picked_ctx = 0;
    std::size_t rows = 0;
};

/// Chooses between the two hypotheses per row. Prob compares log-probs
/// (per-token normalized when length_norm is set), Qe compares noisy
/// reference proxies, Oracle compares the true s-proxies. Ties keep the
/// sentence-level hypothesis.
RerankResult rerank(std::span<const EvalRow> rows, const std::vector<Document>& corpus, const Vocab& vocab,
                    RerankStrategy strategy, bool length_norm = true, double qe_sigma = 0.0,
                    std::uint64_t qe_seed = 0);

struct RobustnessRow {
    UnitKey key;
    std::string donor_doc_id;  // whose context replaced the gold one
    TokenSeq hyp_gold, hyp_random, hyp_sent;
    double s_gold = 0.0, s_random = 0.0, s_sent = 0.0;
};

struct RobustnessSummary {
    double gold_mean = 0.0, random_mean = 0.0, sent_mean = 0.0;
    std::size_t rows = 0;
    std::vector<RobustnessRow> per_row;
};

/// Mean s-proxy of WithContext decoding under gold context, context drawn
/// from a different document, and SentOnly, over the units selected by
/// `subset` (pass an always-true predicate for the whole corpus).
RobustnessSummary context_robustness(const PolicyParams& params, const std::vector<Document>& corpus,
                                     const Vocab& vocab,
                                     const std::function<bool(const SentenceUnit&)>& subset, std::size_t K,
                                     std::size_t max_len, std::uint64_t seed);

void write_eval_rows_csv(std::span<const EvalRow> rows, const Vocab& vocab, const std::filesystem::path& path);
std::vector<EvalRow> read_eval_rows_csv(const std::filesystem::path& path, const Vocab& vocab);
void write_delta_bins_csv(const DeltaBins& bins, const std::filesystem::path& path);
/// Plot-ready histogram of the per-row deltas (fixed-width buckets).
void write_delta_hist_csv(std::span<const EvalRow> rows, double bucket_width, const std::filesystem::path& path);

}  // namespace cpl
