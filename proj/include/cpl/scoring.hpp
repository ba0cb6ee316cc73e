#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cpl/corpus.hpp"
#include "cpl/rng.hpp"

namespace cpl {

/// Which quality signal labels preference pairs. SelectAvg is the default:
/// the mean of the sentence-granularity and document-granularity scores.
enum class MetricKind { SProxy, DProxy, SelectAvg, BleuProxy };

std::string_view metric_kind_name(MetricKind kind);
MetricKind metric_kind_from_name(std::string_view name);

/// Sentence-granularity proxy: character n-gram F2 score, n = 1..6,
/// clipped counts, averaged over the orders with nonzero reference
/// n-grams. Range [0,1]; hyp == ref gives 1; empty hyp gives 0.
double s_score(std::string_view hyp, std::string_view ref);

/// Document-granularity proxy: s_score of the current segment glued to its
/// predecessor with a '\n' separator. Without a predecessor it equals
/// s_score exactly.
double d_score(std::string_view hyp, std::string_view ref,
               std::optional<std::string_view> prev_hyp = std::nullopt,
               std::optional<std::string_view> prev_ref = std::nullopt);

/// Token 4-gram geometric-mean precision with add-one smoothing for n >= 2
/// and a brevity penalty, in [0,1].
double bleu_proxy(std::string_view hyp, std::string_view ref);

/// Reference-free quality estimation stand-in: the sentence proxy plus
/// clamped gaussian noise. sigma is the fidelity dial (0 = oracle).
/// Evaluation-side only.
double qe_score(std::string_view hyp, std::string_view ref, double sigma, Rng& rng);

struct ScoreInputs {
    std::string hyp;
    std::string ref;
    std::optional<std::string> prev_hyp;
    std::optional<std::string> prev_ref;
};

/// The configured pair-selection metric over one candidate.
double selection_score(const ScoreInputs& in, MetricKind kind);

// Token-sequence convenience overloads; detokenize with `vocab` then score.
double s_score(const Vocab& vocab, const TokenSeq& hyp, const TokenSeq& ref);
double bleu_proxy(const Vocab& vocab, const TokenSeq& hyp, const TokenSeq& ref);

}  // namespace cpl
