#pragma once

#include <span>

namespace cpl {

/// Log-probabilities of a preference pair plus the separation strength.
/// For the cross-condition kernel the two values come from different
/// conditioning inputs (winner's vs loser's); the formula is unchanged.
struct PrefLogProbs {
    double lp_plus;
    double lp_minus;
    double beta;
};

/// One pair's loss split into its contrastive and likelihood terms, with
/// closed-form partials w.r.t. the two log-probabilities.
struct LossBreakdown {
    double contrastive;  // -log sigmoid(beta * (lp_plus - lp_minus))
    double nll;          // -lp_plus
    double total;        // contrastive + nll
    double d_lp_plus;    // -beta * sigmoid(-z) - 1
    double d_lp_minus;   // +beta * sigmoid(-z)
};

/// Contrastive preference loss over a same-condition pair.
LossBreakdown cpo_loss(const PrefLogProbs& p);

/// Cross-condition variant: lp_plus is conditioned on the winner's input,
/// lp_minus on the loser's input (caller wires the conditions). Numerically
/// identical to cpo_loss.
LossBreakdown c_cpo_loss(const PrefLogProbs& p);

struct PairLogProbs {
    double lp_plus;
    double lp_minus;
};

/// Mean pair loss over the sentence-condition set plus mean over the
/// context-condition set; an empty set contributes zero.
double intra_loss(std::span<const PairLogProbs> batch_s, std::span<const PairLogProbs> batch_c, double beta);

/// Mean cross-pair loss over (winner, loser-preferred) entries plus mean
/// over (winner, loser-dispreferred) entries.
double cross_loss(std::span<const PairLogProbs> wl_plus, std::span<const PairLogProbs> wl_minus, double beta);

/// Unweighted sum of the intra and cross objectives.
double cpl_loss(double intra, double cross);

}  // namespace cpl
