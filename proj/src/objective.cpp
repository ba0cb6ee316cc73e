#include "cpl/objective.hpp"

#include <cmath>

#include "cpl/errors.hpp"

namespace cpl {

namespace {

// log(1 + e^x) without overflow for large |x|.
double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// sigmoid(-z), evaluated on the stable side.
double sigmoid_neg(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

double mean_total(std::span<const PairLogProbs> batch, double beta) {
    if (batch.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& pair : batch) {
        acc += cpo_loss({pair.lp_plus, pair.lp_minus, beta}).total;
    }
    return acc / static_cast<double>(batch.size());
}

}  // namespace

LossBreakdown cpo_loss(const PrefLogProbs& p) {
    if (!std::isfinite(p.lp_plus) || !std::isfinite(p.lp_minus)) {
        throw NumericError("cpo_loss: non-finite log-probability");
    }
    if (!(p.beta > 0.0)) throw NumericError("cpo_loss: beta must be positive");

    const double z = p.beta * (p.lp_plus - p.lp_minus);
    LossBreakdown out;
    out.contrastive = softplus(-z);  // == -log sigmoid(z)
    out.nll = -p.lp_plus;
    out.total = out.contrastive + out.nll;
    const double sig_neg = sigmoid_neg(z);  // == 1 - sigmoid(z)
    out.d_lp_plus = -p.beta * sig_neg - 1.0;
    out.d_lp_minus = p.beta * sig_neg;
    return out;
}

LossBreakdown c_cpo_loss(const PrefLogProbs& p) { return cpo_loss(p); }

double intra_loss(std::span<const PairLogProbs> batch_s, std::span<const PairLogProbs> batch_c, double beta) {
    return mean_total(batch_s, beta) + mean_total(batch_c, beta);
}

double cross_loss(std::span<const PairLogProbs> wl_plus, std::span<const PairLogProbs> wl_minus, double beta) {
    return mean_total(wl_plus, beta) + mean_total(wl_minus, beta);
}

double cpl_loss(double intra, double cross) { return intra + cross; }

}  // namespace cpl
