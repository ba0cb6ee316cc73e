#include "cpl/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "cpl/errors.hpp"

namespace cpl {

namespace {

constexpr double kChrfBeta = 2.0;
constexpr int kChrfMaxOrder = 6;
constexpr int kBleuMaxOrder = 4;

// Clipped n-gram matches plus totals for one order, over char or token units.
struct NgramStats {
    std::size_t matches = 0;
    std::size_t hyp_total = 0;
    std::size_t ref_total = 0;
};

template <typename Seq>
NgramStats count_ngrams(const Seq& hyp, const Seq& ref, std::size_t n) {
    NgramStats stats;
    std::unordered_map<std::string, std::size_t> ref_counts;
    auto key_at = [](const Seq& s, std::size_t i, std::size_t n_) {
        std::string key;
        for (std::size_t k = 0; k < n_; ++k) {
            if constexpr (std::is_same_v<typename Seq::value_type, char>) {
                key.push_back(s[i + k]);
            } else {
                key += s[i + k];
                key.push_back('\x1f');
            }
        }
        return key;
    };
    if (ref.size() >= n) {
        stats.ref_total = ref.size() - n + 1;
        for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[key_at(ref, i, n)];
    }
    if (hyp.size() >= n) {
        stats.hyp_total = hyp.size() - n + 1;
        for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
            auto it = ref_counts.find(key_at(hyp, i, n));
            if (it != ref_counts.end() && it->second > 0) {
                --it->second;
                ++stats.matches;
            }
        }
    }
    return stats;
}

}  // namespace

std::string_view metric_kind_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::SProxy: return "s";
        case MetricKind::DProxy: return "d";
        case MetricKind::SelectAvg: return "avg";
        case MetricKind::BleuProxy: return "bleu";
    }
    return "avg";
}

MetricKind metric_kind_from_name(std::string_view name) {
    if (name == "s") return MetricKind::SProxy;
    if (name == "d") return MetricKind::DProxy;
    if (name == "avg") return MetricKind::SelectAvg;
    if (name == "bleu") return MetricKind::BleuProxy;
    throw ConfigError("unknown selection metric '" + std::string(name) + "' (want s|d|avg|bleu)");
}

double s_score(std::string_view hyp, std::string_view ref) {
    if (ref.empty()) throw UsageError("s_score: empty reference");
    if (hyp.empty()) return 0.0;
    const std::string h(hyp), r(ref);
    double f_sum = 0.0;
    int orders = 0;
    for (int n = 1; n <= kChrfMaxOrder; ++n) {
        const auto stats = count_ngrams(h, r, static_cast<std::size_t>(n));
        if (stats.ref_total == 0) continue;
        ++orders;
        if (stats.hyp_total == 0 || stats.matches == 0) continue;
        const double p = static_cast<double>(stats.matches) / static_cast<double>(stats.hyp_total);
        const double rec = static_cast<double>(stats.matches) / static_cast<double>(stats.ref_total);
        const double b2 = kChrfBeta * kChrfBeta;
        f_sum += (1.0 + b2) * p * rec / (b2 * p + rec);
    }
    return orders > 0 ? f_sum / orders : 0.0;
}

double d_score(std::string_view hyp, std::string_view ref,
               std::optional<std::string_view> prev_hyp,
               std::optional<std::string_view> prev_ref) {
    if (ref.empty()) throw UsageError("d_score: empty reference");
    if (!prev_hyp && !prev_ref) return s_score(hyp, ref);
    std::string h;
    if (prev_hyp) {
        h = std::string(*prev_hyp);
        h.push_back('\n');
    }
    h += hyp;
    std::string r;
    if (prev_ref) {
        r = std::string(*prev_ref);
        r.push_back('\n');
    }
    r += ref;
    return s_score(h, r);
}

double bleu_proxy(std::string_view hyp, std::string_view ref) {
    if (ref.empty()) throw UsageError("bleu_proxy: empty reference");
    const auto hyp_toks = split_whitespace(hyp);
    const auto ref_toks = split_whitespace(ref);
    if (hyp_toks.empty()) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= kBleuMaxOrder; ++n) {
        auto stats = count_ngrams(hyp_toks, ref_toks, static_cast<std::size_t>(n));
        double p;
        if (n == 1) {
            p = static_cast<double>(stats.matches) / static_cast<double>(stats.hyp_total);
        } else {
            p = (static_cast<double>(stats.matches) + 1.0) / (static_cast<double>(stats.hyp_total) + 1.0);
        }
        if (p <= 0.0) return 0.0;
        log_sum += std::log(p);
    }
    const double brevity =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_toks.size()) / static_cast<double>(hyp_toks.size())));
    return brevity * std::exp(log_sum / kBleuMaxOrder);
}

double qe_score(std::string_view hyp, std::string_view ref, double sigma, Rng& rng) {
    if (sigma < 0.0) throw UsageError("qe_score: sigma must be >= 0");
    const double noisy = s_score(hyp, ref) + sigma * rng.gaussian();
    return std::clamp(noisy, 0.0, 1.0);
}

double selection_score(const ScoreInputs& in, MetricKind kind) {
    auto opt_view = [](const std::optional<std::string>& s) -> std::optional<std::string_view> {
        if (!s) return std::nullopt;
        return std::string_view(*s);
    };
    switch (kind) {
        case MetricKind::SProxy:
            return s_score(in.hyp, in.ref);
        case MetricKind::DProxy:
            return d_score(in.hyp, in.ref, opt_view(in.prev_hyp), opt_view(in.prev_ref));
        case MetricKind::BleuProxy:
            return bleu_proxy(in.hyp, in.ref);
        case MetricKind::SelectAvg:
            return 0.5 * (s_score(in.hyp, in.ref) +
                          d_score(in.hyp, in.ref, opt_view(in.prev_hyp), opt_view(in.prev_ref)));
    }
    throw UsageError("selection_score: bad metric kind");
}

double s_score(const Vocab& vocab, const TokenSeq& hyp, const TokenSeq& ref) {
    return s_score(vocab.detokenize(hyp), vocab.detokenize(ref));
}

double bleu_proxy(const Vocab& vocab, const TokenSeq& hyp, const TokenSeq& ref) {
    return bleu_proxy(vocab.detokenize(hyp), vocab.detokenize(ref));
}

}  // namespace cpl
