#include "cpl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cpl/errors.hpp"
#include "cpl/rng.hpp"

namespace cpl {

namespace {

// Stream salts so the pipeline stages draw from unrelated substreams of one
// run seed.
constexpr std::uint64_t kSftSalt = 0x5f74u;
constexpr std::uint64_t kCandidateSalt = 0xca4du;
constexpr std::uint64_t kCplSalt = 0xc91u;

struct Optimizer {
    OptimizerKind kind;
    double lr;
    double clip;
    GradientBundle velocity;

    Optimizer(const TrainConfig& cfg, const PolicyDims& dims)
        : kind(cfg.optimizer), lr(cfg.learning_rate), clip(cfg.grad_clip),
          velocity(GradientBundle::zeros(dims)) {}

    void step(PolicyParams& params, GradientBundle& grad) {
        const double norm = grad.l2_norm();
        if (clip > 0.0 && norm > clip) grad.scale(clip / norm);

        auto tensors = params.tensors();
        auto grads = grad.tensors();
        if (kind == OptimizerKind::MomentumSgd) {
            auto vel = velocity.tensors();
            for (std::size_t k = 0; k < PolicyParams::kNumTensors; ++k) {
                for (std::size_t i = 0; i < tensors[k]->size(); ++i) {
                    double& v = (*vel[k])[i];
                    v = kMomentumMu * v + (*grads[k])[i];
                    (*tensors[k])[i] -= lr * v;
                }
            }
        } else {
            for (std::size_t k = 0; k < PolicyParams::kNumTensors; ++k) {
                for (std::size_t i = 0; i < tensors[k]->size(); ++i) {
                    (*tensors[k])[i] -= lr * (*grads[k])[i];
                }
            }
        }
    }
};

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.next_below(i)]);
    }
}

std::map<std::string, const Document*> doc_index(const std::vector<Document>& corpus) {
    std::map<std::string, const Document*> idx;
    for (const auto& doc : corpus) idx[doc.doc_id] = &doc;
    return idx;
}

const Document& doc_for_key(const std::map<std::string, const Document*>& idx, const UnitKey& key) {
    auto it = idx.find(key.doc_id);
    if (it == idx.end()) throw UsageError("pairs reference unknown document '" + key.doc_id + "'");
    if (key.index < 0 || static_cast<std::size_t>(key.index) >= it->second->units.size()) {
        throw UsageError("pairs reference unknown unit (" + key.doc_id + ", " + std::to_string(key.index) + ")");
    }
    return *it->second;
}

double parse_double(std::string_view key, std::string_view value) {
    try {
        return std::stod(std::string(value));
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for '" + std::string(key) + "'");
    }
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
    try {
        return std::stoull(std::string(value));
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for '" + std::string(key) + "'");
    }
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("config: learning_rate must be > 0");
    if (!(cfg.beta > 0.0)) throw ConfigError("config: beta must be > 0");
    if (cfg.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
    if (cfg.cpl_epochs == 0) throw ConfigError("config: cpl_epochs must be >= 1");
    if (!(cfg.grad_clip > 0.0)) throw ConfigError("config: grad_clip must be > 0");
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot read " + path.string());
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto toks = split_whitespace(line);
        std::string joined;
        for (auto& t : toks) joined += t;
        if (joined.empty()) continue;
        const auto eq = joined.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        cfg.apply_line(joined.substr(0, eq), joined.substr(eq + 1));
    }
    validate(cfg);
    return cfg;
}

void TrainConfig::apply_line(std::string_view key, std::string_view value) {
    if (key == "seed") seed = parse_u64(key, value);
    else if (key == "sft_epochs") sft_epochs = parse_u64(key, value);
    else if (key == "cpl_epochs") cpl_epochs = parse_u64(key, value);
    else if (key == "batch_size") batch_size = parse_u64(key, value);
    else if (key == "learning_rate") learning_rate = parse_double(key, value);
    else if (key == "beta") beta = parse_double(key, value);
    else if (key == "grad_clip") grad_clip = parse_double(key, value);
    else if (key == "temperature") temperature = parse_double(key, value);
    else if (key == "max_len") max_len = parse_u64(key, value);
    else if (key == "context_k") context_k = parse_u64(key, value);
    else if (key == "selection_metric") selection_metric = metric_kind_from_name(value);
    else if (key == "optimizer") {
        if (value == "plain-sgd") optimizer = OptimizerKind::Sgd;
        else if (value == "momentum-sgd") optimizer = OptimizerKind::MomentumSgd;
        else throw ConfigError("config: optimizer must be plain-sgd or momentum-sgd");
    } else {
        throw ConfigError("config: unknown key '" + std::string(key) + "'");
    }
}

void TrainConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("config: cannot write " + path.string());
    os << "seed=" << seed << '\n'
       << "sft_epochs=" << sft_epochs << '\n'
       << "cpl_epochs=" << cpl_epochs << '\n'
       << "batch_size=" << batch_size << '\n'
       << "learning_rate=" << learning_rate << '\n'
       << "beta=" << beta << '\n'
       << "optimizer=" << (optimizer == OptimizerKind::Sgd ? "plain-sgd" : "momentum-sgd") << '\n'
       << "grad_clip=" << grad_clip << '\n'
       << "temperature=" << temperature << '\n'
       << "max_len=" << max_len << '\n'
       << "context_k=" << context_k << '\n'
       << "selection_metric=" << metric_kind_name(selection_metric) << '\n';
}

PolicyParams sft(PolicyParams params, const std::vector<Document>& corpus, const TrainConfig& cfg,
                 TrainReport* report) {
    if (corpus.empty()) throw ConfigError("sft: empty corpus");
    const auto t_start = std::chrono::steady_clock::now();

    struct Item {
        const Document* doc;
        std::size_t unit;
        ConditionKind kind;
    };
    std::vector<Item> items;
    for (const auto& doc : corpus) {
        for (std::size_t i = 0; i < doc.units.size(); ++i) {
            items.push_back({&doc, i, ConditionKind::SentOnly});
            items.push_back({&doc, i, ConditionKind::WithContext});
        }
    }

    Rng rng(mix64(cfg.seed ^ kSftSalt));
    Optimizer opt(cfg, params.dims);
    auto last_good = std::make_shared<PolicyParams>(params);
    std::size_t step_no = 0;

    for (std::size_t epoch = 0; epoch < cfg.sft_epochs; ++epoch) {
        shuffle_in_place(items, rng);
        double epoch_loss = 0.0;
        std::size_t epoch_items = 0;
        for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(items.size(), start + cfg.batch_size);
            GradientBundle grad = GradientBundle::zeros(params.dims);
            double batch_nll = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& item = items[i];
                const auto cond = make_condition(*item.doc, item.unit, item.kind, cfg.context_k);
                auto [lp, g] = grad_log_prob(params, cond, target_sequence(item.doc->units[item.unit]));
                batch_nll -= lp;
                grad.add_scaled(g, -1.0);  // d(-lp)/dtheta
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            grad.scale(inv);
            batch_nll *= inv;
            if (!std::isfinite(batch_nll)) {
                throw TrainingError("sft: loss diverged at step " + std::to_string(step_no), last_good);
            }
            opt.step(params, grad);
            if (report) {
                StepLogRow row;
                row.step = step_no;
                row.cpl = batch_nll;  // serialized as the nll column
                report->steps.push_back(row);
            }
            epoch_loss += batch_nll * static_cast<double>(end - start);
            epoch_items += end - start;
            ++step_no;
        }
        if (!params.all_finite()) {
            throw TrainingError("sft: parameters diverged after epoch " + std::to_string(epoch), last_good);
        }
        last_good = std::make_shared<PolicyParams>(params);
        if (report && epoch_items > 0) {
            report->epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_items));
        }
    }

    if (report) {
        report->wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    }
    return params;
}

std::vector<CandidateSet> generate_candidates(const PolicyParams& params, const std::vector<Document>& corpus,
                                              const Vocab& vocab, const TrainConfig& cfg) {
    Rng rng(mix64(cfg.seed ^ kCandidateSalt));
    std::vector<CandidateSet> out;
    for (const auto& doc : corpus) {
        for (std::size_t i = 0; i < doc.units.size(); ++i) {
            const auto& unit = doc.units[i];
            CandidateSet set;
            set.key = {doc.doc_id, unit.index};

            const std::string ref_text = vocab.detokenize(unit.reference);
            std::optional<std::string> prev_ref;
            if (i > 0) prev_ref = vocab.detokenize(doc.units[i - 1].reference);

            std::size_t slot = 0;
            for (ConditionKind kind : {ConditionKind::SentOnly, ConditionKind::WithContext}) {
                const auto cond = make_condition(doc, i, kind, cfg.context_k);
                for (int rep = 0; rep < 2; ++rep) {
                    Candidate cand;
                    cand.condition = (kind == ConditionKind::SentOnly) ? Cond::Sent : Cond::Ctx;
                    cand.tokens = sample(params, cond, cfg.temperature, cfg.max_len, rng);
                    ScoreInputs in;
                    in.hyp = vocab.detokenize(cand.tokens);
                    in.ref = ref_text;
                    in.prev_hyp = prev_ref;  // gold preceding segment stands in for a hypothesis
                    in.prev_ref = prev_ref;
                    cand.score = selection_score(in, cfg.selection_metric);
                    set.cands[slot++] = std::move(cand);
                }
            }
            out.push_back(std::move(set));
        }
    }
    return out;
}

std::vector<ResolvedPair> resolve_pairs(const PairCorpus& pairs, const std::vector<Document>& corpus,
                                        std::size_t K) {
    const auto idx = doc_index(corpus);
    std::vector<ResolvedPair> out;
    out.reserve(pairs.sent.size() + pairs.ctx.size() + pairs.cross.size());

    auto intra_cond = [&](const IntraPair& p) {
        const auto& doc = doc_for_key(idx, p.key);
        const auto kind = p.condition == Cond::Sent ? ConditionKind::SentOnly : ConditionKind::WithContext;
        return make_condition(doc, static_cast<std::size_t>(p.key.index), kind, K);
    };
    for (const auto& p : pairs.sent) {
        ResolvedPair r;
        r.kind = ResolvedPair::Kind::SentIntra;
        r.cond_plus = intra_cond(p);
        r.cond_minus = r.cond_plus;
        r.y_plus = p.preferred;
        r.y_minus = p.dispreferred;
        out.push_back(std::move(r));
    }
    for (const auto& p : pairs.ctx) {
        ResolvedPair r;
        r.kind = ResolvedPair::Kind::CtxIntra;
        r.cond_plus = intra_cond(p);
        r.cond_minus = r.cond_plus;
        r.y_plus = p.preferred;
        r.y_minus = p.dispreferred;
        out.push_back(std::move(r));
    }
    for (const auto& p : pairs.cross) {
        const auto& doc = doc_for_key(idx, p.key);
        const auto index = static_cast<std::size_t>(p.key.index);
        const auto winner_kind =
            p.winner_condition == Cond::Sent ? ConditionKind::SentOnly : ConditionKind::WithContext;
        const auto loser_kind =
            p.winner_condition == Cond::Sent ? ConditionKind::WithContext : ConditionKind::SentOnly;
        ResolvedPair r;
        r.kind = p.rival_rank == RivalRank::Plus ? ResolvedPair::Kind::CrossPlus : ResolvedPair::Kind::CrossMinus;
        r.cond_plus = make_condition(doc, index, winner_kind, K);
        r.cond_minus = make_condition(doc, index, loser_kind, K);
        r.y_plus = p.best;
        r.y_minus = p.rival;
        out.push_back(std::move(r));
    }
    return out;
}

std::pair<BatchStats, GradientBundle> cpl_batch_loss_and_grad(const PolicyParams& params,
                                                              std::span<const ResolvedPair> batch, double beta) {
    BatchStats stats;
    for (const auto& item : batch) {
        switch (item.kind) {
            case ResolvedPair::Kind::SentIntra: ++stats.n_sent; break;
            case ResolvedPair::Kind::CtxIntra: ++stats.n_ctx; break;
            case ResolvedPair::Kind::CrossPlus: ++stats.n_cross_plus; break;
            case ResolvedPair::Kind::CrossMinus: ++stats.n_cross_minus; break;
        }
    }
    auto kind_count = [&](ResolvedPair::Kind k) -> double {
        switch (k) {
            case ResolvedPair::Kind::SentIntra: return static_cast<double>(stats.n_sent);
            case ResolvedPair::Kind::CtxIntra: return static_cast<double>(stats.n_ctx);
            case ResolvedPair::Kind::CrossPlus: return static_cast<double>(stats.n_cross_plus);
            case ResolvedPair::Kind::CrossMinus: return static_cast<double>(stats.n_cross_minus);
        }
        return 1.0;
    };

    GradientBundle grad = GradientBundle::zeros(params.dims);
    double margin_s = 0.0, margin_c = 0.0, margin_cr = 0.0;
    for (const auto& item : batch) {
        auto [lp_plus, g_plus] = grad_log_prob(params, item.cond_plus, item.y_plus);
        auto [lp_minus, g_minus] = grad_log_prob(params, item.cond_minus, item.y_minus);
        const auto breakdown = cpo_loss({lp_plus, lp_minus, beta});
        const double inv = 1.0 / kind_count(item.kind);
        grad.add_scaled(g_plus, inv * breakdown.d_lp_plus);
        grad.add_scaled(g_minus, inv * breakdown.d_lp_minus);
        const double margin = lp_plus - lp_minus;
        switch (item.kind) {
            case ResolvedPair::Kind::SentIntra:
                stats.intra += inv * breakdown.total;
                margin_s += margin;
                break;
            case ResolvedPair::Kind::CtxIntra:
                stats.intra += inv * breakdown.total;
                margin_c += margin;
                break;
            case ResolvedPair::Kind::CrossPlus:
            case ResolvedPair::Kind::CrossMinus:
                stats.cross += inv * breakdown.total;
                margin_cr += margin;
                break;
        }
    }
    stats.total = cpl_loss(stats.intra, stats.cross);
    if (stats.n_sent) stats.mean_margin_s = margin_s / static_cast<double>(stats.n_sent);
    if (stats.n_ctx) stats.mean_margin_c = margin_c / static_cast<double>(stats.n_ctx);
    if (stats.n_cross_plus + stats.n_cross_minus) {
        stats.mean_margin_cr = margin_cr / static_cast<double>(stats.n_cross_plus + stats.n_cross_minus);
    }
    return {stats, std::move(grad)};
}

double cpl_batch_loss(const PolicyParams& params, std::span<const ResolvedPair> batch, double beta) {
    std::vector<PairLogProbs> sent, ctx, cross_plus, cross_minus;
    for (const auto& item : batch) {
        PairLogProbs lp{log_prob(params, item.cond_plus, item.y_plus),
                        log_prob(params, item.cond_minus, item.y_minus)};
        switch (item.kind) {
            case ResolvedPair::Kind::SentIntra: sent.push_back(lp); break;
            case ResolvedPair::Kind::CtxIntra: ctx.push_back(lp); break;
            case ResolvedPair::Kind::CrossPlus: cross_plus.push_back(lp); break;
            case ResolvedPair::Kind::CrossMinus: cross_minus.push_back(lp); break;
        }
    }
    return cpl_loss(intra_loss(sent, ctx, beta), cross_loss(cross_plus, cross_minus, beta));
}

double pair_ranking_accuracy(const PolicyParams& params, std::span<const ResolvedPair> pairs) {
    if (pairs.empty()) throw UsageError("pair_ranking_accuracy: no pairs");
    std::size_t correct = 0;
    for (const auto& item : pairs) {
        const double lp_plus = log_prob(params, item.cond_plus, item.y_plus);
        const double lp_minus = log_prob(params, item.cond_minus, item.y_minus);
        if (lp_plus > lp_minus) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

PolicyParams train_cpl(PolicyParams params, const PairCorpus& pairs, const std::vector<Document>& corpus,
                       const TrainConfig& cfg, TrainReport* report) {
    validate(cfg);
    if (pairs.sent.empty() && pairs.ctx.empty() && pairs.cross.empty()) {
        throw UsageError("train_cpl: all pair sets are empty");
    }
    const auto t_start = std::chrono::steady_clock::now();
    auto resolved = resolve_pairs(pairs, corpus, cfg.context_k);
    if (report) {
        report->pairs_sent = pairs.sent.size();
        report->pairs_ctx = pairs.ctx.size();
        report->pairs_cross = pairs.cross.size();
    }

    Rng rng(mix64(cfg.seed ^ kCplSalt));
    Optimizer opt(cfg, params.dims);
    auto last_good = std::make_shared<PolicyParams>(params);
    std::size_t step_no = 0;

    for (std::size_t epoch = 0; epoch < cfg.cpl_epochs; ++epoch) {
        shuffle_in_place(resolved, rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < resolved.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(resolved.size(), start + cfg.batch_size);
            std::span<const ResolvedPair> batch(resolved.data() + start, end - start);
            auto [stats, grad] = cpl_batch_loss_and_grad(params, batch, cfg.beta);
            if (!std::isfinite(stats.total)) {
                throw TrainingError("train_cpl: loss diverged at step " + std::to_string(step_no), last_good);
            }
            opt.step(params, grad);
            if (report) {
                StepLogRow row;
                row.step = step_no;
                row.intra = stats.intra;
                row.cross = stats.cross;
                row.cpl = stats.total;
                row.mean_margin_s = stats.mean_margin_s;
                row.mean_margin_c = stats.mean_margin_c;
                row.mean_margin_cr = stats.mean_margin_cr;
                report->steps.push_back(row);
            }
            epoch_loss += stats.total;
            ++batches;
            ++step_no;
        }
        if (!params.all_finite()) {
            throw TrainingError("train_cpl: parameters diverged after epoch " + std::to_string(epoch), last_good);
        }
        last_good = std::make_shared<PolicyParams>(params);
        if (report && batches > 0) report->epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    }

    if (report) {
        report->wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    }
    return params;
}

void write_step_log_csv(const TrainReport& report, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("trainer: cannot write " + path.string());
    os << "step,intra,cross,cpl,mean_margin_s,mean_margin_c,mean_margin_cr\n";
    char buf[256];
    for (const auto& row : report.steps) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", row.step, row.intra,
                      row.cross, row.cpl, row.mean_margin_s, row.mean_margin_c, row.mean_margin_cr);
        os << buf;
    }
}

void write_sft_log_csv(const TrainReport& report, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("trainer: cannot write " + path.string());
    os << "step,nll\n";
    char buf[128];
    for (const auto& row : report.steps) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", row.step, row.cpl);
        os << buf;
    }
}

}  // namespace cpl
