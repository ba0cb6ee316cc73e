#include "cpl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cpl/errors.hpp"
#include "cpl/rng.hpp"
#include "cpl/scoring.hpp"

namespace cpl {

namespace {

constexpr std::uint64_t kRobustnessSalt = 0x40b5u;
constexpr std::uint64_t kQeSalt = 0x9eu;

std::string csv_quote(const std::string& field) {
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// Minimal RFC4180-ish line splitter (quoted fields, doubled quotes).
std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

const SentenceUnit& unit_for_key(const std::vector<Document>& corpus, const UnitKey& key) {
    const SentenceUnit* unit = find_unit(corpus, key.doc_id, key.index);
    if (!unit) {
        throw UsageError("eval rows reference unknown unit (" + key.doc_id + ", " + std::to_string(key.index) +
                         ")");
    }
    return *unit;
}

}  // namespace

TokenSeq greedy_decode(const PolicyParams& params, const Condition& cond, std::size_t max_len) {
    if (max_len == 0) throw UsageError("greedy_decode: max_len must be >= 1");
    PolicyStepper stepper(params, cond);
    TokenSeq out;
    TokenId prev = Vocab::kBos;
    for (std::size_t t = 0; t < max_len; ++t) {
        const auto& probs = stepper.step(prev);
        // Argmax with ties to the lowest id.
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        const auto pick = static_cast<TokenId>(best);
        out.push_back(pick);
        if (pick == Vocab::kEos) return out;
        prev = pick;
    }
    out.push_back(Vocab::kEos);
    return out;
}

std::vector<TokenSeq> decode_corpus(const PolicyParams& params, const std::vector<Document>& corpus,
                                    ConditionKind kind, std::size_t K, std::size_t max_len, DecodeMode mode,
                                    std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0xdec0u));
    std::vector<TokenSeq> out;
    for (const auto& doc : corpus) {
        for (std::size_t i = 0; i < doc.units.size(); ++i) {
            const auto cond = make_condition(doc, i, kind, K);
            out.push_back(mode == DecodeMode::Greedy ? greedy_decode(params, cond, max_len)
                                                     : sample(params, cond, 1.0, max_len, rng));
        }
    }
    return out;
}

std::vector<EvalRow> build_eval_rows(const PolicyParams& params, const std::vector<Document>& corpus,
                                     const Vocab& vocab, std::size_t K, std::size_t max_len) {
    std::vector<EvalRow> rows;
    for (const auto& doc : corpus) {
        std::optional<std::string> prev_ref, prev_hyp_sent, prev_hyp_ctx;
        for (std::size_t i = 0; i < doc.units.size(); ++i) {
            const auto& unit = doc.units[i];
            EvalRow row;
            row.key = {doc.doc_id, unit.index};

            const auto cond_sent = make_condition(doc, i, ConditionKind::SentOnly, K);
            const auto cond_ctx = make_condition(doc, i, ConditionKind::WithContext, K);
            row.hyp_sent = greedy_decode(params, cond_sent, max_len);
            row.hyp_ctx = greedy_decode(params, cond_ctx, max_len);
            row.lp_sent = log_prob(params, cond_sent, row.hyp_sent);
            row.lp_ctx = log_prob(params, cond_ctx, row.hyp_ctx);

            const std::string ref = vocab.detokenize(unit.reference);
            const std::string hyp_sent = vocab.detokenize(row.hyp_sent);
            const std::string hyp_ctx = vocab.detokenize(row.hyp_ctx);
            row.s_sent = s_score(hyp_sent, ref);
            row.s_ctx = s_score(hyp_ctx, ref);
            auto opt = [](const std::optional<std::string>& s) -> std::optional<std::string_view> {
                if (!s) return std::nullopt;
                return std::string_view(*s);
            };
            row.d_sent = d_score(hyp_sent, ref, opt(prev_hyp_sent), opt(prev_ref));
            row.d_ctx = d_score(hyp_ctx, ref, opt(prev_hyp_ctx), opt(prev_ref));

            prev_ref = ref;
            prev_hyp_sent = hyp_sent;
            prev_hyp_ctx = hyp_ctx;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

CorpusSummary corpus_eval(std::span<const EvalRow> rows) {
    if (rows.empty()) throw UsageError("corpus_eval: no rows");
    CorpusSummary s;
    s.rows = rows.size();
    for (const auto& row : rows) {
        s.mean_s_sent += row.s_sent;
        s.mean_s_ctx += row.s_ctx;
        s.mean_d_sent += row.d_sent;
        s.mean_d_ctx += row.d_ctx;
    }
    // plain division keeps these means bit-comparable with oracle_select_mean
    const auto n = static_cast<double>(rows.size());
    s.mean_s_sent /= n;
    s.mean_s_ctx /= n;
    s.mean_d_sent /= n;
    s.mean_d_ctx /= n;
    return s;
}

double oracle_select_mean(std::span<const EvalRow> rows) {
    if (rows.empty()) throw UsageError("oracle_select_mean: no rows");
    double acc = 0.0;
    for (const auto& row : rows) acc += std::max(row.s_sent, row.s_ctx);
    return acc / static_cast<double>(rows.size());
}

DeltaBins delta_bins(std::span<const EvalRow> rows, double t1, double t2) {
    if (rows.empty()) throw UsageError("delta_bins: no rows");
    if (!(t1 > 0.0) || !(t1 < t2)) throw UsageError("delta_bins: need 0 < t1 < t2");
    DeltaBins bins;
    bins.t1 = t1;
    bins.t2 = t2;
    for (const auto& row : rows) {
        const double delta = row.s_ctx - row.s_sent;
        if (delta >= t2) bins.clearly_better += 1.0;
        else if (delta >= t1) bins.better += 1.0;
        else if (delta > -t1) bins.on_par += 1.0;
        else if (delta > -t2) bins.worse += 1.0;
        else bins.clearly_worse += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    bins.clearly_better *= inv;
    bins.better *= inv;
    bins.on_par *= inv;
    bins.worse *= inv;
    bins.clearly_worse *= inv;
    return bins;
}

RerankResult rerank(std::span<const EvalRow> rows, const std::vector<Document>& corpus, const Vocab& vocab,
                    RerankStrategy strategy, bool length_norm, double qe_sigma, std::uint64_t qe_seed) {
    if (rows.empty()) throw UsageError("rerank: no rows");
    Rng rng(mix64(qe_seed ^ kQeSalt));
    RerankResult out;
    out.rows = rows.size();
    for (const auto& row : rows) {
        bool pick_ctx = false;
        switch (strategy) {
            case RerankStrategy::Prob: {
                double score_sent = row.lp_sent;
                double score_ctx = row.lp_ctx;
                if (length_norm) {
                    score_sent /= static_cast<double>(word_count(row.hyp_sent) + 1);
                    score_ctx /= static_cast<double>(word_count(row.hyp_ctx) + 1);
                }
                pick_ctx = score_ctx > score_sent;
                break;
            }
            case RerankStrategy::Qe: {
                const auto& unit = unit_for_key(corpus, row.key);
                const std::string ref = vocab.detokenize(unit.reference);
                const double qe_sent = qe_score(vocab.detokenize(row.hyp_sent), ref, qe_sigma, rng);
                const double qe_ctx = qe_score(vocab.detokenize(row.hyp_ctx), ref, qe_sigma, rng);
                pick_ctx = qe_ctx > qe_sent;
                break;
            }
            case RerankStrategy::Oracle:
                pick_ctx = row.s_ctx > row.s_sent;
                break;
        }
        out.mean_selected_score += pick_ctx ? row.s_ctx : row.s_sent;
        if (pick_ctx) ++out.picked_ctx;
    }
    out.mean_selected_score /= static_cast<double>(rows.size());
    return out;
}

RobustnessSummary context_robustness(const PolicyParams& params, const std::vector<Document>& corpus,
                                     const Vocab& vocab,
                                     const std::function<bool(const SentenceUnit&)>& subset, std::size_t K,
                                     std::size_t max_len, std::uint64_t seed) {
    // Context donors keyed by sentence position, so a swapped-in window is
    // comparable to the gold one (same depth into the document).
    struct Donor {
        std::size_t doc;
        std::size_t index;
    };
    std::vector<Donor> donors;
    std::map<std::size_t, std::vector<Donor>> donors_by_index;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        for (std::size_t i = 1; i < corpus[d].units.size(); ++i) {
            donors.push_back({d, i});
            donors_by_index[i].push_back({d, i});
        }
    }

    Rng rng(mix64(seed ^ kRobustnessSalt));
    RobustnessSummary out;
    double gold = 0.0, random = 0.0, sent = 0.0;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        const auto& doc = corpus[d];
        for (std::size_t i = 0; i < doc.units.size(); ++i) {
            const auto& unit = doc.units[i];
            if (!subset(unit)) continue;

            const std::string ref = vocab.detokenize(unit.reference);
            const auto cond_sent = make_condition(doc, i, ConditionKind::SentOnly, K);
            const auto cond_gold = make_condition(doc, i, ConditionKind::WithContext, K);

            // Donor window from a different document, preferring the same
            // sentence position; fall back to any position if necessary.
            const std::vector<Donor>* pool = &donors;
            if (auto it = donors_by_index.find(i); it != donors_by_index.end()) {
                bool other_doc = false;
                for (const auto& donor : it->second) {
                    if (donor.doc != d) {
                        other_doc = true;
                        break;
                    }
                }
                if (other_doc) pool = &it->second;
            }
            bool have_donor = false;
            for (const auto& donor : *pool) {
                if (donor.doc != d) {
                    have_donor = true;
                    break;
                }
            }
            if (!have_donor) {
                throw ConfigError("context_robustness: need context from at least two documents");
            }
            Donor donor{};
            do {
                donor = (*pool)[rng.next_below(pool->size())];
            } while (donor.doc == d);
            auto window = extract_context(corpus[donor.doc], donor.index, K);
            const auto cond_random = Condition::with_context(unit.source, std::move(window.tokens));

            RobustnessRow row;
            row.key = {doc.doc_id, unit.index};
            row.donor_doc_id = corpus[donor.doc].doc_id;
            row.hyp_gold = greedy_decode(params, cond_gold, max_len);
            row.hyp_random = greedy_decode(params, cond_random, max_len);
            row.hyp_sent = greedy_decode(params, cond_sent, max_len);
            row.s_gold = s_score(vocab.detokenize(row.hyp_gold), ref);
            row.s_random = s_score(vocab.detokenize(row.hyp_random), ref);
            row.s_sent = s_score(vocab.detokenize(row.hyp_sent), ref);
            gold += row.s_gold;
            random += row.s_random;
            sent += row.s_sent;
            ++out.rows;
            out.per_row.push_back(std::move(row));
        }
    }
    if (out.rows == 0) throw UsageError("context_robustness: subset selected no units");
    const double inv = 1.0 / static_cast<double>(out.rows);
    out.gold_mean = gold * inv;
    out.random_mean = random * inv;
    out.sent_mean = sent * inv;
    return out;
}

void write_eval_rows_csv(std::span<const EvalRow> rows, const Vocab& vocab, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("evalkit: cannot write " + path.string());
    os << "doc_id,index,hyp_sent,hyp_ctx,s_sent,s_ctx,d_sent,d_ctx,lp_sent,lp_ctx\n";
    char buf[256];
    for (const auto& row : rows) {
        os << csv_quote(row.key.doc_id) << ',' << row.key.index << ',' << csv_quote(vocab.detokenize(row.hyp_sent))
           << ',' << csv_quote(vocab.detokenize(row.hyp_ctx));
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.s_sent, row.s_ctx,
                      row.d_sent, row.d_ctx, row.lp_sent, row.lp_ctx);
        os << buf;
    }
}

std::vector<EvalRow> read_eval_rows_csv(const std::filesystem::path& path, const Vocab& vocab) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("evalkit: cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw UsageError("evalkit: empty rows file " + path.string());
    std::vector<EvalRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = csv_split(line);
        if (f.size() != 10) {
            throw UsageError("evalkit: rows line " + std::to_string(lineno) + ": expected 10 fields");
        }
        try {
            EvalRow row;
            row.key.doc_id = f[0];
            row.key.index = static_cast<std::int32_t>(std::stol(f[1]));
            row.hyp_sent = vocab.encode(f[2]);
            row.hyp_sent.push_back(Vocab::kEos);
            row.hyp_ctx = vocab.encode(f[3]);
            row.hyp_ctx.push_back(Vocab::kEos);
            row.s_sent = std::stod(f[4]);
            row.s_ctx = std::stod(f[5]);
            row.d_sent = std::stod(f[6]);
            row.d_ctx = std::stod(f[7]);
            row.lp_sent = std::stod(f[8]);
            row.lp_ctx = std::stod(f[9]);
            rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            throw UsageError("evalkit: rows line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

void write_delta_bins_csv(const DeltaBins& bins, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("evalkit: cannot write " + path.string());
    os << "bin,fraction\n";
    char buf[64];
    const std::pair<const char*, double> rows[] = {{"CB", bins.clearly_better},
                                                   {"B", bins.better},
                                                   {"P", bins.on_par},
                                                   {"W", bins.worse},
                                                   {"CW", bins.clearly_worse}};
    for (const auto& [name, frac] : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.10g\n", name, frac);
        os << buf;
    }
}

void write_delta_hist_csv(std::span<const EvalRow> rows, double bucket_width,
                          const std::filesystem::path& path) {
    if (!(bucket_width > 0.0)) throw UsageError("delta histogram: bucket width must be > 0");
    std::map<long, std::size_t> buckets;
    for (const auto& row : rows) {
        const double delta = row.s_ctx - row.s_sent;
        buckets[static_cast<long>(std::floor(delta / bucket_width))]++;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("evalkit: cannot write " + path.string());
    os << "delta_lo,delta_hi,count\n";
    char buf[96];
    for (const auto& [bucket, count] : buckets) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%zu\n", static_cast<double>(bucket) * bucket_width,
                      static_cast<double>(bucket + 1) * bucket_width, count);
        os << buf;
    }
}

}  // namespace cpl
