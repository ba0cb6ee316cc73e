#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cpl/corpus.hpp"
#include "cpl/errors.hpp"
#include "cpl/evalkit.hpp"
#include "cpl/manifest.hpp"
#include "cpl/objective.hpp"
#include "cpl/pairs.hpp"
#include "cpl/policy.hpp"
#include "cpl/rng.hpp"
#include "cpl/scoring.hpp"
#include "cpl/synthetic.hpp"
#include "cpl/trainer.hpp"

namespace py = pybind11;
using namespace cpl;

namespace {

std::vector<std::vector<double>> tensor_rows(const Tensor& t) {
    std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) out[r][c] = t(r, c);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Cross-preference learning toolkit for sentence-level vs context-aware translation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // ---------------------------------------------------------- corpus
    py::class_<Vocab>(m, "Vocab")
        .def(py::init<const std::vector<std::string>&>(), py::arg("tokens"))
        .def_property_readonly_static("PAD", [](py::object) { return Vocab::kPad; })
        .def_property_readonly_static("BOS", [](py::object) { return Vocab::kBos; })
        .def_property_readonly_static("EOS", [](py::object) { return Vocab::kEos; })
        .def_property_readonly_static("SEP", [](py::object) { return Vocab::kSep; })
        .def_property_readonly_static("CTX", [](py::object) { return Vocab::kCtx; })
        .def("__len__", &Vocab::size)
        .def("id_of", &Vocab::id_of, py::arg("token"))
        .def("token_of", &Vocab::token_of, py::arg("id"))
        .def("encode", &Vocab::encode, py::arg("text"))
        .def("detokenize", &Vocab::detokenize, py::arg("ids"))
        .def("save", &Vocab::save, py::arg("path"))
        .def_static("load", &Vocab::load, py::arg("path"))
        .def_static("is_reserved", &Vocab::is_reserved, py::arg("id"));

    py::class_<RawRecord>(m, "RawRecord")
        .def(py::init([](std::string doc_id, std::int32_t index, std::string source, std::string reference) {
                 return RawRecord{std::move(doc_id), index, std::move(source), std::move(reference)};
             }),
             py::arg("doc_id"), py::arg("index"), py::arg("source"), py::arg("reference"))
        .def_readwrite("doc_id", &RawRecord::doc_id)
        .def_readwrite("index", &RawRecord::index)
        .def_readwrite("source", &RawRecord::source)
        .def_readwrite("reference", &RawRecord::reference);

    py::class_<SentenceUnit>(m, "SentenceUnit")
        .def_readonly("doc_id", &SentenceUnit::doc_id)
        .def_readonly("index", &SentenceUnit::index)
        .def_readonly("source", &SentenceUnit::source)
        .def_readonly("reference", &SentenceUnit::reference);

    py::class_<Document>(m, "Document")
        .def_readonly("doc_id", &Document::doc_id)
        .def_readonly("units", &Document::units);

    py::class_<ContextWindow>(m, "ContextWindow")
        .def_readonly("tokens", &ContextWindow::tokens)
        .def_readonly("truncated", &ContextWindow::truncated);

    m.def("build_vocab", &build_vocab, py::arg("records"), py::arg("max_size"));
    m.def("assemble_documents", &assemble_documents, py::arg("records"), py::arg("vocab"));
    m.def("extract_context", &extract_context, py::arg("doc"), py::arg("index"), py::arg("k"));
    m.def("read_corpus_jsonl", &read_corpus_jsonl, py::arg("path"));
    m.def("write_corpus_jsonl", &write_corpus_jsonl, py::arg("records"), py::arg("path"));
    m.def("word_count", &word_count, py::arg("seq"));

    // ------------------------------------------------------- synthetic
    py::class_<SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("n_docs", &SynthConfig::n_docs)
        .def_readwrite("sentences_per_doc", &SynthConfig::sentences_per_doc)
        .def_readwrite("sentence_len", &SynthConfig::sentence_len)
        .def_readwrite("fillers_per_slot", &SynthConfig::fillers_per_slot)
        .def_readwrite("n_ambiguous", &SynthConfig::n_ambiguous)
        .def_readwrite("n_senses", &SynthConfig::n_senses)
        .def_readwrite("topic_repeats", &SynthConfig::topic_repeats)
        .def_readwrite("ambiguity_rate", &SynthConfig::ambiguity_rate);

    py::class_<SynthCorpus>(m, "SynthCorpus")
        .def_readonly("records", &SynthCorpus::records)
        .def_readonly("lexicon", &SynthCorpus::lexicon)
        .def_readonly("senses", &SynthCorpus::senses)
        .def_readonly("topic_tokens", &SynthCorpus::topic_tokens)
        .def_readonly("doc_topic", &SynthCorpus::doc_topic);

    m.def("gen_synthetic_corpus", &gen_synthetic_corpus, py::arg("cfg"), py::arg("seed"));
    m.def("rule_translate", &rule_translate, py::arg("corpus"), py::arg("source"),
          py::arg("topic") = std::nullopt);
    m.def("is_ambiguous_sentence", &is_ambiguous_sentence, py::arg("corpus"), py::arg("source"));
    m.def("save_synth_lexicon", &save_synth_lexicon, py::arg("corpus"), py::arg("path"));
    m.def("load_synth_lexicon", &load_synth_lexicon, py::arg("path"));

    // --------------------------------------------------------- scoring
    py::enum_<MetricKind>(m, "MetricKind")
        .value("S_PROXY", MetricKind::SProxy)
        .value("D_PROXY", MetricKind::DProxy)
        .value("SELECT_AVG", MetricKind::SelectAvg)
        .value("BLEU_PROXY", MetricKind::BleuProxy);

    m.def("s_score", py::overload_cast<std::string_view, std::string_view>(&s_score), py::arg("hyp"),
          py::arg("ref"));
    m.def("d_score", &d_score, py::arg("hyp"), py::arg("ref"), py::arg("prev_hyp") = std::nullopt,
          py::arg("prev_ref") = std::nullopt);
    m.def("bleu_proxy", py::overload_cast<std::string_view, std::string_view>(&bleu_proxy), py::arg("hyp"),
          py::arg("ref"));
    m.def(
        "qe_score",
        [](std::string_view hyp, std::string_view ref, double sigma, std::uint64_t seed) {
            Rng rng(seed);
            return qe_score(hyp, ref, sigma, rng);
        },
        py::arg("hyp"), py::arg("ref"), py::arg("sigma"), py::arg("seed") = 0);
    m.def(
        "selection_score",
        [](const std::string& hyp, const std::string& ref, std::optional<std::string> prev_hyp,
           std::optional<std::string> prev_ref, MetricKind kind) {
            return selection_score({hyp, ref, std::move(prev_hyp), std::move(prev_ref)}, kind);
        },
        py::arg("hyp"), py::arg("ref"), py::arg("prev_hyp") = std::nullopt,
        py::arg("prev_ref") = std::nullopt, py::arg("kind") = MetricKind::SelectAvg);

    // ---------------------------------------------------------- policy
    py::class_<PolicyDims>(m, "PolicyDims")
        .def(py::init([](std::size_t vocab, std::size_t embed, std::size_t hidden) {
                 return PolicyDims{vocab, embed, hidden};
             }),
             py::arg("vocab"), py::arg("embed") = 32, py::arg("hidden") = 64)
        .def_readwrite("vocab", &PolicyDims::vocab)
        .def_readwrite("embed", &PolicyDims::embed)
        .def_readwrite("hidden", &PolicyDims::hidden);

    py::class_<PolicyParams>(m, "PolicyParams")
        .def_readonly("dims", &PolicyParams::dims)
        .def_static("zeros", &PolicyParams::zeros, py::arg("dims"))
        .def_static(
            "random_init",
            [](const PolicyDims& dims, double scale, std::uint64_t seed) {
                Rng rng(seed);
                return PolicyParams::random_init(dims, scale, rng);
            },
            py::arg("dims"), py::arg("scale"), py::arg("seed"))
        .def("parameter_count", &PolicyParams::parameter_count)
        .def("tensor",
             [](const PolicyParams& p, const std::string& name) {
                 const auto& names = PolicyParams::tensor_names();
                 auto tensors = p.tensors();
                 for (std::size_t i = 0; i < names.size(); ++i) {
                     if (name == names[i]) return tensor_rows(*tensors[i]);
                 }
                 throw UsageError("unknown tensor '" + name + "'");
             },
             py::arg("name"))
        .def_property_readonly_static("tensor_names", [](py::object) {
            return std::vector<std::string>(PolicyParams::tensor_names().begin(),
                                            PolicyParams::tensor_names().end());
        });

    py::enum_<ConditionKind>(m, "ConditionKind")
        .value("SENT_ONLY", ConditionKind::SentOnly)
        .value("WITH_CONTEXT", ConditionKind::WithContext);

    py::class_<Condition>(m, "Condition")
        .def_static("sentence_only", &Condition::sentence_only, py::arg("source"))
        .def_static("with_context", &Condition::with_context, py::arg("source"), py::arg("context"))
        .def_readonly("kind", &Condition::kind)
        .def_readonly("source", &Condition::source)
        .def_readonly("context", &Condition::context);

    m.def("encode_condition", &encode_condition, py::arg("params"), py::arg("cond"));
    m.def("log_prob", &log_prob, py::arg("params"), py::arg("cond"), py::arg("y"));
    m.def("next_token_log_probs", &next_token_log_probs, py::arg("params"), py::arg("cond"),
          py::arg("prefix"));
    m.def(
        "sample",
        [](const PolicyParams& params, const Condition& cond, double temperature, std::size_t max_len,
           std::uint64_t seed) {
            Rng rng(seed);
            return sample(params, cond, temperature, max_len, rng);
        },
        py::arg("params"), py::arg("cond"), py::arg("temperature"), py::arg("max_len"), py::arg("seed"));
    m.def(
        "grad_log_prob",
        [](const PolicyParams& params, const Condition& cond, const TokenSeq& y) {
            auto [lp, grad] = grad_log_prob(params, cond, y);
            py::dict out;
            const auto& names = PolicyParams::tensor_names();
            auto tensors = grad.tensors();
            for (std::size_t i = 0; i < names.size(); ++i) {
                out[names[i]] = tensor_rows(*tensors[i]);
            }
            return py::make_tuple(lp, out);
        },
        py::arg("params"), py::arg("cond"), py::arg("y"));
    m.def("save_checkpoint", &save_checkpoint, py::arg("params"), py::arg("path"));
    m.def("load_checkpoint", py::overload_cast<const std::filesystem::path&>(&load_checkpoint),
          py::arg("path"));
    m.def("make_condition", &make_condition, py::arg("doc"), py::arg("index"), py::arg("kind"), py::arg("k"));
    m.def("target_sequence", &target_sequence, py::arg("unit"));
    m.def("greedy_decode", &greedy_decode, py::arg("params"), py::arg("cond"), py::arg("max_len"));

    // ------------------------------------------------------- objective
    py::class_<LossBreakdown>(m, "LossBreakdown")
        .def_readonly("contrastive", &LossBreakdown::contrastive)
        .def_readonly("nll", &LossBreakdown::nll)
        .def_readonly("total", &LossBreakdown::total)
        .def_readonly("d_lp_plus", &LossBreakdown::d_lp_plus)
        .def_readonly("d_lp_minus", &LossBreakdown::d_lp_minus);

    m.def(
        "cpo_loss",
        [](double lp_plus, double lp_minus, double beta) { return cpo_loss({lp_plus, lp_minus, beta}); },
        py::arg("lp_plus"), py::arg("lp_minus"), py::arg("beta") = 0.1);
    m.def(
        "c_cpo_loss",
        [](double lp_plus, double lp_minus, double beta) { return c_cpo_loss({lp_plus, lp_minus, beta}); },
        py::arg("lp_plus"), py::arg("lp_minus"), py::arg("beta") = 0.1);

    auto to_pairs = [](const std::vector<std::pair<double, double>>& raw) {
        std::vector<PairLogProbs> out;
        out.reserve(raw.size());
        for (const auto& [plus, minus] : raw) out.push_back({plus, minus});
        return out;
    };
    m.def(
        "intra_loss",
        [to_pairs](const std::vector<std::pair<double, double>>& batch_s,
                   const std::vector<std::pair<double, double>>& batch_c, double beta) {
            return intra_loss(to_pairs(batch_s), to_pairs(batch_c), beta);
        },
        py::arg("batch_s"), py::arg("batch_c"), py::arg("beta") = 0.1);
    m.def(
        "cross_loss",
        [to_pairs](const std::vector<std::pair<double, double>>& wl_plus,
                   const std::vector<std::pair<double, double>>& wl_minus, double beta) {
            return cross_loss(to_pairs(wl_plus), to_pairs(wl_minus), beta);
        },
        py::arg("wl_plus"), py::arg("wl_minus"), py::arg("beta") = 0.1);
    m.def("cpl_loss", &cpl_loss, py::arg("intra"), py::arg("cross"));

    // ----------------------------------------------------------- pairs
    py::enum_<Cond>(m, "Cond").value("SENT", Cond::Sent).value("CTX", Cond::Ctx);
    py::enum_<RivalRank>(m, "RivalRank").value("PLUS", RivalRank::Plus).value("MINUS", RivalRank::Minus);
    py::enum_<CrossAblation>(m, "CrossAblation")
        .value("FULL", CrossAblation::Full)
        .value("DROP_WL_PLUS", CrossAblation::DropWlPlus)
        .value("DROP_WL_MINUS", CrossAblation::DropWlMinus);

    py::class_<UnitKey>(m, "UnitKey")
        .def(py::init([](std::string doc_id, std::int32_t index) {
                 return UnitKey{std::move(doc_id), index};
             }),
             py::arg("doc_id"), py::arg("index"))
        .def_readwrite("doc_id", &UnitKey::doc_id)
        .def_readwrite("index", &UnitKey::index);

    py::class_<Candidate>(m, "Candidate")
        .def(py::init<>())
        .def_readwrite("condition", &Candidate::condition)
        .def_readwrite("tokens", &Candidate::tokens)
        .def_readwrite("score", &Candidate::score);

    py::class_<CandidateSet>(m, "CandidateSet")
        .def(py::init<>())
        .def_readwrite("key", &CandidateSet::key)
        .def_property(
            "cands", [](const CandidateSet& s) { return std::vector<Candidate>(s.cands.begin(), s.cands.end()); },
            [](CandidateSet& s, const std::vector<Candidate>& v) {
                if (v.size() != 4) throw UsageError("CandidateSet needs exactly four candidates");
                std::copy(v.begin(), v.end(), s.cands.begin());
            });

    py::class_<IntraPair>(m, "IntraPair")
        .def_readonly("key", &IntraPair::key)
        .def_readonly("condition", &IntraPair::condition)
        .def_readonly("preferred", &IntraPair::preferred)
        .def_readonly("dispreferred", &IntraPair::dispreferred)
        .def_readonly("score_plus", &IntraPair::score_plus)
        .def_readonly("score_minus", &IntraPair::score_minus);

    py::class_<CrossPair>(m, "CrossPair")
        .def_readonly("key", &CrossPair::key)
        .def_readonly("winner_condition", &CrossPair::winner_condition)
        .def_readonly("best", &CrossPair::best)
        .def_readonly("rival", &CrossPair::rival)
        .def_readonly("rival_rank", &CrossPair::rival_rank)
        .def_readonly("winner_score", &CrossPair::winner_score)
        .def_readonly("rival_score", &CrossPair::rival_score);

    py::class_<FilterConfig>(m, "FilterConfig")
        .def(py::init<>())
        .def_readwrite("min_words", &FilterConfig::min_words)
        .def_readwrite("max_words", &FilterConfig::max_words)
        .def_readwrite("min_score", &FilterConfig::min_score)
        .def_readwrite("margin_lo", &FilterConfig::margin_lo)
        .def_readwrite("margin_hi", &FilterConfig::margin_hi);

    py::class_<PairCounts>(m, "PairCounts")
        .def_readonly("candidate_sets", &PairCounts::candidate_sets)
        .def_readonly("sent_labeled", &PairCounts::sent_labeled)
        .def_readonly("sent_kept", &PairCounts::sent_kept)
        .def_readonly("ctx_labeled", &PairCounts::ctx_labeled)
        .def_readonly("ctx_kept", &PairCounts::ctx_kept)
        .def_readonly("cross_built", &PairCounts::cross_built)
        .def_readonly("cross_kept", &PairCounts::cross_kept)
        .def_readonly("cross_ties", &PairCounts::cross_ties);

    py::class_<PairCorpus>(m, "PairCorpus")
        .def(py::init<>())
        .def_readwrite("sent", &PairCorpus::sent)
        .def_readwrite("ctx", &PairCorpus::ctx)
        .def_readwrite("cross", &PairCorpus::cross)
        .def_readonly("counts", &PairCorpus::counts);

    m.def("label_intra", &label_intra, py::arg("candidate_set"), py::arg("condition"));
    m.def("build_cross_pairs", &build_cross_pairs, py::arg("candidate_set"));
    m.def("passes_filter", py::overload_cast<const IntraPair&, const FilterConfig&>(&passes_filter),
          py::arg("pair"), py::arg("cfg"));
    m.def("passes_filter", py::overload_cast<const CrossPair&, const FilterConfig&>(&passes_filter),
          py::arg("pair"), py::arg("cfg"));
    m.def(
        "build_pair_corpus",
        [](const std::vector<CandidateSet>& sets, const FilterConfig& cfg, CrossAblation ablation) {
            return build_pair_corpus(sets, cfg, ablation);
        },
        py::arg("candidates"), py::arg("cfg") = FilterConfig{}, py::arg("ablation") = CrossAblation::Full);
    m.def("write_pairs_jsonl", &write_pairs_jsonl, py::arg("pairs"), py::arg("path"));
    m.def("read_pairs_jsonl", &read_pairs_jsonl, py::arg("path"));

    // --------------------------------------------------------- trainer
    py::enum_<OptimizerKind>(m, "OptimizerKind")
        .value("SGD", OptimizerKind::Sgd)
        .value("MOMENTUM_SGD", OptimizerKind::MomentumSgd);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("sft_epochs", &TrainConfig::sft_epochs)
        .def_readwrite("cpl_epochs", &TrainConfig::cpl_epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("beta", &TrainConfig::beta)
        .def_readwrite("optimizer", &TrainConfig::optimizer)
        .def_readwrite("grad_clip", &TrainConfig::grad_clip)
        .def_readwrite("temperature", &TrainConfig::temperature)
        .def_readwrite("max_len", &TrainConfig::max_len)
        .def_readwrite("context_k", &TrainConfig::context_k)
        .def_readwrite("selection_metric", &TrainConfig::selection_metric)
        .def_static("from_file", &TrainConfig::from_file, py::arg("path"))
        .def("save", &TrainConfig::save, py::arg("path"));

    py::class_<StepLogRow>(m, "StepLogRow")
        .def_readonly("step", &StepLogRow::step)
        .def_readonly("intra", &StepLogRow::intra)
        .def_readonly("cross", &StepLogRow::cross)
        .def_readonly("cpl", &StepLogRow::cpl)
        .def_readonly("mean_margin_s", &StepLogRow::mean_margin_s)
        .def_readonly("mean_margin_c", &StepLogRow::mean_margin_c)
        .def_readonly("mean_margin_cr", &StepLogRow::mean_margin_cr);

    py::class_<TrainReport>(m, "TrainReport")
        .def(py::init<>())
        .def_readonly("epoch_losses", &TrainReport::epoch_losses)
        .def_readonly("steps", &TrainReport::steps)
        .def_readonly("pairs_sent", &TrainReport::pairs_sent)
        .def_readonly("pairs_ctx", &TrainReport::pairs_ctx)
        .def_readonly("pairs_cross", &TrainReport::pairs_cross)
        .def_readonly("wall_clock_sec", &TrainReport::wall_clock_sec);

    m.def(
        "sft",
        [](const PolicyParams& params, const std::vector<Document>& corpus, const TrainConfig& cfg) {
            TrainReport report;
            auto out = sft(params, corpus, cfg, &report);
            return py::make_tuple(std::move(out), std::move(report));
        },
        py::arg("params"), py::arg("corpus"), py::arg("cfg"));
    m.def("generate_candidates", &generate_candidates, py::arg("params"), py::arg("corpus"), py::arg("vocab"),
          py::arg("cfg"));
    m.def(
        "train_cpl",
        [](const PolicyParams& params, const PairCorpus& pairs, const std::vector<Document>& corpus,
           const TrainConfig& cfg) {
            TrainReport report;
            auto out = train_cpl(params, pairs, corpus, cfg, &report);
            return py::make_tuple(std::move(out), std::move(report));
        },
        py::arg("params"), py::arg("pairs"), py::arg("corpus"), py::arg("cfg"));
    m.def(
        "pair_ranking_accuracy",
        [](const PolicyParams& params, const PairCorpus& pairs, const std::vector<Document>& corpus,
           std::size_t k) {
            const auto resolved = resolve_pairs(pairs, corpus, k);
            return pair_ranking_accuracy(params, resolved);
        },
        py::arg("params"), py::arg("pairs"), py::arg("corpus"), py::arg("k"));

    // --------------------------------------------------------- evalkit
    py::class_<EvalRow>(m, "EvalRow")
        .def_readonly("key", &EvalRow::key)
        .def_readonly("hyp_sent", &EvalRow::hyp_sent)
        .def_readonly("hyp_ctx", &EvalRow::hyp_ctx)
        .def_readonly("s_sent", &EvalRow::s_sent)
        .def_readonly("s_ctx", &EvalRow::s_ctx)
        .def_readonly("d_sent", &EvalRow::d_sent)
        .def_readonly("d_ctx", &EvalRow::d_ctx)
        .def_readonly("lp_sent", &EvalRow::lp_sent)
        .def_readonly("lp_ctx", &EvalRow::lp_ctx);

    py::class_<CorpusSummary>(m, "CorpusSummary")
        .def_readonly("mean_s_sent", &CorpusSummary::mean_s_sent)
        .def_readonly("mean_s_ctx", &CorpusSummary::mean_s_ctx)
        .def_readonly("mean_d_sent", &CorpusSummary::mean_d_sent)
        .def_readonly("mean_d_ctx", &CorpusSummary::mean_d_ctx)
        .def_readonly("rows", &CorpusSummary::rows);

    py::class_<DeltaBins>(m, "DeltaBins")
        .def_readonly("clearly_better", &DeltaBins::clearly_better)
        .def_readonly("better", &DeltaBins::better)
        .def_readonly("on_par", &DeltaBins::on_par)
        .def_readonly("worse", &DeltaBins::worse)
        .def_readonly("clearly_worse", &DeltaBins::clearly_worse)
        .def_readonly("t1", &DeltaBins::t1)
        .def_readonly("t2", &DeltaBins::t2)
        .def_static("from_percent", &DeltaBins::from_percent, py::arg("threshold"));

    py::enum_<RerankStrategy>(m, "RerankStrategy")
        .value("PROB", RerankStrategy::Prob)
        .value("QE", RerankStrategy::Qe)
        .value("ORACLE", RerankStrategy::Oracle);

    py::class_<RerankResult>(m, "RerankResult")
        .def_readonly("mean_selected_score", &RerankResult::mean_selected_score)
        .def_readonly("picked_ctx", &RerankResult::picked_ctx)
        .def_readonly("rows", &RerankResult::rows);

    py::class_<RobustnessSummary>(m, "RobustnessSummary")
        .def_readonly("gold_mean", &RobustnessSummary::gold_mean)
        .def_readonly("random_mean", &RobustnessSummary::random_mean)
        .def_readonly("sent_mean", &RobustnessSummary::sent_mean)
        .def_readonly("rows", &RobustnessSummary::rows);

    py::enum_<DecodeMode>(m, "DecodeMode")
        .value("GREEDY", DecodeMode::Greedy)
        .value("SAMPLED", DecodeMode::Sampled);
    m.def("decode_corpus", &decode_corpus, py::arg("params"), py::arg("corpus"), py::arg("kind"), py::arg("k"),
          py::arg("max_len"), py::arg("mode") = DecodeMode::Greedy, py::arg("seed") = 0);
    m.def("build_eval_rows", &build_eval_rows, py::arg("params"), py::arg("corpus"), py::arg("vocab"),
          py::arg("k"), py::arg("max_len"));
    m.def(
        "corpus_eval",
        [](const std::vector<EvalRow>& rows) { return corpus_eval(rows); }, py::arg("rows"));
    m.def(
        "oracle_select_mean",
        [](const std::vector<EvalRow>& rows) { return oracle_select_mean(rows); }, py::arg("rows"));
    m.def(
        "delta_bins",
        [](const std::vector<EvalRow>& rows, double t1, double t2) { return delta_bins(rows, t1, t2); },
        py::arg("rows"), py::arg("t1") = 0.005, py::arg("t2") = 0.01);
    m.def(
        "rerank",
        [](const std::vector<EvalRow>& rows, const std::vector<Document>& corpus, const Vocab& vocab,
           RerankStrategy strategy, bool length_norm, double qe_sigma, std::uint64_t qe_seed) {
            return rerank(rows, corpus, vocab, strategy, length_norm, qe_sigma, qe_seed);
        },
        py::arg("rows"), py::arg("corpus"), py::arg("vocab"), py::arg("strategy"),
        py::arg("length_norm") = true, py::arg("qe_sigma") = 0.0, py::arg("qe_seed") = 0);
    m.def(
        "context_robustness",
        [](const PolicyParams& params, const std::vector<Document>& corpus, const Vocab& vocab,
           const std::function<bool(const SentenceUnit&)>& subset, std::size_t k, std::size_t max_len,
           std::uint64_t seed) { return context_robustness(params, corpus, vocab, subset, k, max_len, seed); },
        py::arg("params"), py::arg("corpus"), py::arg("vocab"), py::arg("subset"), py::arg("k"),
        py::arg("max_len"), py::arg("seed"));

    // -------------------------------------------------------- manifest
    m.def("sha256_hex", &sha256_hex, py::arg("data"));
    m.def("sha256_file", &sha256_file, py::arg("path"));
}
