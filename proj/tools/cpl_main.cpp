// cpl: end-to-end pipeline driver.
//
// Stages: prepare -> sft -> candidates -> pairs -> train -> eval -> analyze.
// Every stage reads prior artifacts from disk, verifies their recorded
// hashes, and writes its own outputs plus a manifest. Exit codes: 0 ok,
// 2 validation failure, 3 numeric/training failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

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

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
    std::string out_dir;
    bool json = false;
};

struct LoadedData {
    std::vector<cpl::RawRecord> records;
    std::vector<cpl::Document> docs;
    cpl::Vocab vocab;
    fs::path corpus_path;
    fs::path vocab_path;
};

LoadedData load_data(const fs::path& data_dir, const std::string& split = "train") {
    LoadedData data;
    if (split == "train") {
        data.corpus_path = cpl::require_artifact(data_dir, "corpus.jsonl");
    } else if (split == "eval") {
        data.corpus_path = cpl::require_artifact(data_dir, "eval_corpus.jsonl");
    } else {
        throw cpl::ConfigError("unknown --split '" + split + "' (want train|eval)");
    }
    data.vocab_path = cpl::require_artifact(data_dir, "vocab.txt");
    data.records = cpl::read_corpus_jsonl(data.corpus_path);
    data.vocab = cpl::Vocab::load(data.vocab_path);
    data.docs = cpl::assemble_documents(data.records, data.vocab);
    return data;
}

cpl::ArtifactRef make_ref(const std::string& name, const fs::path& path) {
    return {name, path.lexically_normal().string(), cpl::sha256_file(path)};
}

void ensure_out_dir(const std::string& out) {
    if (out.empty()) throw cpl::ConfigError("--out is required");
    fs::create_directories(out);
}

ojson config_json(const cpl::TrainConfig& cfg) {
    ojson j;
    j["seed"] = cfg.seed;
    j["sft_epochs"] = cfg.sft_epochs;
    j["cpl_epochs"] = cfg.cpl_epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["beta"] = cfg.beta;
    j["optimizer"] = cfg.optimizer == cpl::OptimizerKind::Sgd ? "plain-sgd" : "momentum-sgd";
    j["grad_clip"] = cfg.grad_clip;
    j["temperature"] = cfg.temperature;
    j["max_len"] = cfg.max_len;
    j["context_k"] = cfg.context_k;
    j["selection_metric"] = std::string(cpl::metric_kind_name(cfg.selection_metric));
    return j;
}

void write_report_json(const cpl::TrainReport& report, const fs::path& path) {
    ojson j;
    j["epochs"] = report.epoch_losses.size();
    j["steps"] = report.steps.size();
    j["epoch_losses"] = report.epoch_losses;
    ojson pairs;
    pairs["sent"] = report.pairs_sent;
    pairs["ctx"] = report.pairs_ctx;
    pairs["cross"] = report.pairs_cross;
    j["pair_sets"] = std::move(pairs);
    j["checkpoint"] = report.checkpoint_ref;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw cpl::ConfigError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

void emit(const CommonOpts& common, const ojson& summary) {
    if (common.json) {
        std::cout << summary.dump() << std::endl;
    } else {
        for (const auto& [key, value] : summary.items()) {
            std::cout << key << ": " << value.dump() << '\n';
        }
    }
}

// ---------------------------------------------------------------- prepare

struct PrepareOpts {
    CommonOpts common;
    std::string in_path;
    bool synthetic = false;
    std::uint64_t seed = 0;
    std::size_t max_vocab = 512;
    std::size_t eval_docs = 0;
    cpl::SynthConfig synth;
};

int run_prepare(const PrepareOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);

    std::vector<cpl::RawRecord> records;       // training split
    std::vector<cpl::RawRecord> eval_records;  // held-out documents
    std::optional<cpl::SynthCorpus> synth;
    if (opt.synthetic) {
        cpl::SynthConfig gen_cfg = opt.synth;
        gen_cfg.n_docs += opt.eval_docs;  // one generation pass, then a document split
        synth = cpl::gen_synthetic_corpus(gen_cfg, opt.seed);
        const std::size_t train_sentences = opt.synth.n_docs * opt.synth.sentences_per_doc;
        records.assign(synth->records.begin(),
                       synth->records.begin() + static_cast<std::ptrdiff_t>(train_sentences));
        eval_records.assign(synth->records.begin() + static_cast<std::ptrdiff_t>(train_sentences),
                            synth->records.end());
    } else {
        if (opt.in_path.empty()) throw cpl::ConfigError("prepare: need --in FILE or --synthetic");
        if (opt.eval_docs > 0) throw cpl::ConfigError("prepare: --eval-docs applies to --synthetic only");
        records = cpl::read_corpus_jsonl(opt.in_path);
        if (records.empty()) throw cpl::ConfigError("prepare: empty corpus " + opt.in_path);
    }

    // Vocabulary covers both splits so one checkpoint serves both.
    std::vector<cpl::RawRecord> all_records = records;
    all_records.insert(all_records.end(), eval_records.begin(), eval_records.end());
    const auto vocab = cpl::build_vocab(all_records, opt.max_vocab);
    const auto docs = cpl::assemble_documents(records, vocab);  // validates invariants
    if (!eval_records.empty()) cpl::assemble_documents(eval_records, vocab);

    cpl::write_corpus_jsonl(records, out / "corpus.jsonl");
    if (!eval_records.empty()) cpl::write_corpus_jsonl(eval_records, out / "eval_corpus.jsonl");
    vocab.save(out / "vocab.txt");
    if (synth) cpl::save_synth_lexicon(*synth, out / "synth_lexicon.json");

    cpl::Manifest manifest;
    manifest.command = "prepare";
    manifest.seed = opt.seed;
    manifest.config["max_vocab"] = opt.max_vocab;
    manifest.config["synthetic"] = opt.synthetic;
    if (opt.synthetic) {
        manifest.config["docs"] = opt.synth.n_docs;
        manifest.config["eval_docs"] = opt.eval_docs;
        manifest.config["sentences_per_doc"] = opt.synth.sentences_per_doc;
        manifest.config["sentence_len"] = opt.synth.sentence_len;
        manifest.config["fillers_per_slot"] = opt.synth.fillers_per_slot;
        manifest.config["ambiguous"] = opt.synth.n_ambiguous;
        manifest.config["senses"] = opt.synth.n_senses;
        manifest.config["topic_repeats"] = opt.synth.topic_repeats;
        manifest.config["rho"] = opt.synth.ambiguity_rate;
    } else {
        manifest.inputs.push_back(make_ref("input_corpus", opt.in_path));
    }
    manifest.outputs.push_back(make_ref("corpus.jsonl", out / "corpus.jsonl"));
    if (!eval_records.empty()) manifest.outputs.push_back(make_ref("eval_corpus.jsonl", out / "eval_corpus.jsonl"));
    manifest.outputs.push_back(make_ref("vocab.txt", out / "vocab.txt"));
    if (synth) manifest.outputs.push_back(make_ref("synth_lexicon.json", out / "synth_lexicon.json"));
    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");

    ojson summary;
    summary["command"] = "prepare";
    summary["documents"] = docs.size();
    summary["sentences"] = records.size();
    summary["vocab_size"] = vocab.size();
    summary["out"] = out.string();
    emit(opt.common, summary);
    return kExitOk;
}

// -------------------------------------------------------------------- sft

struct TrainStageOpts {
    CommonOpts common;
    std::string data_dir;
    std::string model_dir;  // train only
    std::string pairs_dir;  // train only
    std::string config_path;
    cpl::TrainConfig cfg;
    std::vector<std::pair<std::string, std::string>> overrides;
    double init_scale = 0.3;
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 64;
};

cpl::TrainConfig effective_config(const TrainStageOpts& opt) {
    cpl::TrainConfig cfg = opt.config_path.empty() ? cpl::TrainConfig{} : cpl::TrainConfig::from_file(opt.config_path);
    for (const auto& [key, value] : opt.overrides) cfg.apply_line(key, value);
    return cfg;
}

int run_sft(const TrainStageOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);
    const auto cfg = effective_config(opt);
    const auto data = load_data(opt.data_dir);

    cpl::Rng init_rng(cpl::mix64(cfg.seed ^ 0x1217u));
    cpl::PolicyDims dims{data.vocab.size(), opt.embed_dim, opt.hidden_dim};
    auto params = cpl::PolicyParams::random_init(dims, opt.init_scale, init_rng);

    cpl::TrainReport report;
    try {
        params = cpl::sft(std::move(params), data.docs, cfg, &report);
    } catch (const cpl::TrainingError& e) {
        if (e.last_good) cpl::save_checkpoint(*e.last_good, out / "model.last_good.ckpt");
        std::cerr << "error: " << e.what() << " (last good checkpoint saved)\n";
        return kExitNumeric;
    }
    cpl::save_checkpoint(params, out / "model.ckpt");
    report.checkpoint_ref = (out / "model.ckpt").lexically_normal().string();
    cpl::write_sft_log_csv(report, out / "sft_log.csv");
    write_report_json(report, out / "report.json");
    std::cerr << "sft: " << report.steps.size() << " steps in " << report.wall_clock_sec << "s\n";

    cpl::Manifest manifest;
    manifest.command = "sft";
    manifest.seed = cfg.seed;
    manifest.config = config_json(cfg);
    manifest.config["init_scale"] = opt.init_scale;
    manifest.inputs.push_back(make_ref("corpus.jsonl", data.corpus_path));
    manifest.inputs.push_back(make_ref("vocab.txt", data.vocab_path));
    manifest.outputs.push_back(make_ref("model.ckpt", out / "model.ckpt"));
    manifest.outputs.push_back(make_ref("sft_log.csv", out / "sft_log.csv"));
    manifest.outputs.push_back(make_ref("report.json", out / "report.json"));
    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");

    ojson summary;
    summary["command"] = "sft";
    summary["steps"] = report.steps.size();
    summary["final_epoch_nll"] = report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back();
    summary["checkpoint"] = report.checkpoint_ref;
    emit(opt.common, summary);
    return kExitOk;
}

// ------------------------------------------------------------- candidates

int run_candidates(const TrainStageOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);
    const auto cfg = effective_config(opt);
    const auto data = load_data(opt.data_dir);
    const auto model_path = cpl::require_artifact(opt.model_dir, "model.ckpt");
    const auto params = cpl::load_checkpoint(model_path, data.vocab);

    const auto sets = cpl::generate_candidates(params, data.docs, data.vocab, cfg);
    cpl::write_candidates_jsonl(sets, out / "candidates.jsonl");

    // Score dump: every candidate under every scorer.
    {
        std::ofstream os(out / "scores.csv", std::ios::binary);
        if (!os) throw cpl::ConfigError("cannot write scores.csv");
        os << "doc_id,index,condition,candidate_idx,s,d,select,bleu\n";
        char buf[160];
        for (const auto& set : sets) {
            const cpl::SentenceUnit* unit = cpl::find_unit(data.docs, set.key.doc_id, set.key.index);
            const std::string ref = data.vocab.detokenize(unit->reference);
            std::optional<std::string> prev_ref;
            if (set.key.index > 0) {
                const auto* prev = cpl::find_unit(data.docs, set.key.doc_id, set.key.index - 1);
                prev_ref = data.vocab.detokenize(prev->reference);
            }
            int idx_s = 0, idx_c = 0;
            for (const auto& cand : set.cands) {
                const std::string hyp = data.vocab.detokenize(cand.tokens);
                cpl::ScoreInputs in{hyp, ref, prev_ref, prev_ref};
                const double s = cpl::s_score(hyp, ref);
                const double d = cpl::selection_score(in, cpl::MetricKind::DProxy);
                const double sel = cpl::selection_score(in, cfg.selection_metric);
                const double bleu = cpl::bleu_proxy(hyp, ref);
                const int idx = cand.condition == cpl::Cond::Sent ? idx_s++ : idx_c++;
                std::snprintf(buf, sizeof(buf), ",%c,%d,%.10g,%.10g,%.10g,%.10g\n",
                              static_cast<char>(cand.condition), idx, s, d, sel, bleu);
                os << '"' << set.key.doc_id << "\"," << set.key.index << buf;
            }
        }
    }

    cpl::Manifest manifest;
    manifest.command = "candidates";
    manifest.seed = cfg.seed;
    manifest.config = config_json(cfg);
    manifest.inputs.push_back(make_ref("corpus.jsonl", data.corpus_path));
    manifest.inputs.push_back(make_ref("vocab.txt", data.vocab_path));
    manifest.inputs.push_back(make_ref("model.ckpt", model_path));
    manifest.outputs.push_back(make_ref("candidates.jsonl", out / "candidates.jsonl"));
    manifest.outputs.push_back(make_ref("scores.csv", out / "scores.csv"));
    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");

    ojson summary;
    summary["command"] = "candidates";
    summary["candidate_sets"] = sets.size();
    emit(opt.common, summary);
    return kExitOk;
}

// ------------------------------------------------------------------ pairs

struct PairsOpts {
    CommonOpts common;
    std::string data_dir;
    std::string candidates_dir;
    cpl::FilterConfig filter;
    std::string ablation = "full";
};

int run_pairs(const PairsOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);
    const auto cands_path = cpl::require_artifact(opt.candidates_dir, "candidates.jsonl");
    const auto sets = cpl::read_candidates_jsonl(cands_path);
    const auto ablation = cpl::ablation_from_name(opt.ablation);

    const auto pairs = cpl::build_pair_corpus(sets, opt.filter, ablation);
    cpl::write_pairs_jsonl(pairs, out / "pairs.jsonl");
    cpl::write_pair_counts_csv(pairs.counts, out / "counts.csv");

    cpl::Manifest manifest;
    manifest.command = "pairs";
    manifest.config["min_words"] = opt.filter.min_words;
    manifest.config["max_words"] = opt.filter.max_words;
    manifest.config["min_score"] = opt.filter.min_score;
    manifest.config["margin_lo"] = opt.filter.margin_lo;
    manifest.config["margin_hi"] = opt.filter.margin_hi;
    manifest.config["ablation"] = opt.ablation;
    manifest.inputs.push_back(make_ref("candidates.jsonl", cands_path));
    manifest.outputs.push_back(make_ref("pairs.jsonl", out / "pairs.jsonl"));
    manifest.outputs.push_back(make_ref("counts.csv", out / "counts.csv"));
    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");

    ojson summary;
    summary["command"] = "pairs";
    summary["sent"] = pairs.sent.size();
    summary["ctx"] = pairs.ctx.size();
    summary["cross"] = pairs.cross.size();
    summary["cross_ties"] = pairs.counts.cross_ties;
    summary["ablation"] = opt.ablation;
    emit(opt.common, summary);
    return kExitOk;
}

// ------------------------------------------------------------------ train

int run_train(const TrainStageOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);
    const auto cfg = effective_config(opt);
    const auto data = load_data(opt.data_dir);
    const auto model_path = cpl::require_artifact(opt.model_dir, "model.ckpt");
    const auto pairs_path = cpl::require_artifact(opt.pairs_dir, "pairs.jsonl");
    auto params = cpl::load_checkpoint(model_path, data.vocab);
    const auto pairs = cpl::read_pairs_jsonl(pairs_path);

    cpl::TrainReport report;
    try {
        params = cpl::train_cpl(std::move(params), pairs, data.docs, cfg, &report);
    } catch (const cpl::TrainingError& e) {
        if (e.last_good) cpl::save_checkpoint(*e.last_good, out / "model.last_good.ckpt");
        std::cerr << "error: " << e.what() << " (last good checkpoint saved)\n";
        return kExitNumeric;
    }
    cpl::save_checkpoint(params, out / "model.ckpt");
    report.checkpoint_ref = (out / "model.ckpt").lexically_normal().string();
    cpl::write_step_log_csv(report, out / "train_log.csv");
    write_report_json(report, out / "report.json");
    std::cerr << "train: " << report.steps.size() << " steps in " << report.wall_clock_sec << "s\n";

    cpl::Manifest manifest;
    manifest.command = "train";
    manifest.seed = cfg.seed;
    manifest.config = config_json(cfg);
    manifest.inputs.push_back(make_ref("corpus.jsonl", data.corpus_path));
    manifest.inputs.push_back(make_ref("vocab.txt", data.vocab_path));
    manifest.inputs.push_back(make_ref("model.ckpt", model_path));
    manifest.inputs.push_back(make_ref("pairs.jsonl", pairs_path));
    manifest.outputs.push_back(make_ref("model.ckpt", out / "model.ckpt"));
    manifest.outputs.push_back(make_ref("train_log.csv", out / "train_log.csv"));
    manifest.outputs.push_back(make_ref("report.json", out / "report.json"));
    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");

    ojson summary;
    summary["command"] = "train";
    summary["steps"] = report.steps.size();
    summary["pairs_sent"] = report.pairs_sent;
    summary["pairs_ctx"] = report.pairs_ctx;
    summary["pairs_cross"] = report.pairs_cross;
    summary["final_epoch_loss"] = report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back();
    emit(opt.common, summary);
    return kExitOk;
}

// ------------------------------------------------------------------- eval

struct EvalOpts {
    CommonOpts common;
    std::string data_dir;
    std::string model_dir;
    std::string split = "train";
    std::size_t context_k = 32;
    std::size_t max_len = 24;
    double t1_percent = 0.5;
    double t2_percent = 1.0;
    std::string report;  // optional: delta-bins
};

int run_eval(const EvalOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);
    const auto data = load_data(opt.data_dir, opt.split);
    const auto model_path = cpl::require_artifact(opt.model_dir, "model.ckpt");
    const auto params = cpl::load_checkpoint(model_path, data.vocab);

    const auto rows = cpl::build_eval_rows(params, data.docs, data.vocab, opt.context_k, opt.max_len);
    const auto summary_stats = cpl::corpus_eval(rows);
    const double oracle = cpl::oracle_select_mean(rows);
    const double t1 = cpl::DeltaBins::from_percent(opt.t1_percent);
    const double t2 = cpl::DeltaBins::from_percent(opt.t2_percent);
    const auto bins = cpl::delta_bins(rows, t1, t2);

    cpl::write_eval_rows_csv(rows, data.vocab, out / "rows.csv");
    cpl::write_delta_bins_csv(bins, out / "delta_bins.csv");
    cpl::write_delta_hist_csv(rows, t1, out / "delta_hist.csv");
    {
        ojson j;
        j["rows"] = summary_stats.rows;
        j["mean_s_sent"] = summary_stats.mean_s_sent;
        j["mean_s_ctx"] = summary_stats.mean_s_ctx;
        j["mean_d_sent"] = summary_stats.mean_d_sent;
        j["mean_d_ctx"] = summary_stats.mean_d_ctx;
        j["oracle_mean"] = oracle;
        ojson b;
        b["CB"] = bins.clearly_better;
        b["B"] = bins.better;
        b["P"] = bins.on_par;
        b["W"] = bins.worse;
        b["CW"] = bins.clearly_worse;
        j["delta_bins"] = std::move(b);
        j["t1"] = t1;
        j["t2"] = t2;
        std::ofstream os(out / "summary.json", std::ios::binary);
        os << j.dump(2) << '\n';
    }

    cpl::Manifest manifest;
    manifest.command = "eval";
    manifest.config["split"] = opt.split;
    manifest.config["context_k"] = opt.context_k;
    manifest.config["max_len"] = opt.max_len;
    manifest.config["t1_percent"] = opt.t1_percent;
    manifest.config["t2_percent"] = opt.t2_percent;
    manifest.inputs.push_back(make_ref(data.corpus_path.filename().string(), data.corpus_path));
    manifest.inputs.push_back(make_ref("vocab.txt", data.vocab_path));
    manifest.inputs.push_back(make_ref("model.ckpt", model_path));
    manifest.outputs.push_back(make_ref("rows.csv", out / "rows.csv"));
    manifest.outputs.push_back(make_ref("summary.json", out / "summary.json"));
    manifest.outputs.push_back(make_ref("delta_bins.csv", out / "delta_bins.csv"));
    manifest.outputs.push_back(make_ref("delta_hist.csv", out / "delta_hist.csv"));
    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");

    ojson summary;
    summary["command"] = "eval";
    summary["rows"] = summary_stats.rows;
    summary["mean_s_sent"] = summary_stats.mean_s_sent;
    summary["mean_s_ctx"] = summary_stats.mean_s_ctx;
    summary["oracle_mean"] = oracle;
    if (opt.report == "delta-bins" || opt.common.json) {
        ojson b;
        b["CB"] = bins.clearly_better;
        b["B"] = bins.better;
        b["P"] = bins.on_par;
        b["W"] = bins.worse;
        b["CW"] = bins.clearly_worse;
        summary["delta_bins"] = std::move(b);
    }
    emit(opt.common, summary);
    return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOpts {
    CommonOpts common;
    std::string eval_dir;
    std::string data_dir;
    std::string model_dir;
    std::string split = "train";
    std::string report;  // delta-bins | rerank | robustness
    double t1_percent = 0.5;
    double t2_percent = 1.0;
    double qe_sigma = 0.02;
    bool raw_prob = false;
    std::uint64_t seed = 0;
    std::string subset = "auto";  // auto | ambiguous | all
    std::size_t context_k = 32;
    std::size_t max_len = 24;
};

int run_analyze(const AnalyzeOpts& opt) {
    ensure_out_dir(opt.common.out_dir);
    const fs::path out(opt.common.out_dir);
    const auto data = load_data(opt.data_dir, opt.split);

    ojson summary;
    summary["command"] = "analyze";
    summary["report"] = opt.report;

    cpl::Manifest manifest;
    manifest.command = "analyze";
    manifest.seed = opt.seed;
    manifest.config["report"] = opt.report;
    manifest.config["split"] = opt.split;
    manifest.inputs.push_back(make_ref(data.corpus_path.filename().string(), data.corpus_path));
    manifest.inputs.push_back(make_ref("vocab.txt", data.vocab_path));

    if (opt.report == "delta-bins") {
        const auto rows_path = cpl::require_artifact(opt.eval_dir, "rows.csv");
        const auto rows = cpl::read_eval_rows_csv(rows_path, data.vocab);
        const auto bins = cpl::delta_bins(rows, cpl::DeltaBins::from_percent(opt.t1_percent),
                                          cpl::DeltaBins::from_percent(opt.t2_percent));
        cpl::write_delta_bins_csv(bins, out / "delta_bins.csv");
        manifest.inputs.push_back(make_ref("rows.csv", rows_path));
        manifest.outputs.push_back(make_ref("delta_bins.csv", out / "delta_bins.csv"));
        ojson b;
        b["CB"] = bins.clearly_better;
        b["B"] = bins.better;
        b["P"] = bins.on_par;
        b["W"] = bins.worse;
        b["CW"] = bins.clearly_worse;
        summary["delta_bins"] = std::move(b);
    } else if (opt.report == "rerank") {
        const auto rows_path = cpl::require_artifact(opt.eval_dir, "rows.csv");
        const auto rows = cpl::read_eval_rows_csv(rows_path, data.vocab);
        const bool length_norm = !opt.raw_prob;
        const auto prob = cpl::rerank(rows, data.docs, data.vocab, cpl::RerankStrategy::Prob, length_norm);
        const auto qe = cpl::rerank(rows, data.docs, data.vocab, cpl::RerankStrategy::Qe, length_norm,
                                    opt.qe_sigma, opt.seed);
        const auto oracle = cpl::rerank(rows, data.docs, data.vocab, cpl::RerankStrategy::Oracle, length_norm);
        {
            std::ofstream os(out / "rerank.csv", std::ios::binary);
            os << "strategy,mean_selected_score,picked_ctx,rows\n";
            char buf[128];
            std::snprintf(buf, sizeof(buf), "prob,%.10g,%zu,%zu\n", prob.mean_selected_score, prob.picked_ctx,
                          prob.rows);
            os << buf;
            std::snprintf(buf, sizeof(buf), "qe,%.10g,%zu,%zu\n", qe.mean_selected_score, qe.picked_ctx, qe.rows);
            os << buf;
            std::snprintf(buf, sizeof(buf), "oracle,%.10g,%zu,%zu\n", oracle.mean_selected_score,
                          oracle.picked_ctx, oracle.rows);
            os << buf;
        }
        manifest.inputs.push_back(make_ref("rows.csv", rows_path));
        manifest.outputs.push_back(make_ref("rerank.csv", out / "rerank.csv"));
        manifest.config["qe_sigma"] = opt.qe_sigma;
        manifest.config["length_norm"] = length_norm;
        summary["prob"] = prob.mean_selected_score;
        summary["qe"] = qe.mean_selected_score;
        summary["oracle"] = oracle.mean_selected_score;
    } else if (opt.report == "robustness") {
        if (opt.model_dir.empty()) throw cpl::ConfigError("analyze --report robustness needs --model DIR");
        const auto model_path = cpl::require_artifact(opt.model_dir, "model.ckpt");
        const auto params = cpl::load_checkpoint(model_path, data.vocab);

        std::function<bool(const cpl::SentenceUnit&)> subset = [](const cpl::SentenceUnit&) { return true; };
        const auto lexicon_path = fs::path(opt.data_dir) / "synth_lexicon.json";
        const bool want_ambiguous =
            opt.subset == "ambiguous" || (opt.subset == "auto" && fs::exists(lexicon_path));
        if (want_ambiguous) {
            if (!fs::exists(lexicon_path)) {
                throw cpl::ConfigError("analyze: --subset ambiguous needs synth_lexicon.json in the data dir");
            }
            auto lexicon = std::make_shared<cpl::SynthCorpus>(cpl::load_synth_lexicon(lexicon_path));
            auto vocab = std::make_shared<cpl::Vocab>(data.vocab);
            subset = [lexicon, vocab](const cpl::SentenceUnit& unit) {
                return unit.index > 0 && cpl::is_ambiguous_sentence(*lexicon, vocab->detokenize(unit.source));
            };
        }
        const auto rob = cpl::context_robustness(params, data.docs, data.vocab, subset, opt.context_k,
                                                 opt.max_len, opt.seed);
        {
            std::ofstream rs(out / "robustness_rows.csv", std::ios::binary);
            rs << "doc_id,index,donor_doc_id,hyp_gold,hyp_random,hyp_sent,s_gold,s_random,s_sent\n";
            char rb[160];
            for (const auto& row : rob.per_row) {
                rs << '"' << row.key.doc_id << "\"," << row.key.index << ",\"" << row.donor_doc_id << "\",\""
                   << data.vocab.detokenize(row.hyp_gold) << "\",\"" << data.vocab.detokenize(row.hyp_random)
                   << "\",\"" << data.vocab.detokenize(row.hyp_sent) << '"';
                std::snprintf(rb, sizeof(rb), ",%.10g,%.10g,%.10g\n", row.s_gold, row.s_random, row.s_sent);
                rs << rb;
            }
            std::ofstream os(out / "robustness.csv", std::ios::binary);
            os << "setting,mean_s,rows\n";
            char buf[96];
            std::snprintf(buf, sizeof(buf), "ctx_gold,%.10g,%zu\n", rob.gold_mean, rob.rows);
            os << buf;
            std::snprintf(buf, sizeof(buf), "ctx_random,%.10g,%zu\n", rob.random_mean, rob.rows);
            os << buf;
            std::snprintf(buf, sizeof(buf), "sent,%.10g,%zu\n", rob.sent_mean, rob.rows);
            os << buf;
        }
        manifest.inputs.push_back(make_ref("model.ckpt", model_path));
        manifest.outputs.push_back(make_ref("robustness.csv", out / "robustness.csv"));
        manifest.outputs.push_back(make_ref("robustness_rows.csv", out / "robustness_rows.csv"));
        manifest.config["subset"] = opt.subset;
        manifest.config["context_k"] = opt.context_k;
        summary["ctx_gold"] = rob.gold_mean;
        summary["ctx_random"] = rob.random_mean;
        summary["sent"] = rob.sent_mean;
        summary["rows"] = rob.rows;
    } else {
        throw cpl::ConfigError("analyze: unknown --report '" + opt.report +
                               "' (want delta-bins|rerank|robustness)");
    }

    manifest.timestamp = cpl::manifest_timestamp();
    manifest.save(out / "manifest.json");
    emit(opt.common, summary);
    return kExitOk;
}

void add_common(CLI::App* cmd, CommonOpts& common) {
    cmd->add_option("--out", common.out_dir, "Output directory")->required();
    cmd->add_flag("--json", common.json, "Machine-readable JSON summary on stdout");
}

// Track which train-config flags were set and forward them as overrides.
struct OverrideBinder {
    CLI::App* cmd;
    TrainStageOpts* opts;

    void bind(const std::string& flag, const std::string& key, const std::string& help) {
        TrainStageOpts* target = opts;
        cmd->add_option_function<std::string>(
            flag, [target, key](const std::string& v) { target->overrides.emplace_back(key, v); }, help);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-preference learning pipeline for sentence-level vs context-aware translation"};
    app.require_subcommand(1);

    PrepareOpts prep;
    auto* cmd_prepare = app.add_subcommand("prepare", "Validate or synthesize a corpus; emit corpus + vocab");
    add_common(cmd_prepare, prep.common);
    cmd_prepare->add_option("--in", prep.in_path, "Input corpus JSONL");
    cmd_prepare->add_flag("--synthetic", prep.synthetic, "Generate the synthetic context task instead");
    cmd_prepare->add_option("--seed", prep.seed, "Generation seed");
    cmd_prepare->add_option("--max-vocab", prep.max_vocab, "Vocabulary budget (most frequent tokens)");
    cmd_prepare->add_option("--eval-docs", prep.eval_docs, "Synthetic: extra held-out documents");
    cmd_prepare->add_option("--docs", prep.synth.n_docs, "Synthetic: number of documents");
    cmd_prepare->add_option("--sentences", prep.synth.sentences_per_doc, "Synthetic: sentences per document");
    cmd_prepare->add_option("--sentence-len", prep.synth.sentence_len, "Synthetic: tokens per sentence");
    cmd_prepare->add_option("--fillers", prep.synth.fillers_per_slot, "Synthetic: filler vocabulary per slot");
    cmd_prepare->add_option("--ambiguous", prep.synth.n_ambiguous, "Synthetic: distinct ambiguous tokens");
    cmd_prepare->add_option("--senses", prep.synth.n_senses, "Synthetic: senses per ambiguous token");
    cmd_prepare->add_option("--topic-repeats", prep.synth.topic_repeats, "Synthetic: topic copies in sentence 0");
    cmd_prepare->add_option("--rho", prep.synth.ambiguity_rate, "Synthetic: ambiguous sentence fraction");

    TrainStageOpts sft_opts;
    auto* cmd_sft = app.add_subcommand("sft", "Cold-start likelihood fine-tuning on both conditions");
    add_common(cmd_sft, sft_opts.common);
    cmd_sft->add_option("--data", sft_opts.data_dir, "Prepared data directory")->required();
    cmd_sft->add_option("--config", sft_opts.config_path, "key=value training config file");
    cmd_sft->add_option("--init-scale", sft_opts.init_scale, "Random init scale");
    cmd_sft->add_option("--embed-dim", sft_opts.embed_dim, "Embedding width d");
    cmd_sft->add_option("--hidden-dim", sft_opts.hidden_dim, "Recurrent width h");
    OverrideBinder sft_binder{cmd_sft, &sft_opts};
    sft_binder.bind("--seed", "seed", "Run seed");
    sft_binder.bind("--sft-epochs", "sft_epochs", "SFT epochs");
    sft_binder.bind("--batch-size", "batch_size", "Batch size");
    sft_binder.bind("--lr", "learning_rate", "Learning rate");
    sft_binder.bind("--optimizer", "optimizer", "plain-sgd | momentum-sgd");
    sft_binder.bind("--grad-clip", "grad_clip", "Gradient L2 clip");
    sft_binder.bind("--context-k", "context_k", "Context budget K");

    TrainStageOpts cand_opts;
    auto* cmd_candidates = app.add_subcommand("candidates", "Sample and score translation candidates");
    add_common(cmd_candidates, cand_opts.common);
    cmd_candidates->add_option("--data", cand_opts.data_dir, "Prepared data directory")->required();
    cmd_candidates->add_option("--model", cand_opts.model_dir, "Checkpoint directory")->required();
    cmd_candidates->add_option("--config", cand_opts.config_path, "key=value training config file");
    OverrideBinder cand_binder{cmd_candidates, &cand_opts};
    cand_binder.bind("--seed", "seed", "Sampling seed");
    cand_binder.bind("--temperature", "temperature", "Sampling temperature");
    cand_binder.bind("--max-len", "max_len", "Sample length cap");
    cand_binder.bind("--context-k", "context_k", "Context budget K");
    cand_binder.bind("--metric", "selection_metric", "Selection metric: s|d|avg|bleu");

    PairsOpts pairs_opts;
    auto* cmd_pairs = app.add_subcommand("pairs", "Build, label, and filter preference pairs");
    add_common(cmd_pairs, pairs_opts.common);
    cmd_pairs->add_option("--data", pairs_opts.data_dir, "Prepared data directory")->required();
    cmd_pairs->add_option("--candidates", pairs_opts.candidates_dir, "Candidates directory")->required();
    cmd_pairs->add_option("--ablation", pairs_opts.ablation, "full | drop_wl_plus | drop_wl_minus");
    cmd_pairs->add_option("--min-words", pairs_opts.filter.min_words, "Filter: min words");
    cmd_pairs->add_option("--max-words", pairs_opts.filter.max_words, "Filter: max words");
    cmd_pairs->add_option("--min-score", pairs_opts.filter.min_score, "Filter: min quality score");
    cmd_pairs->add_option("--margin-lo", pairs_opts.filter.margin_lo, "Filter: min score margin");
    cmd_pairs->add_option("--margin-hi", pairs_opts.filter.margin_hi, "Filter: max score margin");

    TrainStageOpts train_opts;
    auto* cmd_train = app.add_subcommand("train", "Preference optimization over the pair sets");
    add_common(cmd_train, train_opts.common);
    cmd_train->add_option("--data", train_opts.data_dir, "Prepared data directory")->required();
    cmd_train->add_option("--model", train_opts.model_dir, "Starting checkpoint directory")->required();
    cmd_train->add_option("--pairs", train_opts.pairs_dir, "Pairs directory")->required();
    cmd_train->add_option("--config", train_opts.config_path, "key=value training config file");
    OverrideBinder train_binder{cmd_train, &train_opts};
    train_binder.bind("--seed", "seed", "Run seed");
    train_binder.bind("--cpl-epochs", "cpl_epochs", "Preference-training epochs");
    train_binder.bind("--batch-size", "batch_size", "Batch size");
    train_binder.bind("--lr", "learning_rate", "Learning rate");
    train_binder.bind("--beta", "beta", "Preference separation strength");
    train_binder.bind("--optimizer", "optimizer", "plain-sgd | momentum-sgd");
    train_binder.bind("--grad-clip", "grad_clip", "Gradient L2 clip");
    train_binder.bind("--context-k", "context_k", "Context budget K");

    EvalOpts eval_opts;
    auto* cmd_eval = app.add_subcommand("eval", "Decode both conditions and score the corpus");
    add_common(cmd_eval, eval_opts.common);
    cmd_eval->add_option("--data", eval_opts.data_dir, "Prepared data directory")->required();
    cmd_eval->add_option("--model", eval_opts.model_dir, "Checkpoint directory")->required();
    cmd_eval->add_option("--split", eval_opts.split, "Corpus split: train | eval");
    cmd_eval->add_option("--context-k", eval_opts.context_k, "Context budget K");
    cmd_eval->add_option("--max-len", eval_opts.max_len, "Decode length cap");
    cmd_eval->add_option("--t1", eval_opts.t1_percent, "Delta-bin threshold t1 (0-100 scale)");
    cmd_eval->add_option("--t2", eval_opts.t2_percent, "Delta-bin threshold t2 (0-100 scale)");
    cmd_eval->add_option("--report", eval_opts.report, "Extra stdout report: delta-bins");

    AnalyzeOpts an_opts;
    auto* cmd_analyze = app.add_subcommand("analyze", "Reports over evaluation artifacts");
    add_common(cmd_analyze, an_opts.common);
    cmd_analyze->add_option("--eval", an_opts.eval_dir, "Eval directory (rows.csv)");
    cmd_analyze->add_option("--data", an_opts.data_dir, "Prepared data directory")->required();
    cmd_analyze->add_option("--model", an_opts.model_dir, "Checkpoint directory (robustness)");
    cmd_analyze->add_option("--report", an_opts.report, "delta-bins | rerank | robustness")->required();
    cmd_analyze->add_option("--split", an_opts.split, "Corpus split: train | eval");
    cmd_analyze->add_option("--t1", an_opts.t1_percent, "Delta-bin threshold t1 (0-100 scale)");
    cmd_analyze->add_option("--t2", an_opts.t2_percent, "Delta-bin threshold t2 (0-100 scale)");
    cmd_analyze->add_option("--qe-sigma", an_opts.qe_sigma, "QE proxy noise level");
    cmd_analyze->add_flag("--raw-prob", an_opts.raw_prob, "Disable length normalization in prob reranking");
    cmd_analyze->add_option("--seed", an_opts.seed, "Seed for qe noise / random contexts");
    cmd_analyze->add_option("--subset", an_opts.subset, "Robustness subset: auto | ambiguous | all");
    cmd_analyze->add_option("--context-k", an_opts.context_k, "Context budget K");
    cmd_analyze->add_option("--max-len", an_opts.max_len, "Decode length cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*cmd_prepare) return run_prepare(prep);
        if (*cmd_sft) return run_sft(sft_opts);
        if (*cmd_candidates) return run_candidates(cand_opts);
        if (*cmd_pairs) return run_pairs(pairs_opts);
        if (*cmd_train) return run_train(train_opts);
        if (*cmd_eval) return run_eval(eval_opts);
        if (*cmd_analyze) return run_analyze(an_opts);
    } catch (const cpl::StaleArtifactError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const cpl::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const cpl::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const cpl::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
    return kExitValidation;
}
