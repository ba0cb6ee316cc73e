#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/objective.hpp"
#include "cpl/pairs.hpp"
#include "cpl/policy.hpp"
#include "cpl/scoring.hpp"

namespace cpl {

enum class OptimizerKind { Sgd, MomentumSgd };

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t sft_epochs = 1;
    std::size_t cpl_epochs = 2;
    std::size_t batch_size = 128;
    double learning_rate = 1e-2;  // desk-scale default; 5e-5 at full scale
    double beta = 0.1;
    OptimizerKind optimizer = OptimizerKind::MomentumSgd;  // mu = 0.9
    double grad_clip = 5.0;       // max gradient L2 norm
    double temperature = 1.0;     // candidate sampling
    std::size_t max_len = 24;     // sampling / decoding cap
    std::size_t context_k = 32;   // context budget K (256 for ingested corpora)
    MetricKind selection_metric = MetricKind::SelectAvg;

    static TrainConfig from_file(const std::filesystem::path& path);
    void apply_line(std::string_view key, std::string_view value);
    void save(const std::filesystem::path& path) const;
};

static constexpr double kMomentumMu = 0.9;

struct StepLogRow {
    std::size_t step = 0;
    double intra = 0.0;
    double cross = 0.0;
    double cpl = 0.0;
    double mean_margin_s = 0.0;
    double mean_margin_c = 0.0;
    double mean_margin_cr = 0.0;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    std::vector<StepLogRow> steps;
    std::size_t pairs_sent = 0, pairs_ctx = 0, pairs_cross = 0;
    double wall_clock_sec = 0.0;  // reported out of band; never serialized
    std::string checkpoint_ref;
};

/// Training diverged; `last_good` holds the most recent finite checkpoint.
struct TrainingError : std::runtime_error {
    TrainingError(const std::string& msg, std::shared_ptr<PolicyParams> params)
        : std::runtime_error(msg), last_good(std::move(params)) {}
    std::shared_ptr<PolicyParams> last_good;
};

/// Cold-start likelihood fine-tuning; every sentence contributes one
/// SentOnly term and one WithContext term per epoch.
PolicyParams sft(PolicyParams params, const std::vector<Document>& corpus, const TrainConfig& cfg,
                 TrainReport* report = nullptr);

/// Four temperature samples per unit (two per condition), scored with the
/// configured selection metric against the reference.
std::vector<CandidateSet> generate_candidates(const PolicyParams& params, const std::vector<Document>& corpus,
                                              const Vocab& vocab, const TrainConfig& cfg);

/// One preference pair resolved to its conditioning inputs and targets.
struct ResolvedPair {
    enum class Kind { SentIntra, CtxIntra, CrossPlus, CrossMinus };
    Kind kind = Kind::SentIntra;
    Condition cond_plus;
    TokenSeq y_plus;
    Condition cond_minus;
    TokenSeq y_minus;
};

std::vector<ResolvedPair> resolve_pairs(const PairCorpus& pairs, const std::vector<Document>& corpus,
                                        std::size_t K);

struct BatchStats {
    double intra = 0.0;
    double cross = 0.0;
    double total = 0.0;
    double mean_margin_s = 0.0, mean_margin_c = 0.0, mean_margin_cr = 0.0;
    std::size_t n_sent = 0, n_ctx = 0, n_cross_plus = 0, n_cross_minus = 0;
};

/// Loss of one minibatch (per-kind means per the objective definitions)
/// plus its exact gradient through the policy.
std::pair<BatchStats, GradientBundle> cpl_batch_loss_and_grad(const PolicyParams& params,
                                                              std::span<const ResolvedPair> batch, double beta);

/// Value-only twin of cpl_batch_loss_and_grad (finite-difference target).
double cpl_batch_loss(const PolicyParams& params, std::span<const ResolvedPair> batch, double beta);

/// Fraction of pairs ranked correctly: lp(y_plus | its condition) strictly
/// above lp(y_minus | its condition).
double pair_ranking_accuracy(const PolicyParams& params, std::span<const ResolvedPair> pairs);

/// Preference optimization over the three pair sets.
PolicyParams train_cpl(PolicyParams params, const PairCorpus& pairs, const std::vector<Document>& corpus,
                       const TrainConfig& cfg, TrainReport* report = nullptr);

void write_step_log_csv(const TrainReport& report, const std::filesystem::path& path);
void write_sft_log_csv(const TrainReport& report, const std::filesystem::path& path);

}  // namespace cpl
