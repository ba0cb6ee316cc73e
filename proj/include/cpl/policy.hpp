#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/rng.hpp"

namespace cpl {

/// Dense row-major matrix of doubles (a vector is rows x 1).
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    /// Pointer to row r (row-major layout).
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct PolicyDims {
    std::size_t vocab = 0;   // V
    std::size_t embed = 32;  // d
    std::size_t hidden = 64; // h
};

/// Single-layer tanh recurrence over target tokens with a mean-pooled
/// condition vector injected at every step:
///   s   = mean embedding of the conditioning sequence
///   h_t = tanh(W_h h_{t-1} + W_e E[y_{t-1}] + W_s s + b_h),  h_0 = 0, y_0 = BOS
///   p(y_t | .) = softmax(W_o h_t + b_o)[y_t]
struct PolicyParams {
    PolicyDims dims;
    Tensor embed;      // V x d  (E)
    Tensor rec;        // h x h  (W_h)
    Tensor in_proj;    // h x d  (W_e)
    Tensor cond_proj;  // h x d  (W_s)
    Tensor rec_bias;   // h x 1  (b_h)
    Tensor out_proj;   // V x h  (W_o)
    Tensor out_bias;   // V x 1  (b_o)

    static constexpr std::size_t kNumTensors = 7;
    static const std::array<const char*, kNumTensors>& tensor_names();

    static PolicyParams zeros(const PolicyDims& dims);
    static PolicyParams random_init(const PolicyDims& dims, double scale, Rng& rng);

    std::array<Tensor*, kNumTensors> tensors();
    std::array<const Tensor*, kNumTensors> tensors() const;

    std::size_t parameter_count() const;
    bool all_finite() const;
};

enum class ConditionKind { SentOnly, WithContext };

/// A conditioning input: the source sentence alone, or context + source.
struct Condition {
    ConditionKind kind = ConditionKind::SentOnly;
    TokenSeq source;
    TokenSeq context;  // empty iff kind == SentOnly

    static Condition sentence_only(TokenSeq source);
    static Condition with_context(TokenSeq source, TokenSeq context);
};

/// Per-parameter gradients, same shapes as PolicyParams.
struct GradientBundle {
    Tensor embed, rec, in_proj, cond_proj, rec_bias, out_proj, out_bias;

    static GradientBundle zeros(const PolicyDims& dims);
    std::array<Tensor*, PolicyParams::kNumTensors> tensors();
    std::array<const Tensor*, PolicyParams::kNumTensors> tensors() const;

    void add_scaled(const GradientBundle& other, double factor);
    void scale(double factor);
    double l2_norm() const;
    bool all_finite() const;
};

/// Mean embedding of [context, CTX, source] (WithContext) or [source].
std::vector<double> encode_condition(const PolicyParams& params, const Condition& cond);

/// Incremental decoder state over the recurrence; feed the last emitted
/// token (BOS first), read the next-token distribution.
class PolicyStepper {
public:
    PolicyStepper(const PolicyParams& params, const Condition& cond);

    /// Consumes `prev` and returns the next-step softmax (size V).
    /// Logits are divided by `temperature` before normalization.
    const std::vector<double>& step(TokenId prev, double temperature = 1.0);

    const std::vector<double>& hidden() const { return h_; }

private:
    const PolicyParams* params_;
    std::vector<double> cond_term_;  // W_s s + b_h, constant across steps
    std::vector<double> h_, pre_, logits_, probs_;
};

/// Sum over steps of log softmax(W_o h_t + b_o)[y_t]. `y` must be non-empty
/// and end with EOS.
double log_prob(const PolicyParams& params, const Condition& cond, const TokenSeq& y);

/// Log distribution over the next token after consuming `prefix` target
/// tokens (the first step sees only BOS). Size-V vector.
std::vector<double> next_token_log_probs(const PolicyParams& params, const Condition& cond, const TokenSeq& prefix);

/// Ancestral sampling at the given temperature until EOS or max_len; the
/// returned sequence always ends with EOS. Temperatures below 1e-3 are
/// rejected.
TokenSeq sample(const PolicyParams& params, const Condition& cond, double temperature, std::size_t max_len,
                Rng& rng);

/// (log_prob, d log_prob / d theta) by reverse accumulation through the
/// recurrence.
std::pair<double, GradientBundle> grad_log_prob(const PolicyParams& params, const Condition& cond,
                                                const TokenSeq& y);

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);
/// Load and validate the checkpoint vocabulary size against `vocab`.
PolicyParams load_checkpoint(const std::filesystem::path& path, const Vocab& vocab);

/// Conditioning input for a corpus unit; WithContext degrades to SentOnly
/// when the window is empty (document-initial sentences, or K = 0).
Condition make_condition(const Document& doc, std::size_t index, ConditionKind kind, std::size_t K);

/// Training/eval target: the unit's reference plus EOS.
TokenSeq target_sequence(const SentenceUnit& unit);

}  // namespace cpl
