#include "cpl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cpl/errors.hpp"

namespace cpl {

namespace {

constexpr double kMinTemperature = 1e-3;
constexpr char kCheckpointMagic[8] = {'C', 'P', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void check_token_range(const TokenSeq& seq, std::size_t vocab, const char* what) {
    for (TokenId id : seq) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw UsageError(std::string(what) + ": token id " + std::to_string(id) + " out of range (V=" +
                             std::to_string(vocab) + ")");
        }
    }
}

void check_target(const TokenSeq& y, std::size_t vocab) {
    if (y.empty()) throw UsageError("policy: target sequence is empty");
    check_token_range(y, vocab, "policy target");
    if (y.back() != Vocab::kEos) throw UsageError("policy: target sequence must end with EOS");
}

// The token stream the condition vector is pooled over.
std::vector<TokenId> condition_sequence(const Condition& cond) {
    std::vector<TokenId> seq;
    if (cond.kind == ConditionKind::WithContext) {
        seq.reserve(cond.context.size() + 1 + cond.source.size());
        seq.insert(seq.end(), cond.context.begin(), cond.context.end());
        seq.push_back(Vocab::kCtx);
    } else {
        seq.reserve(cond.source.size());
    }
    seq.insert(seq.end(), cond.source.begin(), cond.source.end());
    return seq;
}

// out += W x
void gemv_into(const Tensor& w, const double* x, double* out) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* wr = w.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
        out[r] += acc;
    }
}

// out += W^T x
void gemv_transposed_into(const Tensor& w, const double* x, double* out) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* wr = w.row(r);
        const double xr = x[r];
        if (xr == 0.0) continue;
        for (std::size_t c = 0; c < w.cols(); ++c) out[c] += xr * wr[c];
    }
}

// W += a * (x outer y)
void outer_accum(Tensor& w, const double* x, const double* y, double a = 1.0) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double* wr = w.row(r);
        const double xr = a * x[r];
        if (xr == 0.0) continue;
        for (std::size_t c = 0; c < w.cols(); ++c) wr[c] += xr * y[c];
    }
}

}  // namespace

const std::array<const char*, PolicyParams::kNumTensors>& PolicyParams::tensor_names() {
    static const std::array<const char*, kNumTensors> names = {
        "embed", "rec", "in_proj", "cond_proj", "rec_bias", "out_proj", "out_bias"};
    return names;
}

PolicyParams PolicyParams::zeros(const PolicyDims& dims) {
    PolicyParams p;
    p.dims = dims;
    p.embed = Tensor(dims.vocab, dims.embed);
    p.rec = Tensor(dims.hidden, dims.hidden);
    p.in_proj = Tensor(dims.hidden, dims.embed);
    p.cond_proj = Tensor(dims.hidden, dims.embed);
    p.rec_bias = Tensor(dims.hidden, 1);
    p.out_proj = Tensor(dims.vocab, dims.hidden);
    p.out_bias = Tensor(dims.vocab, 1);
    return p;
}

PolicyParams PolicyParams::random_init(const PolicyDims& dims, double scale, Rng& rng) {
    PolicyParams p = zeros(dims);
    for (Tensor* t : p.tensors()) {
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = scale * rng.gaussian();
    }
    return p;
}

std::array<Tensor*, PolicyParams::kNumTensors> PolicyParams::tensors() {
    return {&embed, &rec, &in_proj, &cond_proj, &rec_bias, &out_proj, &out_bias};
}

std::array<const Tensor*, PolicyParams::kNumTensors> PolicyParams::tensors() const {
    return {&embed, &rec, &in_proj, &cond_proj, &rec_bias, &out_proj, &out_bias};
}

std::size_t PolicyParams::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
}

bool PolicyParams::all_finite() const {
    for (const Tensor* t : tensors()) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            if (!std::isfinite((*t)[i])) return false;
        }
    }
    return true;
}

Condition Condition::sentence_only(TokenSeq source) {
    if (source.empty()) throw UsageError("Condition: empty source");
    Condition c;
    c.kind = ConditionKind::SentOnly;
    c.source = std::move(source);
    return c;
}

Condition Condition::with_context(TokenSeq source, TokenSeq context) {
    if (source.empty()) throw UsageError("Condition: empty source");
    if (context.empty()) throw UsageError("Condition: WithContext requires a non-empty context");
    Condition c;
    c.kind = ConditionKind::WithContext;
    c.source = std::move(source);
    c.context = std::move(context);
    return c;
}

GradientBundle GradientBundle::zeros(const PolicyDims& dims) {
    GradientBundle g;
    g.embed = Tensor(dims.vocab, dims.embed);
    g.rec = Tensor(dims.hidden, dims.hidden);
    g.in_proj = Tensor(dims.hidden, dims.embed);
    g.cond_proj = Tensor(dims.hidden, dims.embed);
    g.rec_bias = Tensor(dims.hidden, 1);
    g.out_proj = Tensor(dims.vocab, dims.hidden);
    g.out_bias = Tensor(dims.vocab, 1);
    return g;
}

std::array<Tensor*, PolicyParams::kNumTensors> GradientBundle::tensors() {
    return {&embed, &rec, &in_proj, &cond_proj, &rec_bias, &out_proj, &out_bias};
}

std::array<const Tensor*, PolicyParams::kNumTensors> GradientBundle::tensors() const {
    return {&embed, &rec, &in_proj, &cond_proj, &rec_bias, &out_proj, &out_bias};
}

void GradientBundle::add_scaled(const GradientBundle& other, double factor) {
    auto mine = tensors();
    auto theirs = other.tensors();
    for (std::size_t k = 0; k < PolicyParams::kNumTensors; ++k) {
        if (!mine[k]->same_shape(*theirs[k])) throw UsageError("GradientBundle: shape mismatch");
        for (std::size_t i = 0; i < mine[k]->size(); ++i) (*mine[k])[i] += factor * (*theirs[k])[i];
    }
}

void GradientBundle::scale(double factor) {
    for (Tensor* t : tensors()) {
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= factor;
    }
}

double GradientBundle::l2_norm() const {
    double acc = 0.0;
    for (const Tensor* t : tensors()) {
        for (std::size_t i = 0; i < t->size(); ++i) acc += (*t)[i] * (*t)[i];
    }
    return std::sqrt(acc);
}

bool GradientBundle::all_finite() const {
    for (const Tensor* t : tensors()) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            if (!std::isfinite((*t)[i])) return false;
        }
    }
    return true;
}

std::vector<double> encode_condition(const PolicyParams& params, const Condition& cond) {
    if (cond.source.empty()) throw UsageError("encode_condition: empty source");
    if (cond.kind == ConditionKind::SentOnly && !cond.context.empty()) {
        throw UsageError("encode_condition: SentOnly condition carries context");
    }
    if (cond.kind == ConditionKind::WithContext && cond.context.empty()) {
        throw UsageError("encode_condition: WithContext condition with empty context");
    }
    const auto seq = condition_sequence(cond);
    check_token_range(seq, params.dims.vocab, "encode_condition");

    std::vector<double> mean(params.dims.embed, 0.0);
    for (TokenId id : seq) {
        const double* row = params.embed.row(static_cast<std::size_t>(id));
        for (std::size_t i = 0; i < params.dims.embed; ++i) mean[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(seq.size());
    for (double& v : mean) v *= inv;
    return mean;
}

PolicyStepper::PolicyStepper(const PolicyParams& params, const Condition& cond)
    : params_(&params),
      cond_term_(params.dims.hidden, 0.0),
      h_(params.dims.hidden, 0.0),
      pre_(params.dims.hidden),
      logits_(params.dims.vocab),
      probs_(params.dims.vocab) {
    const auto cond_vec = encode_condition(params, cond);
    gemv_into(params.cond_proj, cond_vec.data(), cond_term_.data());
    for (std::size_t i = 0; i < params.dims.hidden; ++i) cond_term_[i] += params.rec_bias[i];
}

const std::vector<double>& PolicyStepper::step(TokenId prev, double temperature) {
    const auto& params = *params_;
    const auto& d = params.dims;
    if (prev < 0 || static_cast<std::size_t>(prev) >= d.vocab) {
        throw UsageError("PolicyStepper: token id out of range");
    }
    std::copy(cond_term_.begin(), cond_term_.end(), pre_.begin());
    gemv_into(params.rec, h_.data(), pre_.data());
    const double* emb = params.embed.row(static_cast<std::size_t>(prev));
    for (std::size_t i = 0; i < d.hidden; ++i) {
        const double* wr = params.in_proj.row(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < d.embed; ++c) acc += wr[c] * emb[c];
        pre_[i] += acc;
    }
    for (std::size_t i = 0; i < d.hidden; ++i) h_[i] = std::tanh(pre_[i]);

    std::fill(logits_.begin(), logits_.end(), 0.0);
    gemv_into(params.out_proj, h_.data(), logits_.data());
    for (std::size_t i = 0; i < d.vocab; ++i) logits_[i] = (logits_[i] + params.out_bias[i]) / temperature;

    const double mx = *std::max_element(logits_.begin(), logits_.end());
    double z = 0.0;
    for (std::size_t i = 0; i < d.vocab; ++i) {
        probs_[i] = std::exp(logits_[i] - mx);
        z += probs_[i];
    }
    for (double& p : probs_) p /= z;
    return probs_;
}

double log_prob(const PolicyParams& params, const Condition& cond, const TokenSeq& y) {
    check_target(y, params.dims.vocab);
    PolicyStepper stepper(params, cond);
    double lp = 0.0;
    TokenId prev = Vocab::kBos;
    for (TokenId tok : y) {
        const auto& probs = stepper.step(prev);
        lp += std::log(probs[static_cast<std::size_t>(tok)]);
        prev = tok;
    }
    return lp;
}

std::vector<double> next_token_log_probs(const PolicyParams& params, const Condition& cond,
                                         const TokenSeq& prefix) {
    check_token_range(prefix, params.dims.vocab, "next_token_log_probs prefix");
    PolicyStepper stepper(params, cond);
    TokenId prev = Vocab::kBos;
    for (TokenId tok : prefix) {
        stepper.step(prev);
        prev = tok;
    }
    const auto& probs = stepper.step(prev);
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = std::log(probs[i]);
    return out;
}

TokenSeq sample(const PolicyParams& params, const Condition& cond, double temperature, std::size_t max_len,
                Rng& rng) {
    if (temperature < kMinTemperature) {
        throw ConfigError("sample: temperature below the 1e-3 minimum");
    }
    if (max_len == 0) throw UsageError("sample: max_len must be >= 1");
    PolicyStepper stepper(params, cond);
    TokenSeq out;
    TokenId prev = Vocab::kBos;
    for (std::size_t t = 0; t < max_len; ++t) {
        const auto& probs = stepper.step(prev, temperature);
        // Inverse-CDF draw in id order keeps sampling platform-stable.
        const double u = rng.next_double();
        double cum = 0.0;
        TokenId pick = static_cast<TokenId>(params.dims.vocab - 1);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) {
                pick = static_cast<TokenId>(i);
                break;
            }
        }
        out.push_back(pick);
        if (pick == Vocab::kEos) return out;
        prev = pick;
    }
    out.push_back(Vocab::kEos);
    return out;
}

std::pair<double, GradientBundle> grad_log_prob(const PolicyParams& params, const Condition& cond,
                                                const TokenSeq& y) {
    check_target(y, params.dims.vocab);
    const auto& d = params.dims;

    // Forward pass, keeping hidden states and step distributions.
    const auto cond_vec = encode_condition(params, cond);
    PolicyStepper stepper(params, cond);
    const std::size_t n = y.size();
    std::vector<std::vector<double>> hidden(n), probs(n);
    double lp = 0.0;
    {
        TokenId prev = Vocab::kBos;
        for (std::size_t t = 0; t < n; ++t) {
            probs[t] = stepper.step(prev);
            hidden[t] = stepper.hidden();
            lp += std::log(probs[t][static_cast<std::size_t>(y[t])]);
            prev = y[t];
        }
    }

    // Reverse accumulation.
    GradientBundle grad = GradientBundle::zeros(d);
    std::vector<double> dh(d.hidden, 0.0);
    std::vector<double> da(d.hidden);
    std::vector<double> dlogits(d.vocab);
    std::vector<double> ds(d.embed, 0.0);
    const std::vector<double> h0(d.hidden, 0.0);

    for (std::size_t t = n; t-- > 0;) {
        const auto& h_t = hidden[t];
        const auto& p_t = probs[t];
        const TokenId prev = (t == 0) ? Vocab::kBos : y[t - 1];
        const std::vector<double>& h_prev = (t == 0) ? h0 : hidden[t - 1];

        // d log softmax[y_t] / d logits = onehot(y_t) - p
        for (std::size_t i = 0; i < d.vocab; ++i) dlogits[i] = -p_t[i];
        dlogits[static_cast<std::size_t>(y[t])] += 1.0;

        for (std::size_t i = 0; i < d.vocab; ++i) grad.out_bias[i] += dlogits[i];
        outer_accum(grad.out_proj, dlogits.data(), h_t.data());
        gemv_transposed_into(params.out_proj, dlogits.data(), dh.data());

        for (std::size_t i = 0; i < d.hidden; ++i) da[i] = dh[i] * (1.0 - h_t[i] * h_t[i]);

        for (std::size_t i = 0; i < d.hidden; ++i) grad.rec_bias[i] += da[i];
        outer_accum(grad.rec, da.data(), h_prev.data());
        outer_accum(grad.in_proj, da.data(), params.embed.row(static_cast<std::size_t>(prev)));
        outer_accum(grad.cond_proj, da.data(), cond_vec.data());
        gemv_transposed_into(params.cond_proj, da.data(), ds.data());

        // Embedding row of the consumed token.
        {
            double* erow = grad.embed.row(static_cast<std::size_t>(prev));
            for (std::size_t i = 0; i < d.hidden; ++i) {
                const double* wr = params.in_proj.row(i);
                const double dai = da[i];
                for (std::size_t c = 0; c < d.embed; ++c) erow[c] += dai * wr[c];
            }
        }

        std::fill(dh.begin(), dh.end(), 0.0);
        gemv_transposed_into(params.rec, da.data(), dh.data());
    }

    // Mean-pool gradient into the pooled embedding rows.
    const auto cond_seq = condition_sequence(cond);
    const double inv = 1.0 / static_cast<double>(cond_seq.size());
    for (TokenId id : cond_seq) {
        double* erow = grad.embed.row(static_cast<std::size_t>(id));
        for (std::size_t c = 0; c < d.embed; ++c) erow[c] += inv * ds[c];
    }

    return {lp, std::move(grad)};
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("checkpoint: cannot write " + path.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t header[4] = {kCheckpointVersion, static_cast<std::uint32_t>(params.dims.vocab),
                                     static_cast<std::uint32_t>(params.dims.embed),
                                     static_cast<std::uint32_t>(params.dims.hidden)};
    os.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (const Tensor* t : params.tensors()) {
        os.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!os) throw ConfigError("checkpoint: write failed for " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("checkpoint: cannot read " + path.string());
    char magic[sizeof(kCheckpointMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw UsageError("checkpoint: bad magic in " + path.string());
    }
    std::uint32_t header[4];
    is.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!is || header[0] != kCheckpointVersion) throw UsageError("checkpoint: unsupported version");
    PolicyDims dims{header[1], header[2], header[3]};
    PolicyParams params = PolicyParams::zeros(dims);
    for (Tensor* t : params.tensors()) {
        is.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!is) throw UsageError("checkpoint: truncated file " + path.string());
    if (!params.all_finite()) throw NumericError("checkpoint: non-finite parameters in " + path.string());
    return params;
}

PolicyParams load_checkpoint(const std::filesystem::path& path, const Vocab& vocab) {
    PolicyParams params = load_checkpoint(path);
    if (params.dims.vocab != vocab.size()) {
        throw UsageError("checkpoint: vocab size " + std::to_string(params.dims.vocab) +
                         " does not match corpus vocab " + std::to_string(vocab.size()));
    }
    return params;
}

Condition make_condition(const Document& doc, std::size_t index, ConditionKind kind, std::size_t K) {
    const auto& unit = doc.units.at(index);
    if (kind == ConditionKind::SentOnly) return Condition::sentence_only(unit.source);
    auto window = extract_context(doc, index, K);
    if (window.tokens.empty()) return Condition::sentence_only(unit.source);
    return Condition::with_context(unit.source, std::move(window.tokens));
}

TokenSeq target_sequence(const SentenceUnit& unit) {
    TokenSeq y = unit.reference;
    y.push_back(Vocab::kEos);
    return y;
}

}  // namespace cpl
