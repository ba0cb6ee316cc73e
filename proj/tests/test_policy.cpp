#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "cpl/corpus.hpp"
#include "cpl/errors.hpp"
#include "cpl/policy.hpp"
#include "cpl/rng.hpp"

using namespace cpl;

namespace {

constexpr TokenId kFirstWord = static_cast<TokenId>(Vocab::kNumReserved);

PolicyParams small_random_params(std::uint64_t seed, std::size_t vocab = 9, std::size_t d = 3,
                                 std::size_t h = 4) {
    Rng rng(seed);
    return PolicyParams::random_init({vocab, d, h}, 0.4, rng);
}

Condition simple_cond(TokenId a, TokenId b) { return Condition::sentence_only({a, b}); }

// Step-by-step forward pass written independently of PolicyStepper: plain
// loops, explicit state, no shared helpers.
double log_prob_reference(const PolicyParams& p, const Condition& cond, const TokenSeq& y) {
    const std::size_t V = p.dims.vocab, D = p.dims.embed, H = p.dims.hidden;
    std::vector<TokenId> pool;
    if (cond.kind == ConditionKind::WithContext) {
        pool = cond.context;
        pool.push_back(Vocab::kCtx);
    }
    for (TokenId t : cond.source) pool.push_back(t);
    std::vector<double> s(D, 0.0);
    for (TokenId t : pool) {
        for (std::size_t j = 0; j < D; ++j) s[j] += p.embed(static_cast<std::size_t>(t), j);
    }
    for (auto& v : s) v /= static_cast<double>(pool.size());

    std::vector<double> h(H, 0.0);
    double lp = 0.0;
    TokenId prev = Vocab::kBos;
    for (TokenId target : y) {
        std::vector<double> a(H, 0.0);
        for (std::size_t i = 0; i < H; ++i) {
            double acc = p.rec_bias(i, 0);
            for (std::size_t j = 0; j < H; ++j) acc += p.rec(i, j) * h[j];
            for (std::size_t j = 0; j < D; ++j) acc += p.in_proj(i, j) * p.embed(static_cast<std::size_t>(prev), j);
            for (std::size_t j = 0; j < D; ++j) acc += p.cond_proj(i, j) * s[j];
            a[i] = std::tanh(acc);
        }
        h = a;
        std::vector<double> logits(V);
        double mx = -1e300;
        for (std::size_t v = 0; v < V; ++v) {
            double acc = p.out_bias(v, 0);
            for (std::size_t j = 0; j < H; ++j) acc += p.out_proj(v, j) * h[j];
            logits[v] = acc;
            mx = std::max(mx, acc);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        lp += logits[static_cast<std::size_t>(target)] - mx - std::log(z);
        prev = target;
    }
    return lp;
}

}  // namespace

TEST_CASE("encode_condition is the mean embedding of the pooled sequence") {
    auto params = small_random_params(1);
    SUBCASE("singleton source is the embedding row itself") {
        const auto v = encode_condition(params, Condition::sentence_only({kFirstWord}));
        for (std::size_t j = 0; j < params.dims.embed; ++j) {
            CHECK(v[j] == doctest::Approx(params.embed(static_cast<std::size_t>(kFirstWord), j)));
        }
    }
    SUBCASE("matches an independently computed arithmetic mean") {
        const auto cond =
            Condition::with_context({kFirstWord, kFirstWord + 1}, {kFirstWord + 2, kFirstWord + 3});
        const auto v = encode_condition(params, cond);
        // rows: context, CTX marker, source
        const std::vector<std::size_t> rows = {static_cast<std::size_t>(kFirstWord + 2),
                                               static_cast<std::size_t>(kFirstWord + 3),
                                               static_cast<std::size_t>(Vocab::kCtx),
                                               static_cast<std::size_t>(kFirstWord),
                                               static_cast<std::size_t>(kFirstWord + 1)};
        for (std::size_t j = 0; j < params.dims.embed; ++j) {
            double mean = 0.0;
            for (auto r : rows) mean += params.embed(r, j);
            mean /= static_cast<double>(rows.size());
            CHECK(v[j] == doctest::Approx(mean).epsilon(1e-12));
        }
    }
    SUBCASE("empty-context WithContext cannot be constructed") {
        CHECK_THROWS_AS(Condition::with_context({kFirstWord}, {}), UsageError);
    }
    SUBCASE("out-of-range token id is a usage error") {
        CHECK_THROWS_AS(encode_condition(params, Condition::sentence_only({100})), UsageError);
    }
}

TEST_CASE("log_prob of uniform model is n * log(1/V)") {
    PolicyParams params = PolicyParams::zeros({9, 3, 4});
    const TokenSeq y = {kFirstWord, kFirstWord + 1, Vocab::kEos};
    const double lp = log_prob(params, simple_cond(kFirstWord, kFirstWord + 1), y);
    CHECK(lp == doctest::Approx(3.0 * std::log(1.0 / 9.0)).epsilon(1e-12));
}

TEST_CASE("log_prob is never positive") {
    Rng rng(41);
    for (int i = 0; i < 30; ++i) {
        auto params = small_random_params(100 + static_cast<std::uint64_t>(i));
        TokenSeq y;
        const std::size_t len = 1 + rng.next_below(5);
        for (std::size_t t = 0; t + 1 < len; ++t) {
            y.push_back(static_cast<TokenId>(kFirstWord + rng.next_below(4)));
        }
        y.push_back(Vocab::kEos);
        CHECK(log_prob(params, simple_cond(kFirstWord, kFirstWord + 2), y) <= 0.0);
    }
}

TEST_CASE("log_prob matches an independent re-implementation of the recurrence") {
    Rng rng(43);
    for (int i = 0; i < 25; ++i) {
        auto params = small_random_params(200 + static_cast<std::uint64_t>(i), 8 + rng.next_below(4), 3, 3);
        TokenSeq y = {static_cast<TokenId>(Vocab::kNumReserved + rng.next_below(3)), kFirstWord, Vocab::kEos};
        Condition cond = (i % 2 == 0)
                             ? Condition::sentence_only({kFirstWord})
                             : Condition::with_context({kFirstWord}, {static_cast<TokenId>(Vocab::kNumReserved)});
        CHECK(log_prob(params, cond, y) == doctest::Approx(log_prob_reference(params, cond, y)).epsilon(1e-12));
    }
}

TEST_CASE("log_prob validates the target sequence") {
    auto params = small_random_params(2);
    const auto cond = simple_cond(kFirstWord, kFirstWord + 1);
    CHECK_THROWS_AS(log_prob(params, cond, {}), UsageError);
    CHECK_THROWS_AS(log_prob(params, cond, {kFirstWord}), UsageError);             // missing EOS
    CHECK_THROWS_AS(log_prob(params, cond, {1000, Vocab::kEos}), UsageError);      // out of range
}

TEST_CASE("single-step event space normalizes") {
    auto params = small_random_params(3, 8, 3, 4);
    const auto cond = simple_cond(kFirstWord, kFirstWord + 1);

    // next-token distribution sums to one over the whole vocabulary
    const auto step_lp = next_token_log_probs(params, cond, {});
    double z = 0.0;
    for (double lp : step_lp) z += std::exp(lp);
    CHECK(z == doctest::Approx(1.0).epsilon(1e-12));

    // total mass of all (token, EOS) continuations cannot exceed one
    double mass = 0.0;
    for (std::size_t t = 0; t < params.dims.vocab; ++t) {
        mass += std::exp(log_prob(params, cond, {static_cast<TokenId>(t), Vocab::kEos}));
    }
    CHECK(mass <= 1.0 + 1e-12);
}

TEST_CASE("sampling: determinism, termination, and temperature guard") {
    auto params = small_random_params(4);
    const auto cond = simple_cond(kFirstWord, kFirstWord + 1);
    Rng r1(9), r2(9);
    const auto a = sample(params, cond, 1.0, 16, r1);
    const auto b = sample(params, cond, 1.0, 16, r2);
    CHECK(a == b);
    CHECK(a.back() == Vocab::kEos);
    CHECK(a.size() <= 17);
    CHECK_THROWS_AS(sample(params, cond, 1e-4, 16, r1), ConfigError);
}

TEST_CASE("uniform softmax sampling passes a chi-square uniformity check") {
    // All-zero parameters, vocabulary of 4 words + 5 reserved ids: every id
    // has probability 1/9 at the first step. Conditioned on drawing one of
    // the 4 words, the distribution must be uniform (chi-square, 3 dof).
    PolicyParams params = PolicyParams::zeros({9, 3, 4});
    const auto cond = simple_cond(kFirstWord, kFirstWord + 1);
    Rng rng(1234);
    std::array<std::size_t, 4> counts{};
    std::size_t word_draws = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto seq = sample(params, cond, 1.0, 1, rng);
        const TokenId first = seq.front();
        if (first >= kFirstWord) {
            ++counts[static_cast<std::size_t>(first - kFirstWord)];
            ++word_draws;
        }
    }
    const double expect = static_cast<double>(word_draws) / 4.0;
    double chi2 = 0.0;
    for (auto c : counts) {
        const double d = static_cast<double>(c) - expect;
        chi2 += d * d / expect;
    }
    CHECK(chi2 < 11.345);  // p = 0.01 critical value, 3 dof
    // and reserved ids make up roughly their share of draws
    CHECK(word_draws > 3500);
    CHECK(word_draws < 5500);
}

TEST_CASE("analytic gradient of out_bias at zero params is onehot minus uniform") {
    PolicyParams params = PolicyParams::zeros({9, 3, 4});
    const auto cond = simple_cond(kFirstWord, kFirstWord + 1);

    SUBCASE("one-step target") {
        const auto [lp, grad] = grad_log_prob(params, cond, {Vocab::kEos});
        for (std::size_t v = 0; v < 9; ++v) {
            const double expect = (v == static_cast<std::size_t>(Vocab::kEos) ? 1.0 : 0.0) - 1.0 / 9.0;
            CHECK(grad.out_bias(v, 0) == doctest::Approx(expect).epsilon(1e-12));
        }
        CHECK(lp == doctest::Approx(std::log(1.0 / 9.0)));
    }
    SUBCASE("two-step target accumulates both softmax gradients") {
        const auto [lp, grad] = grad_log_prob(params, cond, {kFirstWord, Vocab::kEos});
        for (std::size_t v = 0; v < 9; ++v) {
            double expect = -2.0 / 9.0;
            if (v == static_cast<std::size_t>(kFirstWord)) expect += 1.0;
            if (v == static_cast<std::size_t>(Vocab::kEos)) expect += 1.0;
            CHECK(grad.out_bias(v, 0) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("gradients match central finite differences everywhere") {
    // >= 20 random instances; max relative error must stay under 1e-4
    const double step = 1e-5;
    double worst = 0.0;
    Rng meta(47);
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t V = 6 + meta.next_below(3);
        auto params = small_random_params(300 + static_cast<std::uint64_t>(inst), V, 3, 3);
        TokenSeq y;
        const std::size_t len = 1 + meta.next_below(4);
        for (std::size_t t = 0; t < len; ++t) {
            y.push_back(static_cast<TokenId>(Vocab::kNumReserved + meta.next_below(V - Vocab::kNumReserved)));
        }
        y.push_back(Vocab::kEos);
        Condition cond = (inst % 2 == 0)
                             ? Condition::sentence_only({kFirstWord, static_cast<TokenId>(kFirstWord)})
                             : Condition::with_context({kFirstWord}, {static_cast<TokenId>(Vocab::kNumReserved)});

        const auto [lp, grad] = grad_log_prob(params, cond, y);
        auto tensors = params.tensors();
        auto grads = grad.tensors();
        for (std::size_t k = 0; k < PolicyParams::kNumTensors; ++k) {
            for (std::size_t i = 0; i < tensors[k]->size(); ++i) {
                const double orig = (*tensors[k])[i];
                (*tensors[k])[i] = orig + step;
                const double up = log_prob(params, cond, y);
                (*tensors[k])[i] = orig - step;
                const double down = log_prob(params, cond, y);
                (*tensors[k])[i] = orig;
                const double fd = (up - down) / (2.0 * step);
                const double analytic = (*grads[k])[i];
                const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
                worst = std::max(worst, std::abs(fd - analytic) / denom);
            }
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("condition projection receives gradient even for SentOnly inputs") {
    auto params = small_random_params(5);
    const auto [lp, grad] = grad_log_prob(params, simple_cond(kFirstWord, kFirstWord + 1),
                                          {kFirstWord, Vocab::kEos});
    double norm = 0.0;
    for (std::size_t i = 0; i < grad.cond_proj.size(); ++i) norm += std::abs(grad.cond_proj[i]);
    CHECK(norm > 0.0);
}

TEST_CASE("the two conditional distributions are genuinely distinct") {
    // random nonzero params: log p(y|x) != log p(y|x,c) nearly always
    std::size_t differ = 0;
    const int trials = 200;
    for (int i = 0; i < trials; ++i) {
        auto params = small_random_params(1000 + static_cast<std::uint64_t>(i));
        const TokenSeq y = {kFirstWord, Vocab::kEos};
        const auto sent = Condition::sentence_only({kFirstWord, kFirstWord + 1});
        const auto ctx = Condition::with_context({kFirstWord, kFirstWord + 1}, {kFirstWord + 2});
        if (std::abs(log_prob(params, sent, y) - log_prob(params, ctx, y)) > 1e-12) ++differ;
    }
    CHECK(static_cast<double>(differ) / trials >= 0.99);
}

TEST_CASE("checkpoint io round-trips bit-exactly and validates the vocab") {
    auto params = small_random_params(6, 9, 3, 4);
    const auto path = std::filesystem::temp_directory_path() / "cpl_policy_ckpt_test.bin";
    save_checkpoint(params, path);
    const auto loaded = load_checkpoint(path);
    auto a = params.tensors();
    auto b = loaded.tensors();
    for (std::size_t k = 0; k < PolicyParams::kNumTensors; ++k) {
        REQUIRE(a[k]->size() == b[k]->size());
        for (std::size_t i = 0; i < a[k]->size(); ++i) CHECK((*a[k])[i] == (*b[k])[i]);
    }
    Vocab wrong_vocab({"a", "b"});  // size 7 != 9
    CHECK_THROWS_AS(load_checkpoint(path, wrong_vocab), UsageError);
}

TEST_CASE("make_condition degrades to SentOnly when the window is empty") {
    std::vector<RawRecord> recs = {{"d", 0, "x y", "u v"}, {"d", 1, "y z", "v w"}};
    const auto vocab = build_vocab(recs, 100);
    const auto docs = assemble_documents(recs, vocab);
    CHECK(make_condition(docs[0], 0, ConditionKind::WithContext, 8).kind == ConditionKind::SentOnly);
    CHECK(make_condition(docs[0], 1, ConditionKind::WithContext, 0).kind == ConditionKind::SentOnly);
    const auto with = make_condition(docs[0], 1, ConditionKind::WithContext, 8);
    CHECK(with.kind == ConditionKind::WithContext);
    CHECK(with.context.size() == 2);
}
