#include <doctest.h>

#include <filesystem>

#include "cpl/errors.hpp"
#include "cpl/synthetic.hpp"

using namespace cpl;

namespace {

std::size_t ambiguous_count(const SynthCorpus& corpus) {
    std::size_t n = 0;
    for (const auto& rec : corpus.records) n += is_ambiguous_sentence(corpus, rec.source);
    return n;
}

}  // namespace

TEST_CASE("rho bounds the designated fraction exactly") {
    SynthConfig cfg;
    cfg.n_docs = 50;
    cfg.sentences_per_doc = 4;

    SUBCASE("rho = 0 means no ambiguity anywhere") {
        cfg.ambiguity_rate = 0.0;
        const auto corpus = gen_synthetic_corpus(cfg, 1);
        CHECK(ambiguous_count(corpus) == 0);
        // context never changes the correct reference
        for (const auto& rec : corpus.records) {
            CHECK(rule_translate(corpus, rec.source, std::nullopt) == rec.reference);
        }
    }
    SUBCASE("rho = 1 puts exactly one ambiguous token in every sentence") {
        cfg.ambiguity_rate = 1.0;
        const auto corpus = gen_synthetic_corpus(cfg, 1);
        CHECK(ambiguous_count(corpus) == corpus.records.size());
        for (const auto& rec : corpus.records) {
            std::size_t amb = 0;
            for (const auto& tok : split_whitespace(rec.source)) amb += corpus.senses.count(tok);
            CHECK(amb == 1);
        }
    }
    SUBCASE("intermediate rho hits the rounded count") {
        cfg.ambiguity_rate = 0.3;
        const auto corpus = gen_synthetic_corpus(cfg, 1);
        CHECK(ambiguous_count(corpus) == 60);  // round(0.3 * 200)
    }
    SUBCASE("rho outside [0,1] is a configuration error") {
        cfg.ambiguity_rate = 1.5;
        CHECK_THROWS_AS(gen_synthetic_corpus(cfg, 1), ConfigError);
    }
}

TEST_CASE("same config and seed give byte-identical corpora") {
    SynthConfig cfg;
    cfg.n_docs = 30;
    const auto a = gen_synthetic_corpus(cfg, 77);
    const auto b = gen_synthetic_corpus(cfg, 77);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].doc_id == b.records[i].doc_id);
        CHECK(a.records[i].source == b.records[i].source);
        CHECK(a.records[i].reference == b.records[i].reference);
    }
    const auto c = gen_synthetic_corpus(cfg, 78);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        any_diff |= a.records[i].source != c.records[i].source;
    }
    CHECK(any_diff);
}

TEST_CASE("document-aware rule translator reproduces references exactly") {
    SynthConfig cfg;
    cfg.n_docs = 80;
    cfg.ambiguity_rate = 0.7;
    const auto corpus = gen_synthetic_corpus(cfg, 5);
    for (const auto& rec : corpus.records) {
        const int topic = corpus.doc_topic.at(rec.doc_id);
        CHECK(rule_translate(corpus, rec.source, topic) == rec.reference);
    }
}

TEST_CASE("sentence-only rule translator scores 1 - rho(1 - 1/A) in expectation") {
    SynthConfig cfg;
    cfg.n_docs = 500;  // 1000+ sentences
    cfg.sentences_per_doc = 3;
    cfg.ambiguity_rate = 0.6;
    cfg.n_senses = 4;
    const auto corpus = gen_synthetic_corpus(cfg, 123);
    REQUIRE(corpus.records.size() >= 1000);
    std::size_t exact = 0;
    for (const auto& rec : corpus.records) {
        exact += rule_translate(corpus, rec.source, std::nullopt) == rec.reference;
    }
    const double rate = static_cast<double>(exact) / static_cast<double>(corpus.records.size());
    const double expected = 1.0 - cfg.ambiguity_rate * (1.0 - 1.0 / static_cast<double>(cfg.n_senses));
    CHECK(rate == doctest::Approx(expected).epsilon(0.05 / expected));
}

TEST_CASE("topic tokens sit at the head of the first sentence") {
    SynthConfig cfg;
    cfg.n_docs = 10;
    cfg.topic_repeats = 2;
    const auto corpus = gen_synthetic_corpus(cfg, 2);
    for (const auto& rec : corpus.records) {
        if (rec.index != 0) continue;
        const auto toks = split_whitespace(rec.source);
        const auto& expect = corpus.topic_tokens[static_cast<std::size_t>(corpus.doc_topic.at(rec.doc_id))];
        CHECK(toks[0] == expect);
        CHECK(toks[1] == expect);
    }
}

TEST_CASE("lexicon sidecar round-trips") {
    const auto corpus = gen_synthetic_corpus({.n_docs = 5}, 3);
    const auto path = std::filesystem::temp_directory_path() / "cpl_lexicon_test.json";
    save_synth_lexicon(corpus, path);
    const auto loaded = load_synth_lexicon(path);
    CHECK(loaded.lexicon == corpus.lexicon);
    CHECK(loaded.senses == corpus.senses);
    CHECK(loaded.topic_tokens == corpus.topic_tokens);
    CHECK(loaded.doc_topic == corpus.doc_topic);
}
