#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpl/corpus.hpp"

namespace cpl {

/// Synthetic context-dependent translation task.
///
/// Each sentence slot p in {0..sentence_len-1} draws from its own filler
/// vocabulary, so token identity pins down token position and the task is
/// learnable from an order-free encoding. Every source token maps to one
/// target token, except ambiguous tokens whose correct target sense is the
/// document's topic. The topic token sits at the head of the first sentence,
/// so any context window reaching back to the document start resolves it.
struct SynthConfig {
    std::size_t n_docs = 100;
    std::size_t sentences_per_doc = 3;
    std::size_t sentence_len = 8;          // tokens per sentence
    std::size_t fillers_per_slot = 4;      // filler vocabulary size per slot
    std::size_t n_ambiguous = 4;           // distinct ambiguous source tokens
    std::size_t n_senses = 4;              // A: senses (= topics) per ambiguous token
    std::size_t topic_repeats = 3;         // copies of the topic token heading the first sentence
    double ambiguity_rate = 0.5;           // rho: fraction of sentences carrying one ambiguous token
};

/// Generated corpus plus the rule lexicon that defines ground truth.
struct SynthCorpus {
    std::vector<RawRecord> records;
    std::unordered_map<std::string, std::string> lexicon;                // unambiguous src -> tgt
    std::unordered_map<std::string, std::vector<std::string>> senses;    // ambiguous src -> tgt per topic
    std::vector<std::string> topic_tokens;                               // topic id -> source marker
    std::unordered_map<std::string, int> doc_topic;                      // doc_id -> topic id
};

/// Pure function of (cfg, seed); identical inputs give byte-identical corpora.
SynthCorpus gen_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed);

/// Rule-based reference translator. With `topic` set (document access) it
/// reproduces the reference exactly; with nullopt (sentence-only access)
/// ambiguous tokens fall back to sense 0.
std::string rule_translate(const SynthCorpus& corpus, const std::string& source, std::optional<int> topic);

bool is_ambiguous_sentence(const SynthCorpus& corpus, const std::string& source);

/// Lexicon sidecar so later pipeline stages can recover the ambiguous
/// subset and the sense structure without regenerating the corpus.
void save_synth_lexicon(const SynthCorpus& corpus, const std::filesystem::path& path);
SynthCorpus load_synth_lexicon(const std::filesystem::path& path);  // records left empty

}  // namespace cpl
