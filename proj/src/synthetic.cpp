#include "cpl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cpl/errors.hpp"
#include "cpl/rng.hpp"

namespace cpl {

namespace {

// Filler vocabularies are disjoint per (sentence, slot), so a pooled
// encoding of context plus source never mixes up which token fills a
// source slot.
std::string filler_source(std::size_t sentence, std::size_t slot, std::size_t variant) {
    return "w" + std::to_string(sentence) + std::to_string(slot) + std::string(1, static_cast<char>('a' + variant));
}

std::string filler_target(std::size_t sentence, std::size_t slot, std::size_t variant) {
    return "v" + std::to_string(sentence) + std::to_string(slot) + std::string(1, static_cast<char>('a' + variant));
}

std::string topic_source(std::size_t topic) { return "top" + std::to_string(topic); }
std::string topic_target(std::size_t topic) { return "tpc" + std::to_string(topic); }
std::string ambiguous_source(std::size_t j) { return "amb" + std::to_string(j); }

// Sense targets share no letters across senses, so one wrong sense moves
// several character n-grams at once.
std::string sense_target(std::size_t j, std::size_t sense) {
    return std::string(3, static_cast<char>('a' + sense)) + std::to_string(j);
}

std::string doc_name(std::size_t i) {
    std::string num = std::to_string(i);
    return "d" + std::string(num.size() < 5 ? 5 - num.size() : 0, '0') + num;
}

}  // namespace

SynthCorpus gen_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.ambiguity_rate < 0.0 || cfg.ambiguity_rate > 1.0) {
        throw ConfigError("synthetic: ambiguity_rate must be in [0,1]");
    }
    if (cfg.n_docs == 0 || cfg.sentences_per_doc == 0) {
        throw ConfigError("synthetic: need at least one document and sentence");
    }
    if (cfg.sentence_len < 2) throw ConfigError("synthetic: sentence_len must be >= 2");
    if (cfg.fillers_per_slot == 0 || cfg.fillers_per_slot > 26) {
        throw ConfigError("synthetic: fillers_per_slot must be in [1,26]");
    }
    if (cfg.n_senses == 0 || cfg.n_senses > 26) throw ConfigError("synthetic: n_senses must be in [1,26]");
    if (cfg.topic_repeats == 0 || cfg.topic_repeats >= cfg.sentence_len) {
        throw ConfigError("synthetic: topic_repeats must be in [1, sentence_len)");
    }
    if (cfg.n_ambiguous == 0 && cfg.ambiguity_rate > 0.0) {
        throw ConfigError("synthetic: ambiguity_rate > 0 needs at least one ambiguous token");
    }

    SynthCorpus out;
    for (std::size_t s = 0; s < cfg.sentences_per_doc; ++s) {
        for (std::size_t p = 0; p < cfg.sentence_len; ++p) {
            for (std::size_t k = 0; k < cfg.fillers_per_slot; ++k) {
                out.lexicon[filler_source(s, p, k)] = filler_target(s, p, k);
            }
        }
    }
    for (std::size_t a = 0; a < cfg.n_senses; ++a) {
        out.lexicon[topic_source(a)] = topic_target(a);
        out.topic_tokens.push_back(topic_source(a));
    }
    for (std::size_t j = 0; j < cfg.n_ambiguous; ++j) {
        auto& tgts = out.senses[ambiguous_source(j)];
        for (std::size_t a = 0; a < cfg.n_senses; ++a) tgts.push_back(sense_target(j, a));
    }

    Rng rng(seed);

    // Exactly round(rho * total) sentences carry one ambiguous token.
    const std::size_t total = cfg.n_docs * cfg.sentences_per_doc;
    const auto n_designated = static_cast<std::size_t>(std::llround(cfg.ambiguity_rate * static_cast<double>(total)));
    std::vector<char> designated(total, 0);
    std::fill(designated.begin(), designated.begin() + static_cast<std::ptrdiff_t>(n_designated), 1);
    for (std::size_t i = total; i > 1; --i) {
        std::swap(designated[i - 1], designated[rng.next_below(i)]);
    }

    out.records.reserve(total);
    for (std::size_t d = 0; d < cfg.n_docs; ++d) {
        const std::string doc_id = doc_name(d);
        const auto topic = static_cast<int>(rng.next_below(cfg.n_senses));
        out.doc_topic[doc_id] = topic;
        for (std::size_t s = 0; s < cfg.sentences_per_doc; ++s) {
            std::vector<std::string> src(cfg.sentence_len);
            for (std::size_t p = 0; p < cfg.sentence_len; ++p) {
                src[p] = filler_source(s, p, rng.next_below(cfg.fillers_per_slot));
            }
            if (s == 0) {
                for (std::size_t p = 0; p < cfg.topic_repeats; ++p) {
                    src[p] = topic_source(static_cast<std::size_t>(topic));
                }
            }
            if (designated[d * cfg.sentences_per_doc + s]) {
                const std::size_t lo = (s == 0) ? cfg.topic_repeats : 0;
                const std::size_t slot = lo + rng.next_below(cfg.sentence_len - lo);
                src[slot] = ambiguous_source(rng.next_below(cfg.n_ambiguous));
            }

            RawRecord rec;
            rec.doc_id = doc_id;
            rec.index = static_cast<std::int32_t>(s);
            for (std::size_t p = 0; p < cfg.sentence_len; ++p) {
                if (p) rec.source.push_back(' ');
                rec.source += src[p];
            }
            rec.reference = rule_translate(out, rec.source, topic);
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

std::string rule_translate(const SynthCorpus& corpus, const std::string& source, std::optional<int> topic) {
    std::string out;
    for (const auto& tok : split_whitespace(source)) {
        std::string tgt;
        if (auto it = corpus.lexicon.find(tok); it != corpus.lexicon.end()) {
            tgt = it->second;
        } else if (auto jt = corpus.senses.find(tok); jt != corpus.senses.end()) {
            const auto sense = static_cast<std::size_t>(topic.value_or(0));
            if (sense >= jt->second.size()) throw UsageError("rule_translate: topic out of range");
            tgt = jt->second[sense];
        } else {
            throw UsageError("rule_translate: unknown source token '" + tok + "'");
        }
        if (!out.empty()) out.push_back(' ');
        out += tgt;
    }
    return out;
}

bool is_ambiguous_sentence(const SynthCorpus& corpus, const std::string& source) {
    for (const auto& tok : split_whitespace(source)) {
        if (corpus.senses.count(tok)) return true;
    }
    return false;
}

void save_synth_lexicon(const SynthCorpus& corpus, const std::filesystem::path& path) {
    nlohmann::json j;  // std::map-backed objects serialize with sorted keys
    j["version"] = 1;
    j["lexicon"] = corpus.lexicon;
    j["senses"] = corpus.senses;
    j["topic_tokens"] = corpus.topic_tokens;
    j["doc_topic"] = corpus.doc_topic;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("synthetic: cannot write " + path.string());
    os << j.dump(2) << '\n';
}

SynthCorpus load_synth_lexicon(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("synthetic: cannot read " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw UsageError("synthetic: bad lexicon file " + path.string() + " (" + e.what() + ")");
    }
    SynthCorpus out;
    out.lexicon = j.at("lexicon").get<std::unordered_map<std::string, std::string>>();
    out.senses = j.at("senses").get<std::unordered_map<std::string, std::vector<std::string>>>();
    out.topic_tokens = j.at("topic_tokens").get<std::vector<std::string>>();
    out.doc_topic = j.at("doc_topic").get<std::unordered_map<std::string, int>>();
    return out;
}

}  // namespace cpl
