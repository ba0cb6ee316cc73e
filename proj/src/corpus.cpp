#include "cpl/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "cpl/errors.hpp"

namespace cpl {

namespace {

const std::array<std::string, Vocab::kNumReserved> kReservedNames = {
    "<pad>", "<bos>", "<eos>", "<sep>", "<ctx>"};

using ojson = nlohmann::ordered_json;

}  // namespace

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
    tokens_.reserve(kNumReserved + tokens.size());
    for (const auto& name : kReservedNames) {
        index_.emplace(name, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(name);
    }
    for (const auto& tok : tokens) {
        if (tok.empty()) throw UsageError("Vocab: empty token");
        if (!index_.emplace(tok, static_cast<TokenId>(tokens_.size())).second) {
            throw UsageError("Vocab: duplicate or reserved token '" + tok + "'");
        }
        tokens_.push_back(tok);
    }
}

const std::string& Vocab::token_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw UsageError("Vocab: token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocab::id_of(std::string_view token) const {
    auto found = find(token);
    if (!found) throw UsageError("Vocab: unknown token '" + std::string(token) + "'");
    return *found;
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

TokenSeq Vocab::encode(std::string_view text) const {
    TokenSeq ids;
    for (const auto& tok : split_whitespace(text)) {
        auto found = find(tok);
        if (!found) throw UsageError("Vocab: out-of-vocabulary token '" + tok + "'");
        if (is_reserved(*found)) {
            throw UsageError("Vocab: reserved marker '" + tok + "' in corpus text");
        }
        ids.push_back(*found);
    }
    return ids;
}

std::string Vocab::detokenize(const TokenSeq& seq) const {
    std::string out;
    for (TokenId id : seq) {
        if (is_reserved(id)) continue;
        if (!out.empty()) out.push_back(' ');
        out += token_of(id);
    }
    return out;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("Vocab: cannot write " + path.string());
    os << "cpl-vocab v1\n";
    for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("Vocab: cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "cpl-vocab v1") {
        throw UsageError("Vocab: bad header in " + path.string());
    }
    std::vector<std::string> toks;
    while (std::getline(is, line)) {
        if (!line.empty()) toks.push_back(line);
    }
    return Vocab(toks);
}

std::size_t word_count(const TokenSeq& seq) {
    std::size_t n = 0;
    for (TokenId id : seq) {
        if (!Vocab::is_reserved(id)) ++n;
    }
    return n;
}

std::vector<RawRecord> read_corpus_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("corpus: cannot read " + path.string());
    std::vector<RawRecord> records;
    std::set<std::pair<std::string, std::int32_t>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const std::exception& e) {
            throw UsageError("corpus line " + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")");
        }
        RawRecord rec;
        try {
            rec.doc_id = j.at("doc_id").get<std::string>();
            rec.index = j.at("index").get<std::int32_t>();
            rec.source = j.at("source").get<std::string>();
            rec.reference = j.at("reference").get<std::string>();
        } catch (const std::exception& e) {
            throw UsageError("corpus line " + std::to_string(lineno) + ": missing or mistyped field (" + e.what() + ")");
        }
        if (rec.index < 0) {
            throw UsageError("corpus line " + std::to_string(lineno) + ": negative index");
        }
        if (!seen.emplace(rec.doc_id, rec.index).second) {
            throw UsageError("corpus line " + std::to_string(lineno) + ": duplicate key (" + rec.doc_id + ", " +
                             std::to_string(rec.index) + ")");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void write_corpus_jsonl(std::vector<RawRecord> records, const std::filesystem::path& path) {
    std::sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
        return std::tie(a.doc_id, a.index) < std::tie(b.doc_id, b.index);
    });
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("corpus: cannot write " + path.string());
    for (const auto& rec : records) {
        ojson j;
        j["doc_id"] = rec.doc_id;
        j["index"] = rec.index;
        j["source"] = rec.source;
        j["reference"] = rec.reference;
        os << j.dump() << '\n';
    }
}

Vocab build_vocab(const std::vector<RawRecord>& records, std::size_t max_size) {
    if (records.empty()) throw ConfigError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& rec : records) {
        for (auto& tok : split_whitespace(rec.source)) ++freq[tok];
        for (auto& tok : split_whitespace(rec.reference)) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> by_freq(freq.begin(), freq.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (by_freq.size() > max_size) by_freq.resize(max_size);
    std::vector<std::string> toks;
    toks.reserve(by_freq.size());
    for (auto& [tok, n] : by_freq) toks.push_back(tok);
    return Vocab(toks);
}

std::vector<Document> assemble_documents(const std::vector<RawRecord>& records, const Vocab& vocab) {
    std::map<std::string, std::vector<const RawRecord*>> grouped;
    for (const auto& rec : records) grouped[rec.doc_id].push_back(&rec);

    std::vector<Document> docs;
    docs.reserve(grouped.size());
    for (auto& [doc_id, recs] : grouped) {
        std::sort(recs.begin(), recs.end(),
                  [](const RawRecord* a, const RawRecord* b) { return a->index < b->index; });
        Document doc;
        doc.doc_id = doc_id;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const RawRecord& rec = *recs[i];
            if (rec.index != static_cast<std::int32_t>(i)) {
                throw UsageError("corpus: document '" + doc_id + "' has non-contiguous indices (expected " +
                                 std::to_string(i) + ", got " + std::to_string(rec.index) + ")");
            }
            SentenceUnit unit;
            unit.doc_id = doc_id;
            unit.index = rec.index;
            unit.source = vocab.encode(rec.source);
            unit.reference = vocab.encode(rec.reference);
            if (unit.source.empty() || unit.reference.empty()) {
                throw UsageError("corpus: empty source or reference at (" + doc_id + ", " +
                                 std::to_string(rec.index) + ")");
            }
            doc.units.push_back(std::move(unit));
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

ContextWindow extract_context(const Document& doc, std::size_t index, std::size_t K) {
    if (index >= doc.units.size()) {
        throw UsageError("extract_context: index " + std::to_string(index) + " out of range for document '" +
                         doc.doc_id + "'");
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < index; ++i) total += doc.units[i].source.size();

    ContextWindow window;
    window.truncated = total > K;
    const std::size_t keep = std::min(total, K);
    window.tokens.reserve(keep);
    std::size_t skip = total - keep;
    for (std::size_t i = 0; i < index; ++i) {
        for (TokenId id : doc.units[i].source) {
            if (skip > 0) {
                --skip;
                continue;
            }
            window.tokens.push_back(id);
        }
    }
    return window;
}

const SentenceUnit* find_unit(const std::vector<Document>& docs, std::string_view doc_id, std::int32_t index) {
    for (const auto& doc : docs) {
        if (doc.doc_id != doc_id) continue;
        if (index < 0 || static_cast<std::size_t>(index) >= doc.units.size()) return nullptr;
        return &doc.units[static_cast<std::size_t>(index)];
    }
    return nullptr;
}

}  // namespace cpl
