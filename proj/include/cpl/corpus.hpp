#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cpl {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Token/id bijection. Ids 0-4 are reserved (PAD, BOS, EOS, SEP, CTX) and
/// are never produced by the tokenizer; corpus tokens that collide with a
/// reserved surface marker are rejected when the table is built.
class Vocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kCtx = 4;
    static constexpr std::size_t kNumReserved = 5;

    static bool is_reserved(TokenId id) {
        return id >= 0 && static_cast<std::size_t>(id) < kNumReserved;
    }

    Vocab();
    /// Builds the table as reserved ids followed by `tokens` in the given
    /// order. Throws UsageError on duplicates or reserved-name collisions.
    explicit Vocab(const std::vector<std::string>& tokens);

    std::size_t size() const { return tokens_.size(); }

    const std::string& token_of(TokenId id) const;
    TokenId id_of(std::string_view token) const;
    std::optional<TokenId> find(std::string_view token) const;

    /// Whitespace-split tokenizer. Throws UsageError on out-of-vocabulary
    /// tokens (there is no UNK id).
    TokenSeq encode(std::string_view text) const;

    /// Space-joined surface form; reserved ids are skipped.
    std::string detokenize(const TokenSeq& seq) const;

    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Number of whitespace words in the detokenized form of `seq`
/// (= count of non-reserved ids; vocab tokens contain no whitespace).
std::size_t word_count(const TokenSeq& seq);

std::vector<std::string> split_whitespace(std::string_view text);

/// One corpus line before tokenization, exactly the JSONL wire format.
struct RawRecord {
    std::string doc_id;
    std::int32_t index = 0;
    std::string source;
    std::string reference;
};

struct SentenceUnit {
    std::string doc_id;
    std::int32_t index = 0;
    TokenSeq source;
    TokenSeq reference;
};

struct Document {
    std::string doc_id;
    std::vector<SentenceUnit> units;
};

struct ContextWindow {
    TokenSeq tokens;
    bool truncated = false;
};

/// Reads line-delimited records {doc_id, index, source, reference}.
/// Malformed lines and duplicate (doc_id, index) keys throw UsageError
/// carrying the 1-based line number.
std::vector<RawRecord> read_corpus_jsonl(const std::filesystem::path& path);

/// Canonical serialization: records sorted by (doc_id, index), fixed key
/// order, one compact JSON object per line.
void write_corpus_jsonl(std::vector<RawRecord> records, const std::filesystem::path& path);

/// The `max_size` most frequent corpus tokens (source and reference sides),
/// ties broken lexicographically, plus the reserved ids.
Vocab build_vocab(const std::vector<RawRecord>& records, std::size_t max_size);

/// Groups records into documents sorted by (doc_id, index), encodes them,
/// and checks unit invariants (non-empty sides, contiguous indices from 0).
std::vector<Document> assemble_documents(const std::vector<RawRecord>& records, const Vocab& vocab);

/// Last min(K, total) source tokens preceding `index` within the document.
ContextWindow extract_context(const Document& doc, std::size_t index, std::size_t K);

const SentenceUnit* find_unit(const std::vector<Document>& docs, std::string_view doc_id, std::int32_t index);

}  // namespace cpl
