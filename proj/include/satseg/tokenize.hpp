#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace satseg::tokenize {

// Token span over the original text, [start, end) in codepoints.
struct Span {
    size_t start = 0;
    size_t end = 0;
    bool operator==(const Span&) const = default;
};

struct TokenizedSequence {
    std::vector<int> ids;
    std::vector<Span> spans;
    std::string text;
};

enum class Mode { Char, Bpe };

// Character-level or trainable BPE tokenizer. Immutable after construction;
// id 0 is always the reserved <unk> token. Unknown characters encode to
// unk_id with a one-codepoint span, so reconstruction from spans is exact.
class Tokenizer {
public:
    Tokenizer();  // vocab holds only <unk>; every input encodes to it

    static Tokenizer char_tokenizer(const std::vector<std::string>& corpus);
    static Tokenizer train_bpe(const std::vector<std::string>& corpus, size_t vocab_size);

    TokenizedSequence encode(const std::string& text) const;
    // Reconstructs text from a tokenized sequence (span fallback for <unk>).
    std::string decode(const TokenizedSequence& seq) const;

    Mode mode() const { return mode_; }
    size_t vocab_size() const { return id_to_token_.size(); }
    int unk_id() const { return 0; }
    const std::string& token_text(int id) const { return id_to_token_.at(static_cast<size_t>(id)); }
    int token_id(const std::string& tok) const;  // -1 if absent
    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

    std::string to_json() const;                    // {mode, vocab, merges, unk_id}
    static Tokenizer from_json(const std::string& json_text);
    void save(const std::string& path) const;
    static Tokenizer load(const std::string& path);

    bool operator==(const Tokenizer& o) const {
        return mode_ == o.mode_ && id_to_token_ == o.id_to_token_ && merges_ == o.merges_;
    }

private:
    void finish_build();

    Mode mode_ = Mode::Char;
    std::vector<std::string> id_to_token_;                       // dense ids, [0] == "<unk>"
    std::map<std::string, int> token_to_id_;
    std::vector<std::pair<std::string, std::string>> merges_;    // bpe only, in training order
    std::map<std::pair<std::string, std::string>, int> merge_rank_;
};

struct PunctuationSet {
    std::set<uint32_t> chars;
    std::set<int> token_ids;

    bool contains_char(uint32_t cp) const { return chars.count(cp) > 0; }
    bool contains_token(int id) const { return token_ids.count(id) > 0; }
};

// Union over corpora of each corpus' top_k most frequent punctuation
// characters, plus the ids of vocab tokens made only of those characters.
PunctuationSet punctuation_set(const Tokenizer& tok, const std::vector<std::string>& corpora, size_t top_k = 30);

// True if the decoded token text consists only of punctuation codepoints.
bool is_punct_only_token(const std::string& token_text);

}  // namespace satseg::tokenize
