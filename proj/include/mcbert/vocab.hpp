#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcbert {

enum class VocabMode { chars, words, mini_bpe };

VocabMode vocab_mode_from_string(const std::string& s);
std::string to_string(VocabMode m);

// Token ids are contiguous; the six specials always occupy ids 0..5 and are
// never produced by text tokenization ([NOTA] in particular only ever appears
// inside candidate sets).
struct Vocabulary {
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kMask = 1;
    static constexpr int32_t kNota = 2;
    static constexpr int32_t kCls = 3;
    static constexpr int32_t kSep = 4;
    static constexpr int32_t kUnk = 5;
    static constexpr int32_t kNumSpecials = 6;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int32_t> token_to_id;
    VocabMode mode = VocabMode::chars;

    int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }
    int32_t non_special_count() const { return size() - kNumSpecials; }
    static bool is_special(int32_t id) { return id >= 0 && id < kNumSpecials; }

    int32_t id_of(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? kUnk : it->second;
    }
    const std::string& token_of(int32_t id) const { return id_to_token[static_cast<size_t>(id)]; }
};

// Frequency-ranked vocabulary over the corpus (one document per string), ties
// broken lexicographically, specials prepended, capped at max_size.
Vocabulary build_vocab(const std::vector<std::string>& docs, int64_t max_size, VocabMode mode);

// Tokenize one span of text. All modes resolve via greedy longest-match over
// the token table, which makes a vocabulary loaded from file self-contained.
std::vector<int32_t> tokenize(const Vocabulary& vocab, const std::string& text);

// One escaped token per line, line number = id. save/load round-trips the file
// byte for byte.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path, VocabMode mode);

std::string escape_token(const std::string& tok);
std::string unescape_token(const std::string& line);

// Split text into UTF-8 code points (invalid bytes pass through singly).
std::vector<std::string> utf8_codepoints(const std::string& text);

} // namespace mcbert
