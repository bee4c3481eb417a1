#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcbert/rng.hpp"
#include "mcbert/vocab.hpp"

namespace mcbert {

// x = (x_1..x_n): token ids straight from packing; never contains [MASK] or
// [NOTA], may contain [CLS]/[SEP].
struct TokenSequence {
    std::vector<int32_t> ids;
    int64_t length() const { return static_cast<int64_t>(ids.size()); }
};

// x^M: ids with the selected positions rewritten per the masking scheme.
// masked_positions is sorted. Under the pure-mask scheme ids[i] == [MASK]
// exactly at the selected positions; under bert-80-10-10 a selected position
// may instead hold a random token or the original one but is still listed.
struct MaskedSequence {
    std::vector<int32_t> ids;
    std::vector<int32_t> masked_positions;
};

enum class MaskScheme { pure_mask, bert_80_10_10 };

MaskScheme mask_scheme_from_string(const std::string& s);
std::string to_string(MaskScheme s);

// Split a document into sentences on . ? ! (delimiter kept with its sentence).
std::vector<std::string> split_sentences(const std::string& doc);

// Greedy packing of whole sentences into [CLS] s1 [SEP] s2 [SEP] ... units of
// at most max_len ids. A sentence never straddles two sequences; a single
// sentence longer than max_len is truncated.
std::vector<TokenSequence> pack_sequences(const std::vector<std::vector<int32_t>>& sentences,
                                          int64_t max_len);

// Full path from raw documents (one per line of the corpus file) to packed
// sequences: sentence split -> tokenize -> pack.
std::vector<TokenSequence> pack_corpus(const Vocabulary& vocab,
                                       const std::vector<std::string>& docs, int64_t max_len);

// Independently select each non-special position with probability p, then
// rewrite per the scheme. Same rng seed, same result.
MaskedSequence mask(const TokenSequence& x, double p, Rng& rng, MaskScheme scheme,
                    const Vocabulary& vocab);

// Restore the source ids at the masked positions (must recover x exactly).
TokenSequence unmask(const MaskedSequence& xm, const TokenSequence& x);

std::vector<std::string> read_corpus_file(const std::string& path);

} // namespace mcbert
