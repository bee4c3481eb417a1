#include "mcbert/data.hpp"

#include <fstream>

#include "mcbert/errors.hpp"

namespace mcbert {

MaskScheme mask_scheme_from_string(const std::string& s) {
    if (s == "pure-mask") return MaskScheme::pure_mask;
    if (s == "bert-80-10-10") return MaskScheme::bert_80_10_10;
    throw ConfigError("unknown mask scheme '" + s + "' (expected pure-mask or bert-80-10-10)");
}

std::string to_string(MaskScheme s) {
    return s == MaskScheme::pure_mask ? "pure-mask" : "bert-80-10-10";
}

std::vector<std::string> split_sentences(const std::string& doc) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : doc) {
        cur.push_back(c);
        if (c == '.' || c == '?' || c == '!') {
            out.push_back(cur);
            cur.clear();
        }
    }
    // Trailing text without a terminator still counts as a sentence.
    for (char c : cur) {
        if (c != ' ' && c != '\t') {
            out.push_back(cur);
            break;
        }
    }
    return out;
}

std::vector<TokenSequence> pack_sequences(const std::vector<std::vector<int32_t>>& sentences,
                                          int64_t max_len) {
    if (max_len < 2) {
        throw ConfigError("pack_sequences: max_len must be at least 2");
    }
    std::vector<TokenSequence> out;
    TokenSequence cur;
    cur.ids = {Vocabulary::kCls};
    auto flush = [&] {
        if (cur.ids.size() > 1) {
            out.push_back(cur);
        }
        cur.ids = {Vocabulary::kCls};
    };
    for (const auto& sent : sentences) {
        if (sent.empty()) {
            continue;
        }
        const bool has_content = cur.ids.size() > 1;
        const int64_t extra = static_cast<int64_t>(sent.size()) + (has_content ? 1 : 0);
        if (static_cast<int64_t>(cur.ids.size()) + extra <= max_len) {
            if (has_content) {
                cur.ids.push_back(Vocabulary::kSep);
            }
            cur.ids.insert(cur.ids.end(), sent.begin(), sent.end());
            continue;
        }
        flush();
        if (static_cast<int64_t>(sent.size()) + 1 <= max_len) {
            cur.ids.insert(cur.ids.end(), sent.begin(), sent.end());
        } else {
            // Lone over-long sentence: truncate to max_len including [CLS].
            cur.ids.insert(cur.ids.end(), sent.begin(),
                           sent.begin() + static_cast<size_t>(max_len - 1));
            flush();
        }
    }
    flush();
    return out;
}

std::vector<TokenSequence> pack_corpus(const Vocabulary& vocab,
                                       const std::vector<std::string>& docs, int64_t max_len) {
    std::vector<std::vector<int32_t>> sentences;
    for (const auto& doc : docs) {
        for (const auto& sent : split_sentences(doc)) {
            std::vector<int32_t> ids = tokenize(vocab, sent);
            if (!ids.empty()) {
                sentences.push_back(std::move(ids));
            }
        }
    }
    return pack_sequences(sentences, max_len);
}

MaskedSequence mask(const TokenSequence& x, double p, Rng& rng, MaskScheme scheme,
                    const Vocabulary& vocab) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("mask probability must be in (0,1)");
    }
    const int32_t non_special = vocab.non_special_count();
    MaskedSequence out;
    out.ids = x.ids;
    for (size_t i = 0; i < x.ids.size(); ++i) {
        if (Vocabulary::is_special(x.ids[i])) {
            continue;
        }
        if (!rng.bernoulli(p)) {
            continue;
        }
        out.masked_positions.push_back(static_cast<int32_t>(i));
        if (scheme == MaskScheme::pure_mask) {
            out.ids[i] = Vocabulary::kMask;
        } else {
            const double u = rng.uniform();
            if (u < 0.8) {
                out.ids[i] = Vocabulary::kMask;
            } else if (u < 0.9) {
                out.ids[i] = Vocabulary::kNumSpecials +
                             static_cast<int32_t>(rng.uniform_int(non_special));
            } // else leave the original token in place
        }
    }
    return out;
}

TokenSequence unmask(const MaskedSequence& xm, const TokenSequence& x) {
    TokenSequence out;
    out.ids = xm.ids;
    for (int32_t pos : xm.masked_positions) {
        out.ids[static_cast<size_t>(pos)] = x.ids[static_cast<size_t>(pos)];
    }
    return out;
}

std::vector<std::string> read_corpus_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot read corpus file: " + path);
    }
    std::vector<std::string> docs;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) {
            docs.push_back(line);
        }
    }
    return docs;
}

} // namespace mcbert
