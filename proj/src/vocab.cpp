#include "mcbert/vocab.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "mcbert/errors.hpp"

namespace mcbert {

namespace {

const char* kSpecialNames[Vocabulary::kNumSpecials] = {
    "[PAD]", "[MASK]", "[NOTA]", "[CLS]", "[SEP]", "[UNK]",
};

std::vector<std::string> whitespace_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

Vocabulary finalize(std::vector<std::pair<std::string, int64_t>> ranked, int64_t max_size,
                    VocabMode mode) {
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    Vocabulary v;
    v.mode = mode;
    for (int32_t i = 0; i < Vocabulary::kNumSpecials; ++i) {
        v.id_to_token.emplace_back(kSpecialNames[i]);
    }
    for (const auto& [tok, cnt] : ranked) {
        if (static_cast<int64_t>(v.id_to_token.size()) >= max_size) {
            break;
        }
        v.id_to_token.push_back(tok);
    }
    for (size_t i = 0; i < v.id_to_token.size(); ++i) {
        v.token_to_id[v.id_to_token[i]] = static_cast<int32_t>(i);
    }
    return v;
}

// Plain BPE merge loop over the word-frequency table: repeatedly fuse the most
// frequent adjacent symbol pair (ties to the lexicographically smallest pair)
// until the size cap is hit or no pair repeats.
std::vector<std::string> learn_bpe_symbols(
    const std::map<std::vector<std::string>, int64_t>& word_freq0, int64_t symbol_budget) {
    std::vector<std::pair<std::vector<std::string>, int64_t>> words(word_freq0.begin(),
                                                                    word_freq0.end());
    std::map<std::string, int64_t> symbols;
    for (const auto& [w, f] : words) {
        for (const auto& s : w) {
            symbols[s] += f;
        }
    }
    while (static_cast<int64_t>(symbols.size()) < symbol_budget) {
        std::map<std::pair<std::string, std::string>, int64_t> pair_count;
        for (const auto& [w, f] : words) {
            for (size_t i = 0; i + 1 < w.size(); ++i) {
                pair_count[{w[i], w[i + 1]}] += f;
            }
        }
        std::pair<std::string, std::string> best;
        int64_t best_count = 1; // require at least 2 occurrences
        for (const auto& [pr, cnt] : pair_count) {
            if (cnt > best_count) {
                best = pr;
                best_count = cnt;
            }
        }
        if (best_count <= 1) {
            break;
        }
        const std::string merged = best.first + best.second;
        for (auto& [w, f] : words) {
            std::vector<std::string> nw;
            nw.reserve(w.size());
            for (size_t i = 0; i < w.size();) {
                if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
                    nw.push_back(merged);
                    i += 2;
                } else {
                    nw.push_back(w[i]);
                    ++i;
                }
            }
            w = std::move(nw);
        }
        symbols.clear();
        for (const auto& [w, f] : words) {
            for (const auto& s : w) {
                symbols[s] += f;
            }
        }
        symbols.try_emplace(merged, 0); // keep the merge even if fully absorbed later
    }
    std::vector<std::string> out;
    out.reserve(symbols.size());
    for (const auto& [s, cnt] : symbols) {
        out.push_back(s);
    }
    return out;
}

} // namespace

VocabMode vocab_mode_from_string(const std::string& s) {
    if (s == "char") return VocabMode::chars;
    if (s == "word") return VocabMode::words;
    if (s == "mini-bpe") return VocabMode::mini_bpe;
    throw ConfigError("unknown vocab mode '" + s + "' (expected char, word or mini-bpe)");
}

std::string to_string(VocabMode m) {
    switch (m) {
        case VocabMode::chars: return "char";
        case VocabMode::words: return "word";
        case VocabMode::mini_bpe: return "mini-bpe";
    }
    return "?";
}

std::vector<std::string> utf8_codepoints(const std::string& text) {
    std::vector<std::string> out;
    for (size_t i = 0; i < text.size();) {
        const auto c = static_cast<unsigned char>(text[i]);
        size_t len = 1;
        if (c >= 0xF0) {
            len = 4;
        } else if (c >= 0xE0) {
            len = 3;
        } else if (c >= 0xC0) {
            len = 2;
        }
        if (i + len > text.size()) {
            len = 1;
        }
        out.push_back(text.substr(i, len));
        i += len;
    }
    return out;
}

Vocabulary build_vocab(const std::vector<std::string>& docs, int64_t max_size, VocabMode mode) {
    if (max_size < Vocabulary::kNumSpecials + 1) {
        throw ConfigError("vocab max_size must allow the specials plus at least one token");
    }
    bool any = false;
    for (const auto& d : docs) {
        if (!whitespace_words(d).empty()) {
            any = true;
            break;
        }
    }
    if (!any) {
        throw ConfigError("empty corpus");
    }

    if (mode == VocabMode::chars) {
        std::map<std::string, int64_t> counts;
        for (const auto& d : docs) {
            for (const auto& cp : utf8_codepoints(d)) {
                counts[cp] += 1;
            }
        }
        return finalize({counts.begin(), counts.end()}, max_size, mode);
    }

    if (mode == VocabMode::words) {
        std::map<std::string, int64_t> counts;
        for (const auto& d : docs) {
            for (const auto& w : whitespace_words(d)) {
                counts[w] += 1;
            }
        }
        return finalize({counts.begin(), counts.end()}, max_size, mode);
    }

    // mini-bpe
    std::map<std::vector<std::string>, int64_t> word_freq;
    for (const auto& d : docs) {
        for (const auto& w : whitespace_words(d)) {
            word_freq[utf8_codepoints(w)] += 1;
        }
    }
    const int64_t budget = max_size - Vocabulary::kNumSpecials;
    std::vector<std::string> symbols = learn_bpe_symbols(word_freq, budget);

    // Rank by frequency under the final segmentation.
    std::map<std::string, int64_t> counts;
    for (const auto& s : symbols) {
        counts[s] = 0;
    }
    Vocabulary probe = finalize({counts.begin(), counts.end()}, max_size, mode);
    for (const auto& [w, f] : word_freq) {
        std::string joined;
        for (const auto& cp : w) {
            joined += cp;
        }
        for (int32_t id : tokenize(probe, joined)) {
            if (!Vocabulary::is_special(id)) {
                counts[probe.token_of(id)] += f;
            }
        }
    }
    return finalize({counts.begin(), counts.end()}, max_size, mode);
}

std::vector<int32_t> tokenize(const Vocabulary& vocab, const std::string& text) {
    std::vector<int32_t> out;
    if (vocab.mode == VocabMode::chars) {
        for (const auto& cp : utf8_codepoints(text)) {
            out.push_back(vocab.id_of(cp));
        }
        return out;
    }
    if (vocab.mode == VocabMode::words) {
        for (const auto& w : whitespace_words(text)) {
            out.push_back(vocab.id_of(w));
        }
        return out;
    }
    // mini-bpe: greedy longest match over each whitespace word; a code point
    // with no table entry becomes [UNK]. Matching off the token table keeps a
    // vocabulary loaded from file self-contained (no merge list needed).
    for (const auto& w : whitespace_words(text)) {
        const std::vector<std::string> cps = utf8_codepoints(w);
        size_t i = 0;
        while (i < cps.size()) {
            size_t best_len = 0;
            int32_t best_id = Vocabulary::kUnk;
            std::string cand;
            for (size_t j = i; j < cps.size(); ++j) {
                cand += cps[j];
                auto it = vocab.token_to_id.find(cand);
                if (it != vocab.token_to_id.end()) {
                    best_len = j - i + 1;
                    best_id = it->second;
                }
            }
            if (best_len == 0) {
                out.push_back(Vocabulary::kUnk);
                i += 1;
            } else {
                out.push_back(best_id);
                i += best_len;
            }
        }
    }
    return out;
}

std::string escape_token(const std::string& tok) {
    std::string out;
    for (char raw : tok) {
        const auto c = static_cast<unsigned char>(raw);
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\x%02x", c);
                    out += buf;
                } else {
                    out.push_back(raw);
                }
        }
    }
    return out;
}

std::string unescape_token(const std::string& line) {
    std::string out;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '\\') {
            out.push_back(line[i]);
            continue;
        }
        if (i + 1 >= line.size()) {
            throw ConfigError("dangling escape in vocab file");
        }
        const char c = line[++i];
        switch (c) {
            case '\\': out.push_back('\\'); break;
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case 'x': {
                if (i + 2 >= line.size()) {
                    throw ConfigError("truncated \\x escape in vocab file");
                }
                out.push_back(static_cast<char>(std::stoi(line.substr(i + 1, 2), nullptr, 16)));
                i += 2;
                break;
            }
            default:
                throw ConfigError("unknown escape in vocab file");
        }
    }
    return out;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot write vocab file: " + path);
    }
    for (const auto& tok : vocab.id_to_token) {
        f << escape_token(tok) << '\n';
    }
}

Vocabulary load_vocab(const std::string& path, VocabMode mode) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot read vocab file: " + path);
    }
    Vocabulary v;
    v.mode = mode;
    std::string line;
    while (std::getline(f, line)) {
        v.id_to_token.push_back(unescape_token(line));
    }
    if (static_cast<int32_t>(v.id_to_token.size()) < Vocabulary::kNumSpecials) {
        throw ConfigError("vocab file too small: " + path);
    }
    for (int32_t i = 0; i < Vocabulary::kNumSpecials; ++i) {
        if (v.id_to_token[static_cast<size_t>(i)] != kSpecialNames[i]) {
            throw ConfigError("vocab file is missing special tokens in the fixed order");
        }
    }
    for (size_t i = 0; i < v.id_to_token.size(); ++i) {
        v.token_to_id[v.id_to_token[i]] = static_cast<int32_t>(i);
    }
    return v;
}

} // namespace mcbert
