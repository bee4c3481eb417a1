#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mcbert/data.hpp"
#include "mcbert/errors.hpp"
#include "mcbert/vocab.hpp"

using namespace mcbert;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

} // namespace

TEST_CASE("char vocab over 'aab' is specials plus a and b") {
    Vocabulary v = build_vocab({"aab"}, 64, VocabMode::chars);
    CHECK(v.size() == 8);
    CHECK(v.token_of(0) == "[PAD]");
    CHECK(v.token_of(1) == "[MASK]");
    CHECK(v.token_of(2) == "[NOTA]");
    CHECK(v.token_of(3) == "[CLS]");
    CHECK(v.token_of(4) == "[SEP]");
    CHECK(v.token_of(5) == "[UNK]");
    CHECK(v.token_of(6) == "a"); // higher frequency first
    CHECK(v.token_of(7) == "b");
}

TEST_CASE("vocab max_size below the specials is rejected") {
    CHECK_THROWS_AS(build_vocab({"abc"}, 6, VocabMode::chars), ConfigError);
    CHECK_THROWS_AS(build_vocab({" ", ""}, 64, VocabMode::chars), ConfigError);
}

TEST_CASE("frequency ranking breaks ties lexicographically") {
    Vocabulary v = build_vocab({"cc bb aa cc"}, 64, VocabMode::words);
    CHECK(v.token_of(6) == "cc");
    CHECK(v.token_of(7) == "aa");
    CHECK(v.token_of(8) == "bb");
}

TEST_CASE("mini-bpe on 'ababab' merges the pair ab first") {
    Vocabulary v = build_vocab({"ababab"}, 9, VocabMode::mini_bpe);
    CHECK(v.token_to_id.count("ab") == 1);
    CHECK(v.token_to_id.count("ba") == 0);
    // Greedy longest-match segmentation of the training word.
    auto ids = tokenize(v, "ababab");
    std::string joined;
    for (int32_t id : ids) {
        CHECK(!Vocabulary::is_special(id));
        joined += v.token_of(id);
    }
    CHECK(joined == "ababab");
    CHECK(ids.size() < 6); // merges actually took effect
}

TEST_CASE("vocab file round-trips byte for byte, including escapes") {
    CHECK(unescape_token(escape_token("a\\b\nc\td\x01")) == "a\\b\nc\td\x01");

    Vocabulary v = build_vocab({"hello world\thello"}, 64, VocabMode::chars);
    const auto dir = std::filesystem::temp_directory_path() / "mcbert_vocab_test";
    std::filesystem::create_directories(dir);
    const std::string p1 = (dir / "v1.vocab").string();
    const std::string p2 = (dir / "v2.vocab").string();
    save_vocab(v, p1);
    Vocabulary v2 = load_vocab(p1, VocabMode::chars);
    save_vocab(v2, p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(v2.id_to_token == v.id_to_token);
}

TEST_CASE("sentence splitting on . ? !") {
    auto s = split_sentences("one two. three? four! tail");
    REQUIRE(s.size() == 4);
    CHECK(s[0] == "one two.");
    CHECK(s[3] == " tail");
}

TEST_CASE("packing: two 3-token sentences fit one max_len-8 sequence") {
    std::vector<std::vector<int32_t>> sents = {{10, 11, 12}, {13, 14, 15}};
    auto packed = pack_sequences(sents, 8);
    REQUIRE(packed.size() == 1);
    CHECK(packed[0].ids == std::vector<int32_t>{Vocabulary::kCls, 10, 11, 12, Vocabulary::kSep,
                                                13, 14, 15});
}

TEST_CASE("packing truncates a lone over-long sentence") {
    std::vector<std::vector<int32_t>> sents = {{10, 11, 12, 13, 14, 15, 16, 17, 18, 19}};
    auto packed = pack_sequences(sents, 8);
    REQUIRE(packed.size() == 1);
    CHECK(packed[0].ids.size() == 8);
    CHECK(packed[0].ids[0] == Vocabulary::kCls);
    CHECK(packed[0].ids[7] == 16);
}

TEST_CASE("packing conserves token counts minus truncations") {
    Rng rng(9);
    std::vector<std::vector<int32_t>> sents;
    int64_t total = 0;
    int64_t truncated = 0;
    const int64_t max_len = 16;
    for (int i = 0; i < 500; ++i) {
        const int64_t len = 1 + rng.uniform_int(24);
        std::vector<int32_t> s;
        for (int64_t j = 0; j < len; ++j) {
            s.push_back(static_cast<int32_t>(Vocabulary::kNumSpecials + rng.uniform_int(50)));
        }
        total += len;
        if (len + 1 > max_len) {
            truncated += len - (max_len - 1);
        }
        sents.push_back(std::move(s));
    }
    auto packed = pack_sequences(sents, max_len);
    int64_t content = 0;
    for (const auto& seq : packed) {
        CHECK(static_cast<int64_t>(seq.ids.size()) <= max_len);
        CHECK(seq.ids[0] == Vocabulary::kCls);
        for (int32_t id : seq.ids) {
            if (!Vocabulary::is_special(id)) {
                ++content;
            }
            CHECK(id != Vocabulary::kMask);
            CHECK(id != Vocabulary::kNota);
        }
    }
    CHECK(content == total - truncated);
}

TEST_CASE("mask rate matches p over 1e5 length-100 trials") {
    Vocabulary v = build_vocab({"abcdefghij"}, 64, VocabMode::chars);
    TokenSequence x;
    x.ids.push_back(Vocabulary::kCls);
    for (int i = 0; i < 100; ++i) {
        x.ids.push_back(static_cast<int32_t>(Vocabulary::kNumSpecials + i % 10));
    }
    const double p = 0.15;
    Rng rng(123);
    int64_t selected = 0, eligible = 0;
    for (int trial = 0; trial < 100000; ++trial) {
        MaskedSequence m = mask(x, p, rng, MaskScheme::pure_mask, v);
        selected += static_cast<int64_t>(m.masked_positions.size());
        eligible += 100;
        if (trial == 0) {
            // pure-mask: every selected position holds [MASK], and unmasking
            // restores the source exactly.
            for (int32_t pos : m.masked_positions) {
                CHECK(m.ids[static_cast<size_t>(pos)] == Vocabulary::kMask);
            }
            CHECK(unmask(m, x).ids == x.ids);
        }
    }
    const double rate = static_cast<double>(selected) / static_cast<double>(eligible);
    CHECK(std::fabs(rate - p) < 0.005);
}

TEST_CASE("bert-80-10-10 sub-rates are 0.8/0.1/0.1 within one percent") {
    Vocabulary v = build_vocab({"abcdefghij"}, 64, VocabMode::chars);
    TokenSequence x;
    for (int i = 0; i < 100; ++i) {
        x.ids.push_back(static_cast<int32_t>(Vocabulary::kNumSpecials + i % 10));
    }
    Rng rng(321);
    int64_t selected = 0, masked = 0, same = 0, random_tok = 0;
    while (selected < 100000) {
        MaskedSequence m = mask(x, 0.5, rng, MaskScheme::bert_80_10_10, v);
        for (int32_t pos : m.masked_positions) {
            ++selected;
            const int32_t got = m.ids[static_cast<size_t>(pos)];
            if (got == Vocabulary::kMask) {
                ++masked;
            } else if (got == x.ids[static_cast<size_t>(pos)]) {
                ++same;
            } else {
                ++random_tok;
            }
        }
    }
    const double n = static_cast<double>(selected);
    CHECK(std::fabs(masked / n - 0.8) < 0.01);
    // The "random token" draw can coincide with the original, so a sliver of
    // mass moves from the random bucket to the unchanged one.
    CHECK(std::fabs(random_tok / n - 0.1) < 0.011);
    CHECK(std::fabs(same / n - 0.1) < 0.011);
}

TEST_CASE("mask never selects special positions and is seed-deterministic") {
    Vocabulary v = build_vocab({"abc"}, 64, VocabMode::chars);
    TokenSequence x;
    x.ids = {Vocabulary::kCls, 6, 7, Vocabulary::kSep, 8, Vocabulary::kPad};
    Rng r1(7), r2(7);
    MaskedSequence m1 = mask(x, 0.9, r1, MaskScheme::pure_mask, v);
    MaskedSequence m2 = mask(x, 0.9, r2, MaskScheme::pure_mask, v);
    CHECK(m1.ids == m2.ids);
    CHECK(m1.masked_positions == m2.masked_positions);
    for (int32_t pos : m1.masked_positions) {
        CHECK(!Vocabulary::is_special(x.ids[static_cast<size_t>(pos)]));
    }
    CHECK_THROWS_AS(mask(x, 0.0, r1, MaskScheme::pure_mask, v), ConfigError);
    CHECK_THROWS_AS(mask(x, 1.0, r1, MaskScheme::pure_mask, v), ConfigError);
}
