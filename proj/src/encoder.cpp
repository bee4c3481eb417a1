#include "mcbert/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "mcbert/errors.hpp"

namespace mcbert {

namespace op = ops;

void EncoderConfig::validate() const {
    if (num_layers < 0) {
        throw ConfigError("encoder: num_layers must be >= 0");
    }
    if (hidden_size < 1 || ffn_size < 1 || num_heads < 1 || head_size < 1 || embed_size < 1 ||
        max_seq_len < 1 || vocab_size < 1) {
        throw ConfigError("encoder: all size fields must be >= 1");
    }
    if (num_heads * head_size != hidden_size) {
        throw ConfigError("encoder: num_heads * head_size must equal hidden_size");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("encoder: dropout_rate must be in [0,1)");
    }
}

std::string EncoderConfig::describe() const {
    return std::to_string(num_layers) + "/" + std::to_string(hidden_size) + "/" +
           std::to_string(ffn_size) + "/" + std::to_string(num_heads) + "/" +
           std::to_string(head_size) + "/" + std::to_string(embed_size);
}

EncoderConfig desk_scale_config(const std::string& preset) {
    EncoderConfig c;
    if (preset == "tiny-encoder") {
        c.num_layers = 2;
        c.hidden_size = 128;
        c.ffn_size = 512;
        c.num_heads = 4;
        c.head_size = 32;
        c.embed_size = 128;
    } else if (preset == "tiny-controller") {
        c.num_layers = 2;
        c.hidden_size = 64;
        c.ffn_size = 256;
        c.num_heads = 2;
        c.head_size = 32;
        c.embed_size = 128;
    } else {
        throw ConfigError("unknown encoder preset '" + preset +
                          "' (expected tiny-encoder or tiny-controller)");
    }
    c.max_seq_len = 128;
    c.vocab_size = 256;
    c.dropout_rate = 0.1;
    c.validate();
    return c;
}

EncoderConfig paper_encoder_config() {
    EncoderConfig c;
    c.num_layers = 12;
    c.hidden_size = 768;
    c.ffn_size = 3072;
    c.num_heads = 12;
    c.head_size = 64;
    c.embed_size = 768;
    c.max_seq_len = 512;
    c.vocab_size = 32768;
    c.dropout_rate = 0.1;
    c.validate();
    return c;
}

EncoderConfig paper_controller_config() {
    EncoderConfig c;
    c.num_layers = 12;
    c.hidden_size = 256;
    c.ffn_size = 1024;
    c.num_heads = 4;
    c.head_size = 64;
    c.embed_size = 768;
    c.max_seq_len = 512;
    c.vocab_size = 32768;
    c.dropout_rate = 0.1;
    c.validate();
    return c;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    out.emplace_back("emb_ln.gain", emb_ln_gain);
    out.emplace_back("emb_ln.bias", emb_ln_bias);
    if (config.has_input_projection()) {
        out.emplace_back("in_proj.weight", in_proj_w);
        out.emplace_back("in_proj.bias", in_proj_b);
    }
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        const LayerParams& lp = layers[l];
        out.emplace_back(pre + "attn.wq.weight", lp.attn.wq);
        out.emplace_back(pre + "attn.wq.bias", lp.attn.bq);
        out.emplace_back(pre + "attn.wk.weight", lp.attn.wk);
        out.emplace_back(pre + "attn.wk.bias", lp.attn.bk);
        out.emplace_back(pre + "attn.wv.weight", lp.attn.wv);
        out.emplace_back(pre + "attn.wv.bias", lp.attn.bv);
        out.emplace_back(pre + "attn.wo.weight", lp.attn.wo);
        out.emplace_back(pre + "attn.wo.bias", lp.attn.bo);
        out.emplace_back(pre + "ln1.gain", lp.ln1_gain);
        out.emplace_back(pre + "ln1.bias", lp.ln1_bias);
        out.emplace_back(pre + "ffn.w1.weight", lp.ffn_w1);
        out.emplace_back(pre + "ffn.w1.bias", lp.ffn_b1);
        out.emplace_back(pre + "ffn.w2.weight", lp.ffn_w2);
        out.emplace_back(pre + "ffn.w2.bias", lp.ffn_b2);
        out.emplace_back(pre + "ln2.gain", lp.ln2_gain);
        out.emplace_back(pre + "ln2.bias", lp.ln2_bias);
    }
    if (config.has_input_projection()) {
        out.emplace_back("out_proj.weight", out_proj_w);
        out.emplace_back("out_proj.bias", out_proj_b);
    }
    out.emplace_back("mlm.bias", mlm_bias);
    return out;
}

namespace {

Tensor init_weight(Shape shape, Rng& rng, double std) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    rng.fill_truncated_normal(t.values(), std);
    return t;
}

} // namespace

EncoderParams init_params(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    constexpr double kInitStd = 0.02;
    Rng rng(seed);
    EncoderParams p;
    p.config = config;
    const int64_t h = config.hidden_size, e = config.embed_size, f = config.ffn_size;
    p.tok_emb = init_weight({config.vocab_size, e}, rng, kInitStd);
    p.pos_emb = init_weight({config.max_seq_len, e}, rng, kInitStd);
    p.emb_ln_gain = Tensor::full({e}, 1.0, true);
    p.emb_ln_bias = Tensor::zeros({e}, true);
    if (config.has_input_projection()) {
        p.in_proj_w = init_weight({e, h}, rng, kInitStd);
        p.in_proj_b = Tensor::zeros({h}, true);
    }
    for (int64_t l = 0; l < config.num_layers; ++l) {
        LayerParams lp;
        lp.attn.wq = init_weight({h, h}, rng, kInitStd);
        lp.attn.bq = Tensor::zeros({h}, true);
        lp.attn.wk = init_weight({h, h}, rng, kInitStd);
        lp.attn.bk = Tensor::zeros({h}, true);
        lp.attn.wv = init_weight({h, h}, rng, kInitStd);
        lp.attn.bv = Tensor::zeros({h}, true);
        lp.attn.wo = init_weight({h, h}, rng, kInitStd);
        lp.attn.bo = Tensor::zeros({h}, true);
        lp.ln1_gain = Tensor::full({h}, 1.0, true);
        lp.ln1_bias = Tensor::zeros({h}, true);
        lp.ffn_w1 = init_weight({h, f}, rng, kInitStd);
        lp.ffn_b1 = Tensor::zeros({f}, true);
        lp.ffn_w2 = init_weight({f, h}, rng, kInitStd);
        lp.ffn_b2 = Tensor::zeros({h}, true);
        lp.ln2_gain = Tensor::full({h}, 1.0, true);
        lp.ln2_bias = Tensor::zeros({h}, true);
        p.layers.push_back(std::move(lp));
    }
    if (config.has_input_projection()) {
        p.out_proj_w = init_weight({h, e}, rng, kInitStd);
        p.out_proj_b = Tensor::zeros({e}, true);
    }
    p.mlm_bias = Tensor::zeros({config.vocab_size}, true);
    return p;
}

namespace {

constexpr double kLnEps = 1e-12;
constexpr double kMaskNegative = -1e30;

Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    return op::add_rowvec(tape, op::matmul(tape, x, w), b);
}

Tensor maybe_dropout(Tape* tape, const Tensor& x, const EncodeOptions& opt, double rate) {
    if (!opt.train || rate == 0.0) {
        return x;
    }
    if (!opt.dropout_rng) {
        throw ConfigError("encode: train mode requires a dropout rng");
    }
    return op::dropout(tape, x, rate, *opt.dropout_rng);
}

} // namespace

Tensor encode(Tape* tape, const EncoderParams& params, const Batch& batch,
              const EncodeOptions& opt) {
    const EncoderConfig& cfg = params.config;
    const int64_t B = batch.batch, n = batch.seq_len;
    if (B < 1 || n < 1) {
        throw LengthError("encode: empty batch");
    }
    if (n > cfg.max_seq_len) {
        throw LengthError("encode: sequence length " + std::to_string(n) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    if (static_cast<int64_t>(batch.ids.size()) != B * n) {
        throw DimensionError("encode: batch ids size mismatch");
    }
    std::vector<int64_t> tok_ids(batch.ids.size());
    for (size_t i = 0; i < batch.ids.size(); ++i) {
        if (batch.ids[i] < 0 || batch.ids[i] >= cfg.vocab_size) {
            throw VocabError("encode: token id " + std::to_string(batch.ids[i]) +
                             " outside vocabulary of size " + std::to_string(cfg.vocab_size));
        }
        tok_ids[i] = batch.ids[i];
    }
    std::vector<int64_t> pos_ids(static_cast<size_t>(B * n));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < n; ++t) {
            pos_ids[static_cast<size_t>(b * n + t)] = t;
        }
    }

    Tensor x = op::add(tape, op::gather_rows(tape, params.tok_emb, tok_ids),
                       op::gather_rows(tape, params.pos_emb, pos_ids));
    x = op::layer_norm(tape, x, params.emb_ln_gain, params.emb_ln_bias, kLnEps);
    x = maybe_dropout(tape, x, opt, cfg.dropout_rate);
    if (cfg.has_input_projection()) {
        x = linear(tape, x, params.in_proj_w, params.in_proj_b);
    }

    // Additive attention mask: a large negative on [PAD] key columns, shared
    // by every head and query row. Not a graph input.
    Tensor attn_mask;
    const bool any_pad =
        std::any_of(batch.is_pad.begin(), batch.is_pad.end(), [](uint8_t v) { return v != 0; });
    if (any_pad) {
        attn_mask = Tensor::zeros({B * cfg.num_heads, n, n});
        double* m = attn_mask.data();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t hh = 0; hh < cfg.num_heads; ++hh) {
                for (int64_t q = 0; q < n; ++q) {
                    for (int64_t kpos = 0; kpos < n; ++kpos) {
                        if (batch.is_pad[static_cast<size_t>(b * n + kpos)]) {
                            m[((b * cfg.num_heads + hh) * n + q) * n + kpos] = kMaskNegative;
                        }
                    }
                }
            }
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_size));
    for (const LayerParams& lp : params.layers) {
        Tensor q = op::split_heads(tape, linear(tape, x, lp.attn.wq, lp.attn.bq), B, n, cfg.num_heads);
        Tensor k = op::split_heads(tape, linear(tape, x, lp.attn.wk, lp.attn.bk), B, n, cfg.num_heads);
        Tensor v = op::split_heads(tape, linear(tape, x, lp.attn.wv, lp.attn.bv), B, n, cfg.num_heads);
        Tensor scores = op::affine(tape, op::bmm(tape, q, k, true), scale, 0.0);
        if (any_pad) {
            scores = op::add(tape, scores, attn_mask);
        }
        Tensor probs = op::softmax(tape, scores);
        if (opt.attention_probs) {
            opt.attention_probs->push_back(probs.detach_copy());
        }
        probs = maybe_dropout(tape, probs, opt, cfg.dropout_rate);
        Tensor ctx = op::merge_heads(tape, op::bmm(tape, probs, v, false), B, n, cfg.num_heads);
        Tensor attn_out = linear(tape, ctx, lp.attn.wo, lp.attn.bo);
        attn_out = maybe_dropout(tape, attn_out, opt, cfg.dropout_rate);
        x = op::layer_norm(tape, op::add(tape, x, attn_out), lp.ln1_gain, lp.ln1_bias, kLnEps);

        Tensor ffn = op::gelu(tape, linear(tape, x, lp.ffn_w1, lp.ffn_b1));
        ffn = linear(tape, ffn, lp.ffn_w2, lp.ffn_b2);
        ffn = maybe_dropout(tape, ffn, opt, cfg.dropout_rate);
        x = op::layer_norm(tape, op::add(tape, x, ffn), lp.ln2_gain, lp.ln2_bias, kLnEps);
    }
    return x;
}

Tensor encode(Tape* tape, const EncoderParams& params, const std::vector<int32_t>& ids,
              const EncodeOptions& opt) {
    Batch b;
    b.batch = 1;
    b.seq_len = static_cast<int64_t>(ids.size());
    b.ids = ids;
    b.is_pad.assign(ids.size(), 0);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == 0) {
            b.is_pad[i] = 1;
        }
    }
    return encode(tape, params, b, opt);
}

Tensor project_to_embed(Tape* tape, const EncoderParams& params, const Tensor& hidden) {
    if (!params.config.has_input_projection()) {
        return hidden;
    }
    return linear(tape, hidden, params.out_proj_w, params.out_proj_b);
}

Tensor vocab_logits(Tape* tape, const EncoderParams& params, const Tensor& hidden) {
    Tensor he = project_to_embed(tape, params, hidden);
    return op::add_rowvec(tape, op::matmul_nt(tape, he, params.tok_emb), params.mlm_bias);
}

double encoder_matmul_flops_per_token(const EncoderConfig& config, int64_t seq_len) {
    const double h = static_cast<double>(config.hidden_size);
    const double f = static_cast<double>(config.ffn_size);
    const double n = static_cast<double>(seq_len);
    // Per layer and token, forward multiply-adds counted as 2 FLOPs each:
    //   QKVO projections: 4 matmuls of (n,h)x(h,h)  -> 8 h^2
    //   attention scores + context: 2 per-head matmuls -> 4 n h
    //   FFN: (n,h)x(h,f) and (n,f)x(f,h)             -> 4 h f
    const double per_layer = 8.0 * h * h + 4.0 * n * h + 4.0 * h * f;
    return 3.0 * per_layer * static_cast<double>(config.num_layers);
}

} // namespace mcbert
