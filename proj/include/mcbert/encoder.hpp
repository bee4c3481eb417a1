#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcbert/ops.hpp"
#include "mcbert/tensor.hpp"

namespace mcbert {

struct EncoderConfig {
    int64_t num_layers = 2;
    int64_t hidden_size = 128;
    int64_t ffn_size = 512;
    int64_t num_heads = 4;
    int64_t head_size = 32;
    int64_t embed_size = 128;
    int64_t max_seq_len = 128;
    int64_t vocab_size = 256;
    double dropout_rate = 0.1;

    bool has_input_projection() const { return embed_size != hidden_size; }
    void validate() const;
    std::string describe() const;
};

// Named presets. The two paper-scale configs mirror the published model sizes;
// the tiny pair keeps the controller:encoder proportions at desk scale (hidden
// halved rather than a third so head_size stays integral) and the shared
// embedding width.
EncoderConfig desk_scale_config(const std::string& preset);
EncoderConfig paper_encoder_config();
EncoderConfig paper_controller_config();

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerParams {
    AttentionParams attn;
    Tensor ln1_gain, ln1_bias;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_gain, ln2_bias;
};

struct EncoderParams {
    EncoderConfig config;
    Tensor tok_emb;  // (V, E); can alias another network's table when shared
    Tensor pos_emb;  // (max_seq_len, E), learned absolute positions
    Tensor emb_ln_gain, emb_ln_bias;
    Tensor in_proj_w, in_proj_b;   // only when E != H
    std::vector<LayerParams> layers;
    Tensor out_proj_w, out_proj_b; // hidden -> embed before tied output heads, when E != H
    Tensor mlm_bias;               // (V), output bias of vocabulary heads

    // Stable iteration order; names drive checkpointing and weight-decay
    // exclusions (suffix .bias / .gain is never decayed).
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Deterministic initialization: truncated normal (std 0.02) weights, zero
// biases, unit layer-norm gains.
EncoderParams init_params(const EncoderConfig& config, uint64_t seed);

struct Batch {
    int64_t batch = 0;
    int64_t seq_len = 0;
    std::vector<int32_t> ids;     // batch * seq_len, [PAD] on the tail
    std::vector<uint8_t> is_pad;  // batch * seq_len
};

struct EncodeOptions {
    bool train = false;          // enables dropout
    Rng* dropout_rng = nullptr;  // required when train
    // When set, receives one detached (batch*heads, n, n) tensor per layer.
    std::vector<Tensor>* attention_probs = nullptr;
};

// Contextual representations: one hidden vector per input position, shape
// (batch * seq_len, hidden_size).
Tensor encode(Tape* tape, const EncoderParams& params, const Batch& batch,
              const EncodeOptions& opt = {});

// Single-sequence convenience wrapper.
Tensor encode(Tape* tape, const EncoderParams& params, const std::vector<int32_t>& ids,
              const EncodeOptions& opt = {});

// hidden -> embedding space (out projection when E != H, identity otherwise).
Tensor project_to_embed(Tape* tape, const EncoderParams& params, const Tensor& hidden);

// Tied-embedding vocabulary logits for the given hidden rows.
Tensor vocab_logits(Tape* tape, const EncoderParams& params, const Tensor& hidden);

// Forward+backward matmul FLOPs per token: attention and FFN matmuls times
// three (one forward pass plus roughly two passes of backward), the same
// convention the efficiency comparisons use. Embedding lookups and output
// heads are excluded.
double encoder_matmul_flops_per_token(const EncoderConfig& config, int64_t seq_len);

} // namespace mcbert
