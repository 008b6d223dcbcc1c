#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kinseq/tensor.hpp"

namespace kinseq {

struct ModelConfig {
    int n_layers = 1;      // N identical layers in each stack
    int heads_enc = 1;
    int heads_dec = 1;
    index_t d_enc = 38;
    index_t d_dec = 16;
    index_t d_out = 16;
    index_t d_ff = 0;      // feed-forward width; 0 = 4x the stack width
    double dropout_p = 0.1;
    index_t max_len = 512;
    std::uint64_t seed = 0;

    index_t ff_width(index_t d_model) const { return d_ff > 0 ? d_ff : 4 * d_model; }
    void validate() const;
};

// PE[pos,2i] = sin(pos / 10000^(2i/d)), PE[pos,2i+1] = cos(pos / 10000^(2i/d))
Tensor positional_encoding(index_t T, index_t d);

// additive causal mask: 0 where j <= i, -1e9 where j > i
Tensor look_ahead_mask(index_t T);

// Scaled dot-product attention with h heads over pre-projected q/k/v sources.
// q: [Tq x d], kv: [Tkv x d]; mask (optional) is [Tq x Tkv] additive.
struct AttentionBlock {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    int heads = 1;
    index_t width = 0;

    Tensor apply(const Tensor& q_src, const Tensor& kv_src, const Tensor* mask) const;
};

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                            const Tensor* mask, const AttentionBlock& proj);

struct FeedForward {
    Tensor w1, b1, w2, b2;
    Tensor apply(const Tensor& x) const;
};

struct EncoderLayer {
    AttentionBlock self_attn;
    Tensor norm1_g, norm1_b, norm2_g, norm2_b;
    FeedForward ff;
};

struct DecoderLayer {
    AttentionBlock self_attn;
    AttentionBlock cross_attn;
    Tensor norm1_g, norm1_b, norm2_g, norm2_b, norm3_g, norm3_b;
    FeedForward ff;
};

// Deterministic per-call-site dropout seeding. The trainer hands each sample
// its own stream; forward consumes seeds in a fixed order.
struct DropoutStream {
    std::uint64_t base = 0;
    std::uint64_t counter = 0;
    std::uint64_t next() { return base + 0x9e3779b97f4a7c15ULL * ++counter; }
};

// Encoder-decoder transformer operating directly on feature sequences:
// there is no input embedding and no padding mask anywhere. The encoder
// ends in a fully connected projection from d_enc to d_dec so the decoder
// can attend over its output; the decoder ends in a d_out projection.
class TransformerModel {
 public:
    explicit TransformerModel(const ModelConfig& cfg);

    // enc_in: [T_e x d_enc] -> encoder memory [T_e x d_dec]
    Tensor encode(const Tensor& enc_in, bool train_mode = false,
                  DropoutStream* drop = nullptr) const;
    // dec_in: [T_d x d_dec] with memory from encode() -> [T_d x d_out]
    Tensor decode(const Tensor& memory, const Tensor& dec_in, bool train_mode = false,
                  DropoutStream* drop = nullptr) const;
    Tensor forward(const Tensor& enc_in, const Tensor& dec_in, bool train_mode = false,
                   DropoutStream* drop = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    index_t parameter_count() const;

    // closed form asserted against parameters() in tests
    static index_t expected_parameter_count(const ModelConfig& cfg);

 private:
    ModelConfig cfg_;
    std::vector<EncoderLayer> encoder_;
    Tensor enc_out_w, enc_out_b;  // the added encoder output layer, d_enc -> d_dec
    std::vector<DecoderLayer> decoder_;
    Tensor out_w, out_b;          // final projection, d_dec -> d_out
};

}  // namespace kinseq
