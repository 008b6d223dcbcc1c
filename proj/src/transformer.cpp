#include "kinseq/transformer.hpp"

#include <cmath>

#include "kinseq/rng.hpp"

namespace kinseq {

void ModelConfig::validate() const {
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (heads_enc < 1 || heads_dec < 1) throw ConfigError("model: head counts must be >= 1");
    if (d_enc < 1 || d_dec < 1 || d_out < 1) throw ConfigError("model: dimensions must be >= 1");
    if (d_enc % 2 != 0 || d_dec % 2 != 0)
        throw ConfigError("model: d_enc and d_dec must be even for sinusoidal positions (got " +
                          std::to_string(d_enc) + ", " + std::to_string(d_dec) + ")");
    if (d_enc % heads_enc != 0)
        throw ConfigError("model: d_enc=" + std::to_string(d_enc) +
                          " not divisible by heads_enc=" + std::to_string(heads_enc));
    if (d_dec % heads_dec != 0)
        throw ConfigError("model: d_dec=" + std::to_string(d_dec) +
                          " not divisible by heads_dec=" + std::to_string(heads_dec));
    if (d_ff < 0) throw ConfigError("model: d_ff must be positive (or 0 for the 4x default)");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("model: dropout_p must be in [0,1)");
    if (max_len < 1) throw ConfigError("model: max_len must be >= 1");
}

Tensor positional_encoding(index_t T, index_t d) {
    if (d % 2 != 0)
        throw ConfigError("positional_encoding: dimension must be even, got " + std::to_string(d));
    Tensor pe = Tensor::zeros({T, d});
    for (index_t pos = 0; pos < T; ++pos) {
        for (index_t i = 0; i < d / 2; ++i) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
            pe.at(pos, 2 * i) = std::sin(angle);
            pe.at(pos, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

Tensor look_ahead_mask(index_t T) {
    if (T < 1) throw ConfigError("look_ahead_mask: T must be >= 1");
    Tensor m = Tensor::zeros({T, T});
    for (index_t i = 0; i < T; ++i)
        for (index_t j = i + 1; j < T; ++j) m.at(i, j) = -1e9;
    return m;
}

Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src, const Tensor& unused_v,
                            int heads, const Tensor* mask, const AttentionBlock& proj) {
    (void)unused_v;
    return proj.apply(q_src, kv_src, mask);
}

Tensor AttentionBlock::apply(const Tensor& q_src, const Tensor& kv_src, const Tensor* mask) const {
    const index_t d = width;
    if (d % heads != 0)
        throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    const index_t dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor q = linear(q_src, wq, bq);
    Tensor k = linear(kv_src, wk, bk);
    Tensor v = linear(kv_src, wv, bv);

    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = heads == 1 ? q : slice(q, 1, h * dh, dh);
        Tensor kh = heads == 1 ? k : slice(k, 1, h * dh, dh);
        Tensor vh = heads == 1 ? v : slice(v, 1, h * dh, dh);
        Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        if (mask) logits = add(logits, *mask);
        Tensor attn = softmax(logits, 1);
        head_outs.push_back(matmul(attn, vh));
    }
    Tensor merged = heads == 1 ? head_outs[0] : concat(head_outs, 1);
    return linear(merged, wo, bo);
}

Tensor FeedForward::apply(const Tensor& x) const {
    return linear(relu(linear(x, w1, b1)), w2, b2);
}

namespace {

constexpr double kLayerNormEps = 1e-9;

Tensor glorot(Rng& rng, index_t fan_in, index_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(static_cast<std::size_t>(fan_in * fan_out));
    for (double& x : v) x = rng.uniform(-limit, limit);
    return Tensor::param({fan_in, fan_out}, std::move(v));
}

AttentionBlock make_attention(Rng& rng, index_t d, int heads) {
    AttentionBlock a;
    a.heads = heads;
    a.width = d;
    a.wq = glorot(rng, d, d);
    a.bq = Tensor::param({d});
    a.wk = glorot(rng, d, d);
    a.bk = Tensor::param({d});
    a.wv = glorot(rng, d, d);
    a.bv = Tensor::param({d});
    a.wo = glorot(rng, d, d);
    a.bo = Tensor::param({d});
    return a;
}

FeedForward make_ff(Rng& rng, index_t d, index_t hidden) {
    FeedForward f;
    f.w1 = glorot(rng, d, hidden);
    f.b1 = Tensor::param({hidden});
    f.w2 = glorot(rng, hidden, d);
    f.b2 = Tensor::param({d});
    return f;
}

Tensor ones_param(index_t d) {
    return Tensor::param({d}, std::vector<double>(static_cast<std::size_t>(d), 1.0));
}

Tensor maybe_dropout(const Tensor& x, double p, bool train_mode, DropoutStream* drop) {
    if (!train_mode || p == 0.0) return x;
    DropoutStream fallback;  // train_mode without a stream still gets a defined mask
    DropoutStream* d = drop ? drop : &fallback;
    return dropout(x, p, d->next());
}

void collect_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                       const AttentionBlock& a) {
    out.emplace_back(prefix + ".wq", a.wq);
    out.emplace_back(prefix + ".bq", a.bq);
    out.emplace_back(prefix + ".wk", a.wk);
    out.emplace_back(prefix + ".bk", a.bk);
    out.emplace_back(prefix + ".wv", a.wv);
    out.emplace_back(prefix + ".bv", a.bv);
    out.emplace_back(prefix + ".wo", a.wo);
    out.emplace_back(prefix + ".bo", a.bo);
}

}  // namespace

TransformerModel::TransformerModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(cfg_.seed, "model-init"));
    const index_t ff_enc = cfg_.ff_width(cfg_.d_enc);
    const index_t ff_dec = cfg_.ff_width(cfg_.d_dec);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        EncoderLayer layer;
        layer.self_attn = make_attention(rng, cfg_.d_enc, cfg_.heads_enc);
        layer.norm1_g = ones_param(cfg_.d_enc);
        layer.norm1_b = Tensor::param({cfg_.d_enc});
        layer.ff = make_ff(rng, cfg_.d_enc, ff_enc);
        layer.norm2_g = ones_param(cfg_.d_enc);
        layer.norm2_b = Tensor::param({cfg_.d_enc});
        encoder_.push_back(std::move(layer));
    }
    enc_out_w = glorot(rng, cfg_.d_enc, cfg_.d_dec);
    enc_out_b = Tensor::param({cfg_.d_dec});
    for (int l = 0; l < cfg_.n_layers; ++l) {
        DecoderLayer layer;
        layer.self_attn = make_attention(rng, cfg_.d_dec, cfg_.heads_dec);
        layer.norm1_g = ones_param(cfg_.d_dec);
        layer.norm1_b = Tensor::param({cfg_.d_dec});
        layer.cross_attn = make_attention(rng, cfg_.d_dec, cfg_.heads_dec);
        layer.norm2_g = ones_param(cfg_.d_dec);
        layer.norm2_b = Tensor::param({cfg_.d_dec});
        layer.ff = make_ff(rng, cfg_.d_dec, ff_dec);
        layer.norm3_g = ones_param(cfg_.d_dec);
        layer.norm3_b = Tensor::param({cfg_.d_dec});
        decoder_.push_back(std::move(layer));
    }
    out_w = glorot(rng, cfg_.d_dec, cfg_.d_out);
    out_b = Tensor::param({cfg_.d_out});
}

Tensor TransformerModel::encode(const Tensor& enc_in, bool train_mode, DropoutStream* drop) const {
    if (enc_in.ndim() != 2 || enc_in.dim(1) != cfg_.d_enc)
        throw ConfigError("encoder input must be [T x " + std::to_string(cfg_.d_enc) + "], got " +
                          shape_str(enc_in.shape()));
    if (enc_in.dim(0) > cfg_.max_len)
        throw ConfigError("encoder sequence length " + std::to_string(enc_in.dim(0)) +
                          " exceeds max_len " + std::to_string(cfg_.max_len));
    const double p = cfg_.dropout_p;
    Tensor x = add(enc_in, positional_encoding(enc_in.dim(0), cfg_.d_enc));
    x = maybe_dropout(x, p, train_mode, drop);
    for (const EncoderLayer& layer : encoder_) {
        Tensor attn = layer.self_attn.apply(x, x, nullptr);
        x = layer_norm(add(x, maybe_dropout(attn, p, train_mode, drop)), layer.norm1_g,
                       layer.norm1_b, kLayerNormEps);
        Tensor ff = layer.ff.apply(x);
        x = layer_norm(add(x, maybe_dropout(ff, p, train_mode, drop)), layer.norm2_g, layer.norm2_b,
                       kLayerNormEps);
    }
    return linear(x, enc_out_w, enc_out_b);
}

Tensor TransformerModel::decode(const Tensor& memory, const Tensor& dec_in, bool train_mode,
                                DropoutStream* drop) const {
    if (dec_in.ndim() != 2 || dec_in.dim(1) != cfg_.d_dec)
        throw ConfigError("decoder input must be [T x " + std::to_string(cfg_.d_dec) + "], got " +
                          shape_str(dec_in.shape()));
    if (memory.ndim() != 2 || memory.dim(1) != cfg_.d_dec)
        throw ConfigError("encoder memory must be [T x " + std::to_string(cfg_.d_dec) + "], got " +
                          shape_str(memory.shape()));
    if (dec_in.dim(0) > cfg_.max_len)
        throw ConfigError("decoder sequence length " + std::to_string(dec_in.dim(0)) +
                          " exceeds max_len " + std::to_string(cfg_.max_len));
    const double p = cfg_.dropout_p;
    const Tensor causal = look_ahead_mask(dec_in.dim(0));
    Tensor x = add(dec_in, positional_encoding(dec_in.dim(0), cfg_.d_dec));
    x = maybe_dropout(x, p, train_mode, drop);
    for (const DecoderLayer& layer : decoder_) {
        Tensor self = layer.self_attn.apply(x, x, &causal);
        x = layer_norm(add(x, maybe_dropout(self, p, train_mode, drop)), layer.norm1_g,
                       layer.norm1_b, kLayerNormEps);
        Tensor cross = layer.cross_attn.apply(x, memory, nullptr);
        x = layer_norm(add(x, maybe_dropout(cross, p, train_mode, drop)), layer.norm2_g,
                       layer.norm2_b, kLayerNormEps);
        Tensor ff = layer.ff.apply(x);
        x = layer_norm(add(x, maybe_dropout(ff, p, train_mode, drop)), layer.norm3_g, layer.norm3_b,
                       kLayerNormEps);
    }
    return linear(x, out_w, out_b);
}

Tensor TransformerModel::forward(const Tensor& enc_in, const Tensor& dec_in, bool train_mode,
                                 DropoutStream* drop) const {
    return decode(encode(enc_in, train_mode, drop), dec_in, train_mode, drop);
}

std::vector<std::pair<std::string, Tensor>> TransformerModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
        const std::string prefix = "enc." + std::to_string(l);
        const EncoderLayer& e = encoder_[l];
        collect_attention(out, prefix + ".self", e.self_attn);
        out.emplace_back(prefix + ".norm1.g", e.norm1_g);
        out.emplace_back(prefix + ".norm1.b", e.norm1_b);
        out.emplace_back(prefix + ".ff.w1", e.ff.w1);
        out.emplace_back(prefix + ".ff.b1", e.ff.b1);
        out.emplace_back(prefix + ".ff.w2", e.ff.w2);
        out.emplace_back(prefix + ".ff.b2", e.ff.b2);
        out.emplace_back(prefix + ".norm2.g", e.norm2_g);
        out.emplace_back(prefix + ".norm2.b", e.norm2_b);
    }
    out.emplace_back("enc_out.w", enc_out_w);
    out.emplace_back("enc_out.b", enc_out_b);
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
        const std::string prefix = "dec." + std::to_string(l);
        const DecoderLayer& d = decoder_[l];
        collect_attention(out, prefix + ".self", d.self_attn);
        out.emplace_back(prefix + ".norm1.g", d.norm1_g);
        out.emplace_back(prefix + ".norm1.b", d.norm1_b);
        collect_attention(out, prefix + ".cross", d.cross_attn);
        out.emplace_back(prefix + ".norm2.g", d.norm2_g);
        out.emplace_back(prefix + ".norm2.b", d.norm2_b);
        out.emplace_back(prefix + ".ff.w1", d.ff.w1);
        out.emplace_back(prefix + ".ff.b1", d.ff.b1);
        out.emplace_back(prefix + ".ff.w2", d.ff.w2);
        out.emplace_back(prefix + ".ff.b2", d.ff.b2);
        out.emplace_back(prefix + ".norm3.g", d.norm3_g);
        out.emplace_back(prefix + ".norm3.b", d.norm3_b);
    }
    out.emplace_back("out.w", out_w);
    out.emplace_back("out.b", out_b);
    return out;
}

std::vector<Tensor> TransformerModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

index_t TransformerModel::parameter_count() const {
    index_t n = 0;
    for (const Tensor& t : parameters()) n += t.numel();
    return n;
}

index_t TransformerModel::expected_parameter_count(const ModelConfig& cfg) {
    const index_t de = cfg.d_enc, dd = cfg.d_dec;
    const index_t fe = cfg.ff_width(de), fd = cfg.ff_width(dd);
    const index_t attn_e = 4 * de * de + 4 * de;
    const index_t attn_d = 4 * dd * dd + 4 * dd;
    const index_t enc_layer = attn_e + 2 * (2 * de) + (de * fe + fe + fe * de + de);
    const index_t dec_layer = 2 * attn_d + 3 * (2 * dd) + (dd * fd + fd + fd * dd + dd);
    return cfg.n_layers * (enc_layer + dec_layer) + (de * dd + dd) + (dd * cfg.d_out + cfg.d_out);
}

}  // namespace kinseq
