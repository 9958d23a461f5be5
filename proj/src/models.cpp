#include "ppg/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ppg/errors.hpp"

namespace ppg {

LinearParams LinearParams::init(std::size_t in, std::size_t out, Rng& rng) {
    LinearParams p;
    p.W = glorot_init(in, out, rng);  // stored [in, out]
    p.b = Tensor::zeros({out}, true);
    return p;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
    return add_bias(matmul(x, p.W), p.b);
}

GrnParams GrnParams::init(std::size_t d, std::size_t d_ctx, Rng& rng) {
    GrnParams p;
    p.d = d;
    p.fc1 = LinearParams::init(d, d, rng);
    p.fc2 = LinearParams::init(d, d, rng);
    if (d_ctx > 0) p.Wc = glorot_init(d_ctx, d, rng);
    p.gate = LinearParams::init(d, d, rng);
    p.value = LinearParams::init(d, d, rng);
    p.ln_gain = Tensor::full({d}, 1.0, true);
    p.ln_bias = Tensor::zeros({d}, true);
    return p;
}

Tensor glu(const Tensor& gamma, const GrnParams& p) {
    return mul(sigmoid(linear(gamma, p.gate)), linear(gamma, p.value));
}

Tensor grn_forward(const Tensor& a, const Tensor* context, const GrnParams& p, bool training,
                   double dropout_p, Rng& rng) {
    if (a.shape().back() != p.d)
        throw std::invalid_argument("grn_forward: input width " + a.shape_str() +
                                    " does not match d=" + std::to_string(p.d));
    Tensor pre = linear(a, p.fc2);
    if (context != nullptr) {
        if (!p.Wc.defined())
            throw std::invalid_argument("grn_forward: context given but no context projection");
        if (context->shape().back() != p.Wc.dim(0))
            throw std::invalid_argument("grn_forward: context width mismatch " +
                                        context->shape_str());
        pre = add(pre, matmul(*context, p.Wc));
    }
    Tensor eta2 = elu(pre);
    Tensor eta1 = linear(eta2, p.fc1);
    eta1 = dropout(eta1, dropout_p, training, rng);
    return layer_norm(add(a, glu(eta1, p)), p.ln_gain, p.ln_bias, kLayerNormEps);
}

AttentionParams AttentionParams::init(std::size_t d, Rng& rng) {
    AttentionParams p;
    p.q = LinearParams::init(d, d, rng);
    p.k = LinearParams::init(d, d, rng);
    p.v = LinearParams::init(d, d, rng);
    p.out = LinearParams::init(d, d, rng);
    return p;
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, std::size_t n_heads) {
    if (x.ndim() != 3) throw std::invalid_argument("attention: need [B,T,d], got " + x.shape_str());
    const std::size_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
    if (d % n_heads != 0)
        throw std::invalid_argument("attention: d_model not divisible by head count");
    const std::size_t dk = d / n_heads;
    Tensor flat = reshape(x, {B * T, d});
    Tensor q = split_heads(reshape(linear(flat, p.q), {B, T, d}), n_heads);
    Tensor k = split_heads(reshape(linear(flat, p.k), {B, T, d}), n_heads);
    Tensor v = split_heads(reshape(linear(flat, p.v), {B, T, d}), n_heads);
    Tensor scores = scale(batched_matmul(q, transpose_last2(k)),
                          1.0 / std::sqrt(static_cast<double>(dk)));
    Tensor attn = softmax_lastdim(scores);
    Tensor ctx = merge_heads(batched_matmul(attn, v), n_heads);
    return reshape(linear(reshape(ctx, {B * T, d}), p.out), {B, T, d});
}

void TransformerConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
        throw ConfigError("transformer: d_model must be a positive multiple of n_heads");
    if (token_len * n_tokens != 256)
        throw ConfigError("transformer: token_len * n_tokens must equal 256");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("transformer: dropout out of range");
    if (grn_blocks != 0 && grn_blocks != 2)
        throw ConfigError("transformer: grn_blocks must be 0 or 2");
}

TransformerClassifier::TransformerClassifier(TransformerConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    input_proj_ = LinearParams::init(cfg_.token_len, cfg_.d_model, rng);
    pos_enc_ = positional_encoding(cfg_.n_tokens, cfg_.d_model);
    for (std::size_t i = 0; i < cfg_.grn_blocks; ++i)
        grns_.push_back(GrnParams::init(cfg_.d_model, 0, rng));
    for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
        EncoderLayerParams l;
        l.ln1_gain = Tensor::full({cfg_.d_model}, 1.0, true);
        l.ln1_bias = Tensor::zeros({cfg_.d_model}, true);
        l.ln2_gain = Tensor::full({cfg_.d_model}, 1.0, true);
        l.ln2_bias = Tensor::zeros({cfg_.d_model}, true);
        l.attn = AttentionParams::init(cfg_.d_model, rng);
        if (cfg_.grn_placement == GrnPlacement::ReplaceFfn && cfg_.grn_blocks > 0) {
            l.ffn_grn = GrnParams::init(cfg_.d_model, 0, rng);
        } else {
            l.ff1 = LinearParams::init(cfg_.d_model, cfg_.ff_hidden, rng);
            l.ff2 = LinearParams::init(cfg_.ff_hidden, cfg_.d_model, rng);
        }
        layers_.push_back(std::move(l));
    }
    head_ = LinearParams::init(cfg_.d_model, 1, rng);
}

Tensor TransformerClassifier::forward_logits(const Tensor& batch, bool training, Rng& rng) {
    if (batch.ndim() != 2 || batch.dim(1) != cfg_.token_len * cfg_.n_tokens)
        throw std::invalid_argument("transformer: expected [B,256] batch, got " +
                                    batch.shape_str());
    const std::size_t B = batch.dim(0), T = cfg_.n_tokens, d = cfg_.d_model;
    Tensor tokens = reshape(batch, {B * T, cfg_.token_len});
    Tensor x = reshape(linear(tokens, input_proj_), {B, T, d});
    if (cfg_.positional_encoding) {
        Tensor pe = Tensor::zeros({B, T, d});
        for (std::size_t b = 0; b < B; ++b)
            std::copy(pos_enc_.data().begin(), pos_enc_.data().end(),
                      pe.data().begin() + b * T * d);
        x = add(x, pe);
    }
    auto run_grn_stack = [&](Tensor h) {
        Tensor flat = reshape(h, {B * T, d});
        for (const GrnParams& g : grns_)
            flat = grn_forward(flat, nullptr, g, training, cfg_.dropout, rng);
        return reshape(flat, {B, T, d});
    };
    if (cfg_.grn_blocks > 0 && cfg_.grn_placement == GrnPlacement::AfterInput) x = run_grn_stack(x);
    for (const EncoderLayerParams& l : layers_) {
        Tensor normed = layer_norm(x, l.ln1_gain, l.ln1_bias, kLayerNormEps);
        Tensor att = multi_head_attention(normed, l.attn, cfg_.n_heads);
        x = add(x, dropout(att, cfg_.dropout, training, rng));
        Tensor normed2 = layer_norm(x, l.ln2_gain, l.ln2_bias, kLayerNormEps);
        Tensor ff;
        if (cfg_.grn_placement == GrnPlacement::ReplaceFfn && cfg_.grn_blocks > 0) {
            Tensor flat = reshape(normed2, {B * T, d});
            ff = reshape(grn_forward(flat, nullptr, l.ffn_grn, training, cfg_.dropout, rng),
                         {B, T, d});
        } else {
            Tensor flat = reshape(normed2, {B * T, d});
            ff = reshape(linear(relu(linear(flat, l.ff1)), l.ff2), {B, T, d});
        }
        x = add(x, dropout(ff, cfg_.dropout, training, rng));
    }
    if (cfg_.grn_blocks > 0 && cfg_.grn_placement == GrnPlacement::AfterEncoder)
        x = run_grn_stack(x);
    Tensor pooled = mean_axis1(x);
    return reshape(linear(pooled, head_), {B});
}

namespace {

void push_linear(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                 const LinearParams& p) {
    out.emplace_back(prefix + ".W", p.W);
    out.emplace_back(prefix + ".b", p.b);
}

void push_grn(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
              const GrnParams& g) {
    push_linear(out, prefix + ".fc1", g.fc1);
    push_linear(out, prefix + ".fc2", g.fc2);
    if (g.Wc.defined()) out.emplace_back(prefix + ".Wc", g.Wc);
    push_linear(out, prefix + ".gate", g.gate);
    push_linear(out, prefix + ".value", g.value);
    out.emplace_back(prefix + ".ln_gain", g.ln_gain);
    out.emplace_back(prefix + ".ln_bias", g.ln_bias);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> TransformerClassifier::named_params() {
    std::vector<std::pair<std::string, Tensor>> out;
    push_linear(out, "input_proj", input_proj_);
    for (std::size_t i = 0; i < grns_.size(); ++i) push_grn(out, "grn" + std::to_string(i), grns_[i]);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string p = "layer" + std::to_string(i);
        EncoderLayerParams& l = layers_[i];
        out.emplace_back(p + ".ln1_gain", l.ln1_gain);
        out.emplace_back(p + ".ln1_bias", l.ln1_bias);
        push_linear(out, p + ".attn.q", l.attn.q);
        push_linear(out, p + ".attn.k", l.attn.k);
        push_linear(out, p + ".attn.v", l.attn.v);
        push_linear(out, p + ".attn.out", l.attn.out);
        out.emplace_back(p + ".ln2_gain", l.ln2_gain);
        out.emplace_back(p + ".ln2_bias", l.ln2_bias);
        if (cfg_.grn_placement == GrnPlacement::ReplaceFfn && cfg_.grn_blocks > 0)
            push_grn(out, p + ".ffn_grn", l.ffn_grn);
        else {
            push_linear(out, p + ".ff1", l.ff1);
            push_linear(out, p + ".ff2", l.ff2);
        }
    }
    push_linear(out, "head", head_);
    return out;
}

void MlpConfig::validate() const {
    if (hidden == 0 || n_hidden == 0) throw ConfigError("mlp: zero-size layer");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("mlp: dropout out of range");
    if (grn_blocks != 0 && grn_blocks != 2) throw ConfigError("mlp: grn_blocks must be 0 or 2");
}

MlpClassifier::MlpClassifier(MlpConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    std::size_t in = 256;
    if (cfg_.grn_blocks > 0) {
        adapter_ = LinearParams::init(256, cfg_.grn_width, rng);
        for (std::size_t i = 0; i < cfg_.grn_blocks; ++i)
            grns_.push_back(GrnParams::init(cfg_.grn_width, 0, rng));
        in = cfg_.grn_width;
    }
    for (std::size_t i = 0; i < cfg_.n_hidden; ++i) {
        hidden_.push_back(LinearParams::init(in, cfg_.hidden, rng));
        in = cfg_.hidden;
    }
    head_ = LinearParams::init(in, 1, rng);
}

Tensor MlpClassifier::forward_logits(const Tensor& batch, bool training, Rng& rng) {
    if (batch.ndim() != 2 || batch.dim(1) != 256)
        throw std::invalid_argument("mlp: expected [B,256] batch, got " + batch.shape_str());
    Tensor x = batch;
    if (cfg_.grn_blocks > 0) {
        x = linear(x, adapter_);
        for (const GrnParams& g : grns_) x = grn_forward(x, nullptr, g, training, 0.25, rng);
    }
    for (const LinearParams& h : hidden_) {
        x = relu(linear(x, h));
        x = dropout(x, cfg_.dropout, training, rng);
    }
    return reshape(linear(x, head_), {batch.dim(0)});
}

std::vector<std::pair<std::string, Tensor>> MlpClassifier::named_params() {
    std::vector<std::pair<std::string, Tensor>> out;
    if (cfg_.grn_blocks > 0) {
        push_linear(out, "adapter", adapter_);
        for (std::size_t i = 0; i < grns_.size(); ++i)
            push_grn(out, "grn" + std::to_string(i), grns_[i]);
    }
    for (std::size_t i = 0; i < hidden_.size(); ++i)
        push_linear(out, "hidden" + std::to_string(i), hidden_[i]);
    push_linear(out, "head", head_);
    return out;
}

KnnPrediction knn_classify(const std::vector<std::vector<double>>& train_x,
                           const std::vector<int>& train_y, const std::vector<double>& query,
                           const KnnConfig& cfg) {
    if (train_x.empty()) throw DataError("knn: empty training set");
    if (train_y.size() != train_x.size()) throw DataError("knn: label count mismatch");
    for (const auto& row : train_x)
        if (row.size() != query.size()) throw DataError("knn: feature width mismatch");
    if (cfg.k < 1) throw ConfigError("knn: k must be >= 1");
    const std::size_t k = std::min(cfg.k, train_x.size());
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(train_x.size());
    for (std::size_t i = 0; i < train_x.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double diff = train_x[i][j] - query[j];
            d2 += diff * diff;
        }
        dist.emplace_back(d2, i);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    std::size_t votes1 = 0;
    for (std::size_t i = 0; i < k; ++i) votes1 += train_y[dist[i].second] == 1 ? 1 : 0;
    const std::size_t votes0 = k - votes1;
    KnnPrediction pred;
    pred.label = votes1 >= votes0 ? 1 : 0;  // tie -> artifact
    pred.vote_fraction =
        static_cast<double>(pred.label == 1 ? votes1 : votes0) / static_cast<double>(k);
    return pred;
}

}  // namespace ppg
