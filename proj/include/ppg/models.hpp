#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppg/tensor.hpp"

namespace ppg {

constexpr double kLayerNormEps = 1e-5;

struct LinearParams {
    Tensor W;  // [in, out]
    Tensor b;  // [out]
    static LinearParams init(std::size_t in, std::size_t out, Rng& rng);
};

// y = x W + b, x is [rows, in]
Tensor linear(const Tensor& x, const LinearParams& p);

// Gated residual block: LayerNorm(a + GLU(W1*ELU(W2 a + W3 c + b2) + b1)),
// dropout applied to the pre-gate activation while training.
struct GrnParams {
    std::size_t d = 0;
    LinearParams fc1;        // W1, b1 (d -> d)
    LinearParams fc2;        // W2, b2 (d -> d)
    Tensor Wc;               // optional context projection [d_ctx, d]; undefined if unused
    LinearParams gate;       // W4, b4
    LinearParams value;      // W5, b5
    Tensor ln_gain, ln_bias;  // [d]
    static GrnParams init(std::size_t d, std::size_t d_ctx, Rng& rng);  // d_ctx=0: no context
};

Tensor glu(const Tensor& gamma, const GrnParams& p);
Tensor grn_forward(const Tensor& a, const Tensor* context, const GrnParams& p, bool training,
                   double dropout_p, Rng& rng);

struct AttentionParams {
    LinearParams q, k, v, out;
    static AttentionParams init(std::size_t d, Rng& rng);
};

// x: [B, T, d]; standard scaled dot-product self-attention.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, std::size_t n_heads);

enum class GrnPlacement {
    AfterInput,     // token-wise GRN stack between input projection and encoder
    ReplaceFfn,     // GRN in place of each encoder feed-forward
    AfterEncoder,   // token-wise GRN stack between encoder and pooling
};

struct TransformerConfig {
    std::size_t n_layers = 4;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t ff_hidden = 128;
    double dropout = 0.25;
    std::size_t token_len = 16;
    std::size_t n_tokens = 16;
    bool positional_encoding = true;
    std::size_t grn_blocks = 0;  // 0 = plain Transformer, 2 = GRN-Transformer
    GrnPlacement grn_placement = GrnPlacement::AfterInput;

    void validate() const;
};

struct EncoderLayerParams {
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    AttentionParams attn;
    LinearParams ff1, ff2;   // unused when the GRN replaces the feed-forward
    GrnParams ffn_grn;       // used only with GrnPlacement::ReplaceFfn
};

class Classifier {
  public:
    virtual ~Classifier() = default;
    // batch: [B, 256]; returns logits [B]
    virtual Tensor forward_logits(const Tensor& batch, bool training, Rng& rng) = 0;
    virtual std::vector<std::pair<std::string, Tensor>> named_params() = 0;

    std::vector<Tensor> params() {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }
};

class TransformerClassifier : public Classifier {
  public:
    TransformerClassifier(TransformerConfig cfg, Rng& rng);
    Tensor forward_logits(const Tensor& batch, bool training, Rng& rng) override;
    std::vector<std::pair<std::string, Tensor>> named_params() override;
    const TransformerConfig& config() const { return cfg_; }

  private:
    TransformerConfig cfg_;
    LinearParams input_proj_;
    Tensor pos_enc_;
    std::vector<GrnParams> grns_;
    std::vector<EncoderLayerParams> layers_;
    LinearParams head_;
};

struct MlpConfig {
    std::size_t hidden = 500;
    std::size_t n_hidden = 3;
    double dropout = 0.3;
    std::size_t grn_blocks = 0;   // 2 for GRN-MLP
    std::size_t grn_width = 128;

    void validate() const;
};

class MlpClassifier : public Classifier {
  public:
    MlpClassifier(MlpConfig cfg, Rng& rng);
    Tensor forward_logits(const Tensor& batch, bool training, Rng& rng) override;
    std::vector<std::pair<std::string, Tensor>> named_params() override;
    const MlpConfig& config() const { return cfg_; }

  private:
    MlpConfig cfg_;
    LinearParams adapter_;          // 256 -> grn_width, GRN-MLP only
    std::vector<GrnParams> grns_;
    std::vector<LinearParams> hidden_;
    LinearParams head_;
};

struct KnnConfig {
    std::size_t k = 5;
};

struct KnnPrediction {
    int label = 0;
    double vote_fraction = 0.0;  // fraction of the k votes for the winning label
};

// Majority vote over the k nearest training rows (Euclidean); ties go to the
// artifact class.
KnnPrediction knn_classify(const std::vector<std::vector<double>>& train_x,
                           const std::vector<int>& train_y, const std::vector<double>& query,
                           const KnnConfig& cfg);

}  // namespace ppg
