#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ppg/errors.hpp"
#include "ppg/models.hpp"
#include "ppg/tensor.hpp"
#include "testutil.hpp"

using namespace ppg;

namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("glu matches a scalar-loop oracle") {
    Rng rng(1);
    const std::size_t d = 6, rows = 4;
    GrnParams p = GrnParams::init(d, 0, rng);
    Tensor x = random_tensor({rows, d}, rng);
    Tensor y = glu(x, p);
    REQUIRE(y.shape() == std::vector<std::size_t>{rows, d});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            double g = p.gate.b.data()[j], v = p.value.b.data()[j];
            for (std::size_t i = 0; i < d; ++i) {
                g += x.data()[r * d + i] * p.gate.W.data()[i * d + j];
                v += x.data()[r * d + i] * p.value.W.data()[i * d + j];
            }
            CHECK(std::abs(y.data()[r * d + j] - sigmoid_ref(g) * v) < 1e-12);
        }
    }
}

TEST_CASE("glu gate saturations") {
    Rng rng(2);
    const std::size_t d = 4;
    GrnParams p = GrnParams::init(d, 0, rng);
    Tensor x = random_tensor({3, d}, rng);

    // hugely negative gate bias closes the gate completely
    std::fill(p.gate.W.data().begin(), p.gate.W.data().end(), 0.0);
    std::fill(p.gate.b.data().begin(), p.gate.b.data().end(), -1e6);
    Tensor closed = glu(x, p);
    for (double v : closed.data()) CHECK(std::abs(v) < 1e-12);

    // zero gate pre-activation passes exactly half the value branch
    std::fill(p.gate.b.data().begin(), p.gate.b.data().end(), 0.0);
    Tensor half = glu(x, p);
    Tensor value = linear(x, p.value);
    for (std::size_t i = 0; i < half.numel(); ++i)
        CHECK(half.data()[i] == doctest::Approx(0.5 * value.data()[i]).epsilon(1e-12));
}

TEST_CASE("grn with a closed gate reduces to LayerNorm of the input") {
    Rng rng(3);
    const std::size_t d = 8;
    GrnParams p = GrnParams::init(d, 0, rng);
    std::fill(p.gate.W.data().begin(), p.gate.W.data().end(), 0.0);
    std::fill(p.gate.b.data().begin(), p.gate.b.data().end(), -1e6);
    Tensor a = random_tensor({5, d}, rng);
    Tensor out = grn_forward(a, nullptr, p, false, 0.0, rng);
    Tensor ln = layer_norm(a, p.ln_gain, p.ln_bias, kLayerNormEps);
    CHECK(ppgtest::max_abs_diff(out.data(), ln.data()) < 1e-6);
}

TEST_CASE("grn treats a missing context like a zero context") {
    Rng rng(4);
    const std::size_t d = 8;
    GrnParams p = GrnParams::init(d, d, rng);
    Tensor a = random_tensor({3, d}, rng);
    Tensor zero_ctx = Tensor::zeros({3, d});
    Tensor with_zero = grn_forward(a, &zero_ctx, p, false, 0.0, rng);
    Tensor without = grn_forward(a, nullptr, p, false, 0.0, rng);
    CHECK(ppgtest::max_abs_diff(with_zero.data(), without.data()) < 1e-12);
}

TEST_CASE("grn context changes the output when nonzero") {
    Rng rng(5);
    const std::size_t d = 8;
    GrnParams p = GrnParams::init(d, d, rng);
    Tensor a = random_tensor({3, d}, rng);
    Tensor ctx = random_tensor({3, d}, rng);
    Tensor with_ctx = grn_forward(a, &ctx, p, false, 0.0, rng);
    Tensor without = grn_forward(a, nullptr, p, false, 0.0, rng);
    CHECK(ppgtest::max_abs_diff(with_ctx.data(), without.data()) > 1e-6);
}

TEST_CASE("attention with one token is the projected value") {
    Rng rng(6);
    const std::size_t d = 8;
    AttentionParams p = AttentionParams::init(d, rng);
    Tensor x = random_tensor({2, 1, d}, rng);
    Tensor y = multi_head_attention(x, p, 2);
    // softmax over a single key is 1, so y = out(v(x))
    Tensor x2 = reshape(x, {2, d});
    Tensor expected = linear(linear(x2, p.v), p.out);
    CHECK(ppgtest::max_abs_diff(y.data(), expected.data()) < 1e-10);
}

TEST_CASE("attention is permutation-equivariant over tokens") {
    Rng rng(7);
    const std::size_t d = 8, T = 5;
    AttentionParams p = AttentionParams::init(d, rng);
    Tensor x = random_tensor({1, T, d}, rng);
    Tensor y = multi_head_attention(x, p, 4);

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> px(T * d);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j) px[t * d + j] = x.data()[perm[t] * d + j];
    Tensor y2 = multi_head_attention(Tensor::from({1, T, d}, px), p, 4);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(std::abs(y2.data()[t * d + j] - y.data()[perm[t] * d + j]) < 1e-10);
}

TEST_CASE("attention matches a scalar-loop oracle") {
    Rng rng(8);
    const std::size_t B = 1, T = 3, d = 4, H = 2, dk = d / H;
    AttentionParams p = AttentionParams::init(d, rng);
    Tensor x = random_tensor({B, T, d}, rng);
    Tensor y = multi_head_attention(x, p, H);

    auto project = [&](const LinearParams& lp) {
        std::vector<std::vector<double>> out(T, std::vector<double>(d));
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < d; ++j) {
                double s = lp.b.data()[j];
                for (std::size_t i = 0; i < d; ++i)
                    s += x.data()[t * d + i] * lp.W.data()[i * d + j];
                out[t][j] = s;
            }
        return out;
    };
    const auto Q = project(p.q), K = project(p.k), V = project(p.v);

    std::vector<std::vector<double>> concat(T, std::vector<double>(d));
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> scores(T);
            double mx = -1e300;
            for (std::size_t u = 0; u < T; ++u) {
                double s = 0.0;
                for (std::size_t j = 0; j < dk; ++j)
                    s += Q[t][h * dk + j] * K[u][h * dk + j];
                scores[u] = s / std::sqrt(static_cast<double>(dk));
                mx = std::max(mx, scores[u]);
            }
            double z = 0.0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                z += s;
            }
            for (std::size_t j = 0; j < dk; ++j) {
                double acc = 0.0;
                for (std::size_t u = 0; u < T; ++u) acc += scores[u] / z * V[u][h * dk + j];
                concat[t][h * dk + j] = acc;
            }
        }
    }
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j) {
            double s = p.out.b.data()[j];
            for (std::size_t i = 0; i < d; ++i) s += concat[t][i] * p.out.W.data()[i * d + j];
            CHECK(std::abs(y.data()[t * d + j] - s) < 1e-10);
        }
}

TEST_CASE("transformer forward: shapes, determinism, dropout effect") {
    TransformerConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ff_hidden = 16;
    Rng init_rng(9);
    TransformerClassifier model(cfg, init_rng);
    Rng data_rng(10);
    Tensor batch = random_tensor({3, 256}, data_rng);

    Rng r1(1), r2(1), r3(1);
    Tensor a = model.forward_logits(batch, false, r1);
    Tensor b = model.forward_logits(batch, false, r2);
    REQUIRE(a.shape() == std::vector<std::size_t>{3});
    CHECK(ppgtest::max_abs_diff(a.data(), b.data()) == 0.0);
    for (double v : a.data()) CHECK(std::isfinite(v));

    Tensor c = model.forward_logits(batch, true, r3);
    CHECK(ppgtest::max_abs_diff(a.data(), c.data()) > 0.0);
}

TEST_CASE("grn_blocks toggles the GRN stack") {
    TransformerConfig plain;
    plain.n_layers = 1;
    plain.d_model = 16;
    plain.n_heads = 2;
    plain.ff_hidden = 16;
    TransformerConfig gated = plain;
    gated.grn_blocks = 2;
    Rng r1(11), r2(11);
    TransformerClassifier a(plain, r1), b(gated, r2);
    std::size_t na = 0, nb = 0;
    bool has_grn_name = false;
    for (auto& [name, t] : a.named_params()) na += t.numel();
    for (auto& [name, t] : b.named_params()) {
        nb += t.numel();
        if (name.find("grn") != std::string::npos) has_grn_name = true;
    }
    CHECK(nb > na);
    CHECK(has_grn_name);
}

TEST_CASE("transformer config validation") {
    TransformerConfig cfg;
    cfg.token_len = 10;  // 10 * 16 != 256
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.d_model = 10;  // not divisible by heads... 10 % 4 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.dropout = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("shrunken transformer passes a finite-difference check") {
    TransformerConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.ff_hidden = 8;
    cfg.grn_blocks = 2;
    cfg.dropout = 0.0;
    Rng init_rng(12);
    TransformerClassifier model(cfg, init_rng);
    Rng data_rng(13);
    Tensor batch = random_tensor({2, 256}, data_rng);
    const std::vector<double> targets = {1.0, 0.0};

    auto loss_value = [&]() {
        Rng fwd(0);
        Tensor logits = model.forward_logits(batch, false, fwd);
        return bce_with_logits(logits, targets).value();
    };
    auto run_backward = [&]() {
        Tape tape;
        Rng fwd(0);
        Tensor logits = model.forward_logits(batch, false, fwd);
        backward(bce_with_logits(logits, targets));
    };
    auto result = ppgtest::finite_diff_check(model.params(), loss_value, run_backward, 1e-5);
    CHECK(result.checked > 500);
    CHECK(result.max_rel_err < 1e-3);
}

TEST_CASE("grn placements all run and differ") {
    Rng data_rng(14);
    Tensor batch = random_tensor({2, 256}, data_rng);
    std::vector<std::vector<double>> outs;
    for (GrnPlacement pl : {GrnPlacement::AfterInput, GrnPlacement::ReplaceFfn,
                            GrnPlacement::AfterEncoder}) {
        TransformerConfig cfg;
        cfg.n_layers = 1;
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.ff_hidden = 16;
        cfg.grn_blocks = 2;
        cfg.grn_placement = pl;
        Rng init_rng(15);
        TransformerClassifier model(cfg, init_rng);
        Rng fwd(0);
        outs.push_back(model.forward_logits(batch, false, fwd).data());
        for (double v : outs.back()) CHECK(std::isfinite(v));
    }
    CHECK(outs[0] != outs[1]);
    CHECK(outs[0] != outs[2]);
}

TEST_CASE("mlp with zeroed head predicts probability one half") {
    MlpConfig cfg;
    cfg.hidden = 32;
    Rng init_rng(16);
    MlpClassifier model(cfg, init_rng);
    for (auto& [name, t] : model.named_params())
        if (name.find("head") != std::string::npos)
            std::fill(t.data().begin(), t.data().end(), 0.0);
    Rng data_rng(17), fwd(0);
    Tensor batch = random_tensor({4, 256}, data_rng);
    Tensor logits = model.forward_logits(batch, false, fwd);
    for (double v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("grn-mlp has the adapter and grn blocks") {
    MlpConfig cfg;
    cfg.hidden = 32;
    cfg.grn_blocks = 2;
    cfg.grn_width = 16;
    Rng init_rng(18);
    MlpClassifier model(cfg, init_rng);
    bool has_grn = false, has_adapter = false;
    for (auto& [name, t] : model.named_params()) {
        if (name.find("grn") != std::string::npos) has_grn = true;
        if (name.find("adapter") != std::string::npos) has_adapter = true;
    }
    CHECK(has_grn);
    CHECK(has_adapter);
    Rng data_rng(19), fwd(0);
    Tensor batch = random_tensor({2, 256}, data_rng);
    Tensor logits = model.forward_logits(batch, false, fwd);
    REQUIRE(logits.shape() == std::vector<std::size_t>{2});
    for (double v : logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("knn matches a hand-computed oracle") {
    const std::vector<std::vector<double>> train_x = {
        {0.0, 0.0}, {0.1, 0.0}, {0.0, 0.1}, {1.0, 1.0}, {0.9, 1.0}, {1.0, 0.9}};
    const std::vector<int> train_y = {0, 0, 0, 1, 1, 1};
    KnnConfig cfg;
    cfg.k = 3;
    auto near_zero = knn_classify(train_x, train_y, {0.05, 0.05}, cfg);
    CHECK(near_zero.label == 0);
    CHECK(near_zero.vote_fraction == doctest::Approx(1.0));
    auto near_one = knn_classify(train_x, train_y, {0.95, 0.95}, cfg);
    CHECK(near_one.label == 1);

    auto mixed = knn_classify(train_x, train_y, {0.5, 0.5}, cfg);
    CHECK((mixed.label == 0 || mixed.label == 1));
}

TEST_CASE("knn ties go to the artifact class") {
    const std::vector<std::vector<double>> train_x = {{0.0}, {1.0}};
    const std::vector<int> train_y = {0, 1};
    KnnConfig cfg;
    cfg.k = 2;
    auto p = knn_classify(train_x, train_y, {0.5}, cfg);
    CHECK(p.label == 1);
    CHECK(p.vote_fraction == doctest::Approx(0.5));
}

TEST_CASE("knn rejects bad inputs") {
    KnnConfig cfg;
    cfg.k = 3;
    CHECK_THROWS_AS(knn_classify({}, {}, {0.0}, cfg), DataError);
    CHECK_THROWS_AS(knn_classify({{0.0}}, {0}, {0.0, 1.0}, cfg), DataError);
}
