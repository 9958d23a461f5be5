#include "ppg/tensor.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ppg/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace ppg {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void blas_init_once() {
    static const bool done = [] {
        openblas_set_num_threads(1);  // determinism; cells parallelize above BLAS
        return true;
    }();
    (void)done;
}

// C[m,n] += or = A[m,k] * B[k,n], row-major
void dgemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
           double* c, std::size_t ldc) {
    blas_init_once();
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
                c, static_cast<int>(ldc));
}

bool tracing(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw std::invalid_argument("tensor: value count does not match shape");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

double Tensor::value() const {
    if (numel() != 1) throw std::invalid_argument("value(): tensor is not scalar");
    return impl_->data[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < impl_->shape.size(); ++i)
        os << (i ? "," : "") << impl_->shape[i];
    os << "]";
    return os.str();
}

// ---- Tape ----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = prev_; }
Tape* Tape::active() { return g_active_tape; }
void Tape::record(std::function<void()> backward_op) { ops_.push_back(std::move(backward_op)); }

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    Tape* tape = Tape::active();
    if (tape == nullptr) throw std::invalid_argument("backward: no active tape");
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0;
    for (auto it = tape->ops_.rbegin(); it != tape->ops_.rend(); ++it) (*it)();
}

// ---- op helpers ----------------------------------------------------------

namespace {

Tensor make_result(std::vector<std::size_t> shape, std::vector<double> values, bool rg) {
    return Tensor::from(std::move(shape), std::move(values), rg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " x " +
                                    b.shape_str());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    dgemm(false, false, m, n, k, a.data().data(), k, b.data().data(), n, 0.0, out.data(), n);
    bool rg = tracing({&a, &b});
    Tensor c = make_result({m, n}, std::move(out), rg);
    if (rg) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::active()->record([ai, bi, ci, m, n, k] {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                // dA += dC * B^T
                dgemm(false, true, m, k, n, ci->grad.data(), n, bi->data.data(), n, 1.0,
                      ai->grad.data(), k);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                // dB += A^T * dC
                dgemm(true, false, k, n, m, ai->data.data(), k, ci->grad.data(), n, 1.0,
                      bi->grad.data(), n);
            }
        });
    }
    return c;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw std::invalid_argument("batched_matmul: incompatible shapes " + a.shape_str() +
                                    " x " + b.shape_str());
    const std::size_t N = a.dim(0), t = a.dim(1), k = a.dim(2), m = b.dim(2);
    std::vector<double> out(N * t * m, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        dgemm(false, false, t, m, k, a.data().data() + i * t * k, k, b.data().data() + i * k * m,
              m, 0.0, out.data() + i * t * m, m);
    bool rg = tracing({&a, &b});
    Tensor c = make_result({N, t, m}, std::move(out), rg);
    if (rg) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::active()->record([ai, bi, ci, N, t, k, m] {
            if (ci->grad.empty()) return;
            for (std::size_t i = 0; i < N; ++i) {
                const double* dc = ci->grad.data() + i * t * m;
                if (ai->requires_grad) {
                    ai->ensure_grad();
                    dgemm(false, true, t, k, m, dc, m, bi->data.data() + i * k * m, m, 1.0,
                          ai->grad.data() + i * t * k, k);
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    dgemm(true, false, k, m, t, ai->data.data() + i * t * k, k, dc, m, 1.0,
                          bi->grad.data() + i * k * m, m);
                }
            }
        });
    }
    return c;
}

Tensor transpose_last2(const Tensor& x) {
    std::size_t N = 1, t, k;
    if (x.ndim() == 3) {
        N = x.dim(0);
        t = x.dim(1);
        k = x.dim(2);
    } else if (x.ndim() == 2) {
        t = x.dim(0);
        k = x.dim(1);
    } else {
        throw std::invalid_argument("transpose_last2: need 2-d or 3-d, got " + x.shape_str());
    }
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < k; ++c)
                out[i * t * k + c * t + r] = x.data()[i * t * k + r * k + c];
    std::vector<std::size_t> shape =
        x.ndim() == 3 ? std::vector<std::size_t>{N, k, t} : std::vector<std::size_t>{k, t};
    bool rg = tracing({&x});
    Tensor y = make_result(std::move(shape), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, N, t, k] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t r = 0; r < t; ++r)
                    for (std::size_t c = 0; c < k; ++c)
                        xi->grad[i * t * k + r * k + c] += yi->grad[i * t * k + c * t + r];
        });
    }
    return y;
}

namespace {

// shared backward for elementwise binary ops with constant local derivatives
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          const std::function<double(double, double)>& f,
                          const std::function<void(std::shared_ptr<TensorImpl>,
                                                   std::shared_ptr<TensorImpl>,
                                                   std::shared_ptr<TensorImpl>)>& bwd) {
    check_same_shape(a, b, name);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i], b.data()[i]);
    bool rg = tracing({&a, &b});
    Tensor c = Tensor::from(a.shape(), std::move(out), rg);
    if (rg) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        Tape::active()->record([ai, bi, ci, bwd] { bwd(ai, bi, ci); });
    }
    return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](auto ai, auto bi, auto ci) {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < ci->grad.size(); ++i) ai->grad[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < ci->grad.size(); ++i) bi->grad[i] += ci->grad[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](auto ai, auto bi, auto ci) {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < ci->grad.size(); ++i) ai->grad[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < ci->grad.size(); ++i) bi->grad[i] -= ci->grad[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](auto ai, auto bi, auto ci) {
            if (ci->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < ci->grad.size(); ++i)
                    ai->grad[i] += ci->grad[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < ci->grad.size(); ++i)
                    bi->grad[i] += ci->grad[i] * ai->data[i];
            }
        });
}

Tensor scale(const Tensor& x, double s) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * s;
    bool rg = tracing({&x});
    Tensor y = Tensor::from(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, s] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i] * s;
        });
    }
    return y;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.ndim() != 1 || x.ndim() < 1 || x.shape().back() != bias.dim(0))
        throw std::invalid_argument("add_bias: shape mismatch " + x.shape_str() + " + " +
                                    bias.shape_str());
    const std::size_t d = bias.dim(0), rows = x.numel() / d;
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.data()[r * d + j] + bias.data()[j];
    bool rg = tracing({&x, &bias});
    Tensor y = Tensor::from(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), bi = bias.impl(), yi = y.impl();
        Tape::active()->record([xi, bi, yi, rows, d] {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) bi->grad[j] += yi->grad[r * d + j];
            }
        });
    }
    return y;
}

namespace {

Tensor unary_elementwise(const Tensor& x, const std::function<double(double)>& f,
                         const std::function<double(double, double)>& dfdx_from_x_y) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x.data()[i]);
    bool rg = tracing({&x});
    Tensor y = Tensor::from(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, dfdx_from_x_y] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i)
                xi->grad[i] += yi->grad[i] * dfdx_from_x_y(xi->data[i], yi->data[i]);
        });
    }
    return y;
}

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
        [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        x,
        [](double v) {
            // stable in both tails
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.ndim() < 1) throw std::invalid_argument("layer_norm: scalar input");
    const std::size_t d = x.shape().back();
    if (d < 2) throw std::invalid_argument("layer_norm: degenerate last axis of size " +
                                           std::to_string(d));
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    if (gain.numel() != d || bias.numel() != d)
        throw std::invalid_argument("layer_norm: gain/bias size mismatch");
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mu) * is;
            (*xhat)[r * d + j] = xh;
            out[r * d + j] = gain.data()[j] * xh + bias.data()[j];
        }
    }
    bool rg = tracing({&x, &gain, &bias});
    Tensor y = Tensor::from(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), yi = y.impl();
        Tape::active()->record([xi, gi, bi, yi, xhat, inv_std, rows, d] {
            if (yi->grad.empty()) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* dy = yi->grad.data() + r * d;
                const double* xh = xhat->data() + r * d;
                if (gi->requires_grad) {
                    gi->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) gi->grad[j] += dy[j] * xh[j];
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) bi->grad[j] += dy[j];
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = dy[j] * gi->data[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    const double is = (*inv_std)[r];
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = dy[j] * gi->data[j];
                        xi->grad[r * d + j] += is * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        });
    }
    return y;
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data().data() + r * d;
        double mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            out[r * d + j] = std::exp(row[j] - mx);
            sum += out[r * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= sum;
    }
    bool rg = tracing({&x});
    Tensor y = Tensor::from(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, rows, d] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* dy = yi->grad.data() + r * d;
                const double* yv = yi->data.data() + r * d;
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += dy[j] * yv[j];
                for (std::size_t j = 0; j < d; ++j)
                    xi->grad[r * d + j] += yv[j] * (dy[j] - dot);
            }
        });
    }
    return y;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = rng.uniform() < p ? 0.0 : keep_scale;
        (*mask)[i] = m;
        out[i] = x.data()[i] * m;
    }
    bool rg = tracing({&x});
    Tensor y = Tensor::from(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, mask] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i)
                xi->grad[i] += yi->grad[i] * (*mask)[i];
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: element count mismatch " + x.shape_str());
    bool rg = tracing({&x});
    Tensor y = Tensor::from(std::move(shape), x.data(), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
        });
    }
    return y;
}

Tensor split_heads(const Tensor& x, std::size_t n_heads) {
    if (x.ndim() != 3 || x.dim(2) % n_heads != 0)
        throw std::invalid_argument("split_heads: bad shape " + x.shape_str());
    const std::size_t B = x.dim(0), T = x.dim(1), d = x.dim(2), dk = d / n_heads;
    std::vector<double> out(x.numel());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t h = 0; h < n_heads; ++h)
                for (std::size_t j = 0; j < dk; ++j)
                    out[((b * n_heads + h) * T + t) * dk + j] =
                        x.data()[(b * T + t) * d + h * dk + j];
    bool rg = tracing({&x});
    Tensor y = make_result({B * n_heads, T, dk}, std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, B, T, d, dk, n_heads] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t h = 0; h < n_heads; ++h)
                        for (std::size_t j = 0; j < dk; ++j)
                            xi->grad[(b * T + t) * d + h * dk + j] +=
                                yi->grad[((b * n_heads + h) * T + t) * dk + j];
        });
    }
    return y;
}

Tensor merge_heads(const Tensor& x, std::size_t n_heads) {
    if (x.ndim() != 3 || x.dim(0) % n_heads != 0)
        throw std::invalid_argument("merge_heads: bad shape " + x.shape_str());
    const std::size_t B = x.dim(0) / n_heads, T = x.dim(1), dk = x.dim(2), d = dk * n_heads;
    std::vector<double> out(x.numel());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t h = 0; h < n_heads; ++h)
                for (std::size_t j = 0; j < dk; ++j)
                    out[(b * T + t) * d + h * dk + j] =
                        x.data()[((b * n_heads + h) * T + t) * dk + j];
    bool rg = tracing({&x});
    Tensor y = make_result({B, T, d}, std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, B, T, d, dk, n_heads] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t h = 0; h < n_heads; ++h)
                        for (std::size_t j = 0; j < dk; ++j)
                            xi->grad[((b * n_heads + h) * T + t) * dk + j] +=
                                yi->grad[(b * T + t) * d + h * dk + j];
        });
    }
    return y;
}

Tensor mean_axis1(const Tensor& x) {
    if (x.ndim() != 3) throw std::invalid_argument("mean_axis1: need 3-d, got " + x.shape_str());
    const std::size_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
    std::vector<double> out(B * d, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < d; ++j) out[b * d + j] += x.data()[(b * T + t) * d + j];
    for (double& v : out) v /= static_cast<double>(T);
    bool rg = tracing({&x});
    Tensor y = make_result({B, d}, std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi, B, T, d] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            const double inv = 1.0 / static_cast<double>(T);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t j = 0; j < d; ++j)
                        xi->grad[(b * T + t) * d + j] += yi->grad[b * d + j] * inv;
        });
    }
    return y;
}

Tensor sum_all(const Tensor& x) {
    double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
    bool rg = tracing({&x});
    Tensor y = Tensor::from({1}, {s}, rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        Tape::active()->record([xi, yi] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (double& g : xi->grad) g += yi->grad[0];
        });
    }
    return y;
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets) {
    if (logits.numel() != targets.size())
        throw std::invalid_argument("bce_with_logits: logit/target count mismatch");
    const std::size_t n = targets.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits.data()[i];
        // softplus(z) - y*z, stable form
        loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - targets[i] * z;
    }
    loss /= static_cast<double>(n);
    bool rg = tracing({&logits});
    Tensor y = Tensor::from({1}, {loss}, rg);
    if (rg) {
        auto li = logits.impl(), yi = y.impl();
        auto tg = std::make_shared<std::vector<double>>(targets);
        Tape::active()->record([li, yi, tg, n] {
            if (yi->grad.empty() || !li->requires_grad) return;
            li->ensure_grad();
            const double g = yi->grad[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double z = li->data[i];
                const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                          : std::exp(z) / (1.0 + std::exp(z));
                li->grad[i] += g * (s - (*tg)[i]);
            }
        });
    }
    return y;
}

Tensor glorot_init(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
    if (fan_out == 0 || fan_in == 0) throw ConfigError("glorot_init: zero fan");
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_out, fan_in}, true);
    for (double& v : t.data()) v = rng.normal() * std;
    return t;
}

Tensor positional_encoding(std::size_t n_tokens, std::size_t d_model) {
    Tensor pe = Tensor::zeros({n_tokens, d_model});
    for (std::size_t t = 0; t < n_tokens; ++t)
        for (std::size_t i = 0; i < d_model; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
            const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
            pe.data()[t * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

}  // namespace ppg
