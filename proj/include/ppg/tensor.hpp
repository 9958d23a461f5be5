#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ppg/rng.hpp"

namespace ppg {

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same length as data
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// Dense n-d f64 tensor participating in a reverse-mode tape. Value handle:
// copies share the underlying buffer; ops always allocate fresh outputs.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& grad() { return impl_->grad; }
    const std::vector<double>& grad() const { return impl_->grad; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    void ensure_grad() { impl_->ensure_grad(); }
    void zero_grad() {
        impl_->ensure_grad();
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    double value() const;  // scalar tensors only

    std::string shape_str() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

  private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Dynamic gradient tape, rebuilt per forward pass. One tape per thread at a
// time; nested tapes restore the previous one on destruction.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();
    void record(std::function<void()> backward_op);
    std::size_t size() const { return ops_.size(); }

  private:
    friend void backward(const Tensor& loss);
    std::vector<std::function<void()>> ops_;
    Tape* prev_;
};

// Runs the tape backward from a scalar loss; grads accumulate into every
// requires_grad ancestor. Repeated calls without zero_grad accumulate.
void backward(const Tensor& loss);

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);                // [m,k]x[k,n]
Tensor batched_matmul(const Tensor& a, const Tensor& b);        // [N,t,k]x[N,k,m]
Tensor transpose_last2(const Tensor& x);                        // [N,t,k]->[N,k,t] (or 2-d)
Tensor add(const Tensor& a, const Tensor& b);                   // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);                   // Hadamard
Tensor scale(const Tensor& x, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);           // [..,d] + [d]
Tensor relu(const Tensor& x);
Tensor elu(const Tensor& x);                                    // alpha = 1
Tensor sigmoid(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor softmax_lastdim(const Tensor& x);
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor split_heads(const Tensor& x, std::size_t n_heads);       // [B,T,d]->[B*H,T,d/H]
Tensor merge_heads(const Tensor& x, std::size_t n_heads);       // [B*H,T,dk]->[B,T,dk*H]
Tensor mean_axis1(const Tensor& x);                             // [B,T,d]->[B,d]
Tensor sum_all(const Tensor& x);                                // scalar
Tensor mean_all(const Tensor& x);                               // scalar

// Mean binary cross-entropy over logits; targets are 0/1 and not
// differentiated through.
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets);

// Glorot-normal init, std = sqrt(2 / (fan_in + fan_out)).
Tensor glorot_init(std::size_t fan_out, std::size_t fan_in, Rng& rng);

// Sinusoidal positional-encoding table, shape [n_tokens, d_model].
Tensor positional_encoding(std::size_t n_tokens, std::size_t d_model);

}  // namespace ppg
