#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ppg/errors.hpp"
#include "ppg/tensor.hpp"

namespace ppg {

// Adam with bias correction. Rejects non-finite gradients before touching any
// parameter, so a failed step leaves params and moments untouched.
class Adam {
  public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double epsilon = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        for (const Tensor& p : params_) {
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
    }

    long step_count() const { return t_; }

    void zero_grad() {
        for (Tensor& p : params_) p.zero_grad();
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            params_[i].ensure_grad();
            for (double g : params_[i].grad())
                if (!std::isfinite(g))
                    throw NumericError("adam: non-finite gradient in parameter " +
                                       std::to_string(i));
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& data = params_[i].data();
            const auto& grad = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < data.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace ppg
