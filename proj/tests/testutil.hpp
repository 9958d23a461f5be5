#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ppg/tensor.hpp"

namespace ppgtest {

// Central finite-difference gradient check, independent of the tape.
// `loss_fn` must rebuild the forward pass from current parameter data.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline GradCheckResult finite_diff_check(std::vector<ppg::Tensor> params,
                                         const std::function<double()>& loss_fn,
                                         const std::function<void()>& backward_fn,
                                         double h = 1e-5) {
    for (ppg::Tensor& p : params) p.zero_grad();
    backward_fn();

    GradCheckResult result;
    for (ppg::Tensor& p : params) {
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double orig = p.data()[i];
            p.data()[i] = orig + h;
            const double lp = loss_fn();
            p.data()[i] = orig - h;
            const double lm = loss_fn();
            p.data()[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = p.grad()[i];
            // Floor at 1e-6: central differences at h=1e-5 carry ~1e-11 roundoff
            // noise, so gradients below this are indistinguishable from zero
            // (e.g. attention key biases, whose true gradient is structurally 0).
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            result.max_rel_err = std::max(result.max_rel_err,
                                          std::abs(numeric - analytic) / denom);
            ++result.checked;
        }
    }
    return result;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace ppgtest
