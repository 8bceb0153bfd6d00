#pragma once

#include "geogen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace geogen::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int checked = 0;
};

// Compares reverse-mode gradients against central differences on the listed
// flat indices of `param`. Relative error uses max(|a|, |n|, floor) as scale.
inline GradCheckResult grad_check(nn::Tensor param, const std::function<nn::Tensor()>& loss_fn,
                                  const std::vector<std::size_t>& indices, double step = 1e-5,
                                  double floor = 1e-6) {
    param.zero_grad();
    nn::Tensor loss = loss_fn();
    loss.backward();
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());
    GradCheckResult r;
    for (std::size_t i : indices) {
        auto data = param.data();
        const double orig = data[i];
        double plus, minus;
        {
            nn::NoGradGuard guard;
            data[i] = orig + step;
            plus = loss_fn().item();
            data[i] = orig - step;
            minus = loss_fn().item();
            data[i] = orig;
        }
        const double numeric = (plus - minus) / (2 * step);
        const double a = analytic.empty() ? 0.0 : analytic[i];
        const double abs_err = std::abs(a - numeric);
        const double scale = std::max({std::abs(a), std::abs(numeric), floor});
        r.max_abs_error = std::max(r.max_abs_error, abs_err);
        r.max_rel_error = std::max(r.max_rel_error, abs_err / scale);
        ++r.checked;
    }
    return r;
}

inline std::vector<std::size_t> all_indices(const nn::Tensor& t) {
    std::vector<std::size_t> v(static_cast<std::size_t>(t.size()));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
}

}  // namespace geogen::testing
