#pragma once

#include "geogen/nn/module.hpp"
#include "geogen/rng.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace geogen {

// Arrays are 0-based; step n in [1, N] lives at index n - 1.
struct DiffusionSchedule {
    int N = 0;
    double beta1 = 0.0;
    double betaN = 0.0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int n) const { return beta.at(static_cast<std::size_t>(n - 1)); }
    double alpha_at(int n) const { return alpha.at(static_cast<std::size_t>(n - 1)); }
    double alpha_bar_at(int n) const { return alpha_bar.at(static_cast<std::size_t>(n - 1)); }
};

DiffusionSchedule make_linear_schedule(int N = 1000, double beta1 = 1e-4, double betaN = 0.02);

// x_n = sqrt(abar_n) x0 + sqrt(1 - abar_n) eps, with one step for the whole tensor.
nn::Tensor forward_sample(const nn::Tensor& x0, int n, const nn::Tensor& eps, const DiffusionSchedule& schedule);
// Per-example steps along axis 0.
nn::Tensor forward_sample(const nn::Tensor& x0, const std::vector<int>& steps, const nn::Tensor& eps,
                          const DiffusionSchedule& schedule);

// Mean squared error between the true and predicted noise.
nn::Tensor training_loss(const nn::Tensor& eps_true, const nn::Tensor& eps_pred);

// One ancestral step with variance beta_n; z must be zero at n = 1.
nn::Tensor reverse_step(const nn::Tensor& x_n, int n, const nn::Tensor& eps_pred, const nn::Tensor& z,
                        const DiffusionSchedule& schedule);

using Denoiser = std::function<nn::Tensor(const nn::Tensor& x, int n)>;

// Runs n = N..1 from unit Gaussian noise drawn from rng. Gradients are not recorded.
nn::Tensor sample(const Denoiser& denoiser, const nn::Shape& shape, const DiffusionSchedule& schedule, Rng& rng);

// Uniform step indices in [1, N] for a training batch.
std::vector<int> sample_steps(std::size_t batch, const DiffusionSchedule& schedule, Rng& rng);
nn::Tensor standard_normal(const nn::Shape& shape, Rng& rng);

struct EmaState {
    double rate = 0.9;
    std::map<std::string, std::vector<double>> shadow;
};

EmaState ema_init(nn::Module& model, double rate);
void ema_update(EmaState& ema, nn::Module& model);

}  // namespace geogen
