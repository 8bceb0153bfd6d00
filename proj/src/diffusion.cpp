#include "geogen/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace geogen {

using nn::Tensor;

DiffusionSchedule make_linear_schedule(int N, double beta1, double betaN) {
    if (N < 2) throw std::invalid_argument("diffusion needs at least two steps");
    if (!(beta1 > 0 && beta1 < betaN && betaN < 1)) {
        throw std::invalid_argument("schedule requires 0 < beta1 < betaN < 1");
    }
    DiffusionSchedule s;
    s.N = N;
    s.beta1 = beta1;
    s.betaN = betaN;
    s.beta.resize(static_cast<std::size_t>(N));
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double prod = 1.0;
    for (int i = 0; i < N; ++i) {
        const auto k = static_cast<std::size_t>(i);
        s.beta[k] = i == N - 1 ? betaN : beta1 + (betaN - beta1) * i / (N - 1);
        s.alpha[k] = 1.0 - s.beta[k];
        prod *= s.alpha[k];
        s.alpha_bar[k] = prod;
    }
    return s;
}

namespace {

void check_step(int n, const DiffusionSchedule& schedule) {
    if (n < 1 || n > schedule.N) {
        throw std::out_of_range("diffusion step " + std::to_string(n) + " outside [1, " + std::to_string(schedule.N) +
                                "]");
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw nn::ShapeError(std::string(what) + ": shape mismatch " + nn::to_string(a.shape()) + " vs " +
                             nn::to_string(b.shape()));
    }
}

}  // namespace

Tensor forward_sample(const Tensor& x0, int n, const Tensor& eps, const DiffusionSchedule& schedule) {
    check_same_shape(x0, eps, "forward_sample");
    check_step(n, schedule);
    const double ab = schedule.alpha_bar_at(n);
    return x0 * std::sqrt(ab) + eps * std::sqrt(1.0 - ab);
}

Tensor forward_sample(const Tensor& x0, const std::vector<int>& steps, const Tensor& eps,
                      const DiffusionSchedule& schedule) {
    check_same_shape(x0, eps, "forward_sample");
    if (x0.ndim() < 1 || static_cast<std::size_t>(x0.dim(0)) != steps.size()) {
        throw nn::ShapeError("forward_sample: one step per batch element required");
    }
    nn::Shape col(static_cast<std::size_t>(x0.ndim()), 1);
    col[0] = x0.dim(0);
    std::vector<double> a(steps.size()), b(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        check_step(steps[i], schedule);
        a[i] = std::sqrt(schedule.alpha_bar_at(steps[i]));
        b[i] = std::sqrt(1.0 - schedule.alpha_bar_at(steps[i]));
    }
    return x0 * Tensor::from(col, std::move(a)) + eps * Tensor::from(col, std::move(b));
}

Tensor training_loss(const Tensor& eps_true, const Tensor& eps_pred) {
    check_same_shape(eps_true, eps_pred, "training_loss");
    return nn::mean(nn::square(eps_pred - eps_true));
}

Tensor reverse_step(const Tensor& x_n, int n, const Tensor& eps_pred, const Tensor& z,
                    const DiffusionSchedule& schedule) {
    check_step(n, schedule);
    check_same_shape(x_n, eps_pred, "reverse_step");
    check_same_shape(x_n, z, "reverse_step");
    if (n == 1) {
        for (double v : z.values())
            if (v != 0.0) throw std::invalid_argument("noise must be zero at the final step");
    }
    const double beta = schedule.beta_at(n);
    const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar_at(n));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha_at(n));
    const double sigma = std::sqrt(beta);
    const auto& x = x_n.values();
    const auto& e = eps_pred.values();
    const auto& zz = z.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = inv_sqrt_alpha * (x[i] - coef * e[i]) + sigma * zz[i];
    return Tensor::from(x_n.shape(), std::move(out));
}

Tensor standard_normal(const nn::Shape& shape, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(nn::numel(shape)));
    for (auto& x : v) x = rng.normal();
    return Tensor::from(shape, std::move(v));
}

std::vector<int> sample_steps(std::size_t batch, const DiffusionSchedule& schedule, Rng& rng) {
    std::vector<int> out(batch);
    for (auto& n : out) n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.N)));
    return out;
}

Tensor sample(const Denoiser& denoiser, const nn::Shape& shape, const DiffusionSchedule& schedule, Rng& rng) {
    nn::NoGradGuard guard;
    Tensor x = standard_normal(shape, rng);
    const Tensor zero = Tensor::zeros(shape);
    for (int n = schedule.N; n >= 1; --n) {
        Tensor eps = denoiser(x, n);
        if (eps.shape() != shape) {
            throw nn::ShapeError("denoiser returned " + nn::to_string(eps.shape()) + ", expected " +
                                 nn::to_string(shape));
        }
        x = reverse_step(x, n, eps, n > 1 ? standard_normal(shape, rng) : zero, schedule);
    }
    return x;
}

EmaState ema_init(nn::Module& model, double rate) {
    if (!(rate > 0 && rate < 1)) throw std::invalid_argument("EMA rate must be in (0, 1)");
    return EmaState{rate, model.values()};
}

void ema_update(EmaState& ema, nn::Module& model) {
    for (auto& [name, param] : model.named_parameters()) {
        auto it = ema.shadow.find(name);
        if (it == ema.shadow.end() || it->second.size() != static_cast<std::size_t>(param.size())) {
            throw nn::ShapeError("EMA shadow does not match parameter " + name);
        }
        const auto& live = param.values();
        for (std::size_t i = 0; i < live.size(); ++i)
            it->second[i] = ema.rate * it->second[i] + (1.0 - ema.rate) * live[i];
    }
}

}  // namespace geogen
