#include "geogen/nn/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace geogen::nn {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    if (options_.lr <= 0) throw std::invalid_argument("learning rate must be positive");
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    }
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        const auto g = p.grad();
        if (g.empty()) continue;
        auto w = p.data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (options_.weight_decay > 0) w[j] -= options_.lr * options_.weight_decay * w[j];
            m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
            v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
            w[j] -= options_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + options_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::map<std::string, std::vector<double>> Adam::state() const {
    std::map<std::string, std::vector<double>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out["m." + std::to_string(i)] = m_[i];
        out["v." + std::to_string(i)] = v_[i];
    }
    out["step"] = {static_cast<double>(step_)};
    out["lr"] = {options_.lr};
    return out;
}

void Adam::load_state(const std::map<std::string, std::vector<double>>& state) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto m = state.find("m." + std::to_string(i));
        auto v = state.find("v." + std::to_string(i));
        if (m == state.end() || v == state.end() || m->second.size() != m_[i].size() ||
            v->second.size() != v_[i].size()) {
            throw std::runtime_error("optimizer state does not match parameter layout");
        }
        m_[i] = m->second;
        v_[i] = v->second;
    }
    step_ = static_cast<std::int64_t>(state.at("step").at(0));
    options_.lr = state.at("lr").at(0);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params)
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const double scale = max_norm / norm;
        for (auto p : params) {
            if (p.grad().empty()) continue;
            for (double& g : p.mutable_grad()) g *= scale;
        }
    }
    return norm;
}

ReduceLROnPlateau::ReduceLROnPlateau(double factor, int patience, double threshold)
    : factor_(factor), patience_(patience), threshold_(threshold), best_(std::numeric_limits<double>::infinity()) {
    if (factor <= 0 || factor >= 1) throw std::invalid_argument("plateau factor must be in (0,1)");
    if (patience < 0) throw std::invalid_argument("plateau patience must be non-negative");
}

bool ReduceLROnPlateau::step(double metric, Adam& optimizer) {
    // Relative improvement threshold, as in the common "rel" mode.
    if (best_ == std::numeric_limits<double>::infinity() || metric < best_ - std::abs(best_) * threshold_) {
        best_ = metric;
        bad_epochs_ = 0;
        return false;
    }
    if (++bad_epochs_ >= patience_) {
        optimizer.set_lr(optimizer.lr() * factor_);
        bad_epochs_ = 0;
        return true;
    }
    return false;
}

}  // namespace geogen::nn
