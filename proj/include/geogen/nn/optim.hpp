#pragma once

#include "geogen/nn/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace geogen::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Decoupled (AdamW) decay; 0 gives plain Adam.
    double weight_decay = 0.0;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamOptions options);

    void step();
    void zero_grad();

    double lr() const { return options_.lr; }
    void set_lr(double lr) { options_.lr = lr; }
    std::int64_t steps() const { return step_; }

    // Moment buffers and step counter, flattened for checkpoints.
    std::map<std::string, std::vector<double>> state() const;
    void load_state(const std::map<std::string, std::vector<double>>& state);

private:
    std::vector<Tensor> params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t step_ = 0;
};

// Scales gradients in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

class ReduceLROnPlateau {
public:
    ReduceLROnPlateau(double factor, int patience, double threshold = 1e-4);

    // Feeds one epoch's validation metric; returns true when the rate was cut.
    bool step(double metric, Adam& optimizer);

    int bad_epochs() const { return bad_epochs_; }
    double best() const { return best_; }

private:
    double factor_;
    int patience_;
    double threshold_;
    double best_;
    int bad_epochs_ = 0;
};

}  // namespace geogen::nn
