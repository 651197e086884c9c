#include "alo/optim.hpp"

#include <algorithm>
#include <cmath>

#include "alo/errors.hpp"

namespace alo::optim {

void glorot_uniform(ad::Tensor& w, std::mt19937_64& rng) {
    if (w.shape.size() != 2) throw DimensionError("glorot_uniform expects a 2-D weight");
    const double s = std::sqrt(6.0 / static_cast<double>(w.shape[0] + w.shape[1]));
    std::uniform_real_distribution<double> u(-s, s);
    for (double& v : w.data) v = u(rng);
}

double global_grad_norm(std::span<const ad::Var> params) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p->grad) sq += g * g;
    return std::sqrt(sq);
}

double sgd_step(std::span<const ad::Var> params, double lr, double max_grad_norm) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
    const double norm = global_grad_norm(params);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
    const double clip = norm > max_grad_norm ? max_grad_norm / norm : 1.0;
    for (const auto& p : params) {
        for (std::size_t i = 0; i < p->size(); ++i) p->data[i] -= lr * (p->grad[i] * clip);
        p->zero_grad();
    }
    return norm;
}

double LrSchedule::lr_at(double base_lr, int epoch) const {
    if (!enabled) return base_lr;
    if (epoch < warmup_epochs) {
        const double t = static_cast<double>(epoch) / std::max(1, warmup_epochs);
        return base_lr * (warmup_start_factor + (1.0 - warmup_start_factor) * t);
    }
    if (epoch >= decay_start_epoch && decay_every > 0) {
        const int steps = (epoch - decay_start_epoch) / decay_every + 1;
        return base_lr * std::pow(decay_factor, steps);
    }
    return base_lr;
}

}  // namespace alo::optim
