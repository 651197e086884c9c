#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "alo/tensor.hpp"

namespace alo::optim {

/// Fill `w` ([fan_in×fan_out]) from uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(ad::Tensor& w, std::mt19937_64& rng);

/// L2 norm of all gradients taken together.
double global_grad_norm(std::span<const ad::Var> params);

/// Clip the global gradient norm to `max_grad_norm`, apply `p -= lr * grad`,
/// then zero the gradients. Returns the pre-clip norm.
double sgd_step(std::span<const ad::Var> params, double lr, double max_grad_norm);

/// Optional warm-up then step decay; disabled unless `enabled`.
struct LrSchedule {
    bool enabled = false;
    int warmup_epochs = 0;
    double warmup_start_factor = 0.1;
    int decay_start_epoch = 0;
    int decay_every = 2;
    double decay_factor = 0.25;

    double lr_at(double base_lr, int epoch) const;
};

}  // namespace alo::optim
