#pragma once

#include <string>

#include "alo/tensor.hpp"

namespace alo::debias {

enum class Strategy { none, rubi, bias_product, learned_mixin, cf_full, cf_variant };
enum class CfFusion { sum, harmonic };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);
std::string to_string(CfFusion f);
CfFusion parse_cf_fusion(const std::string& s);

/// Strategies whose bias branch is fitted before, and frozen during, main training.
bool uses_frozen_bias(Strategy s);
/// Strategies that add the bias branch's own cross entropy to the training loss.
bool supervises_bias_jointly(Strategy s);

/// main ⊙ sigmoid(bias)
ad::Var rubi_fuse(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits);

/// log_softmax(main) + log_softmax(bias)
ad::Var bias_product(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits);

/// log_softmax(main) + softplus(gate)·log_softmax(bias)
ad::Var learned_mixin(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits, const ad::Var& gate_param);

/// softplus of the raw gate parameter.
double gate_value(double gate_param);

/// Total-effect logits. sum: main + bias. harmonic: log(h / (1 + h)) with
/// h = sigmoid(main)·sigmoid(bias).
ad::Var cf_combine(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits, CfFusion fusion);

/// total - c·bias. Throws ConfigError for c < 0.
ad::Tensor cf_debias_infer(const ad::Tensor& total_effect, const ad::Tensor& bias_logits, double c);

/// Logits the deployed model answers with. `main` may be null for cf_variant,
/// `bias` is never read by none/rubi/bias_product/learned_mixin.
struct InferenceInputs {
    const ad::Tensor* main = nullptr;
    const ad::Tensor* bias = nullptr;
    const ad::Tensor* constant_head = nullptr;  // [1×c], cf_variant only
};
ad::Tensor inference_logits(Strategy strategy, const InferenceInputs& in, CfFusion fusion, double c);

}  // namespace alo::debias
