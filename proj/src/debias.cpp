#include "alo/debias.hpp"

#include <cmath>

#include "alo/errors.hpp"

namespace alo::debias {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::none: return "none";
        case Strategy::rubi: return "rubi";
        case Strategy::bias_product: return "bias_product";
        case Strategy::learned_mixin: return "learned_mixin";
        case Strategy::cf_full: return "cf_full";
        case Strategy::cf_variant: return "cf_variant";
    }
    return "?";
}

Strategy parse_strategy(const std::string& s) {
    if (s == "none") return Strategy::none;
    if (s == "rubi") return Strategy::rubi;
    if (s == "bias_product" || s == "bp") return Strategy::bias_product;
    if (s == "learned_mixin" || s == "lm") return Strategy::learned_mixin;
    if (s == "cf_full" || s == "cf") return Strategy::cf_full;
    if (s == "cf_variant") return Strategy::cf_variant;
    throw ConfigError("unknown strategy '" + s + "'");
}

std::string to_string(CfFusion f) { return f == CfFusion::sum ? "sum" : "harmonic"; }

CfFusion parse_cf_fusion(const std::string& s) {
    if (s == "sum") return CfFusion::sum;
    if (s == "harmonic") return CfFusion::harmonic;
    throw ConfigError("unknown cf fusion '" + s + "'");
}

bool uses_frozen_bias(Strategy s) { return s == Strategy::bias_product || s == Strategy::learned_mixin; }

bool supervises_bias_jointly(Strategy s) {
    return s == Strategy::rubi || s == Strategy::cf_full || s == Strategy::cf_variant;
}

namespace {
void require_same(const ad::Tensor& a, const ad::Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": main " + ad::to_string(a.shape) + " vs bias " +
                             ad::to_string(b.shape));
}
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}  // namespace

ad::Var rubi_fuse(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits) {
    require_same(*main_logits, *bias_logits, "rubi_fuse");
    return tape.mul(main_logits, tape.sigmoid(bias_logits));
}

ad::Var bias_product(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits) {
    require_same(*main_logits, *bias_logits, "bias_product");
    return tape.add(tape.log_softmax(main_logits), tape.log_softmax(bias_logits));
}

ad::Var learned_mixin(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits, const ad::Var& gate_param) {
    require_same(*main_logits, *bias_logits, "learned_mixin");
    auto g = tape.softplus(gate_param);
    return tape.add(tape.log_softmax(main_logits), tape.scale_by(tape.log_softmax(bias_logits), g));
}

double gate_value(double gate_param) {
    return gate_param > 0.0 ? gate_param + std::log1p(std::exp(-gate_param)) : std::log1p(std::exp(gate_param));
}

ad::Var cf_combine(ad::Tape& tape, const ad::Var& main_logits, const ad::Var& bias_logits, CfFusion fusion) {
    require_same(*main_logits, *bias_logits, "cf_combine");
    if (fusion == CfFusion::sum) return tape.add(main_logits, bias_logits);

    auto out = ad::make(main_logits->shape);
    for (std::size_t i = 0; i < out->size(); ++i) {
        const double h = sigmoid(main_logits->data[i]) * sigmoid(bias_logits->data[i]);
        out->data[i] = std::log(h) - std::log1p(h);
    }
    ad::Tensor* o = out.get();
    return tape.custom(out, [main_logits, bias_logits, o] {
        // d/dx [log σ(x) + log σ(y) - log(1 + σ(x)σ(y))] = (1-σ(x)) · (1 - h/(1+h))
        for (std::size_t i = 0; i < o->size(); ++i) {
            const double sx = sigmoid(main_logits->data[i]), sy = sigmoid(bias_logits->data[i]);
            const double h = sx * sy;
            const double tail = 1.0 / (1.0 + h);
            main_logits->grad[i] += o->grad[i] * (1.0 - sx) * tail;
            bias_logits->grad[i] += o->grad[i] * (1.0 - sy) * tail;
        }
    });
}

ad::Tensor cf_debias_infer(const ad::Tensor& total_effect, const ad::Tensor& bias_logits, double c) {
    if (!(c >= 0.0)) throw ConfigError("counterfactual subtraction weight must be >= 0");
    require_same(total_effect, bias_logits, "cf_debias_infer");
    ad::Tensor out(total_effect.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = total_effect.data[i] - c * bias_logits.data[i];
    return out;
}

ad::Tensor inference_logits(Strategy strategy, const InferenceInputs& in, CfFusion fusion, double c) {
    switch (strategy) {
        case Strategy::none:
        case Strategy::rubi:
        case Strategy::bias_product:
        case Strategy::learned_mixin:
            if (!in.main) throw ContractError("inference needs main logits");
            return ad::Tensor(in.main->shape, in.main->data);
        case Strategy::cf_full: {
            if (!in.main || !in.bias) throw ContractError("cf inference needs main and bias logits");
            ad::Tape scratch;
            auto total = cf_combine(scratch, ad::detach(std::make_shared<ad::Tensor>(*in.main)),
                                    ad::detach(std::make_shared<ad::Tensor>(*in.bias)), fusion);
            return cf_debias_infer(*total, *in.bias, c);
        }
        case Strategy::cf_variant: {
            if (!in.bias || !in.constant_head) throw ContractError("cf_variant inference needs bias logits and constant head");
            ad::Tensor total(in.bias->shape);
            const std::size_t cols = in.bias->cols();
            for (std::size_t i = 0; i < total.size(); ++i)
                total.data[i] = in.bias->data[i] + in.constant_head->data[i % cols];
            return cf_debias_infer(total, *in.bias, c);
        }
    }
    throw ConfigError("unknown strategy");
}

}  // namespace alo::debias
