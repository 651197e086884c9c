#include "alo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "alo/errors.hpp"

namespace alo::loss {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::ce: return "ce";
        case LossKind::alo: return "alo";
        case LossKind::focal: return "focal";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "ce") return LossKind::ce;
    if (s == "alo") return LossKind::alo;
    if (s == "focal") return LossKind::focal;
    throw ConfigError("unknown loss kind '" + s + "'");
}

std::string to_string(SpanStateMode m) { return m == SpanStateMode::shared ? "shared" : "separate"; }

SpanStateMode parse_span_state_mode(const std::string& s) {
    if (s == "shared") return SpanStateMode::shared;
    if (s == "separate") return SpanStateMode::separate;
    throw ConfigError("unknown span_state_mode '" + s + "'");
}

std::string to_string(StateSource s) { return s == StateSource::combined ? "combined" : "main"; }

StateSource parse_state_source(const std::string& s) {
    if (s == "combined") return StateSource::combined;
    if (s == "main") return StateSource::main;
    throw ConfigError("unknown state_source '" + s + "'");
}

void LossConfig::validate() const {
    if (!(clamp > 0.0 && clamp < 1.0)) throw ConfigError("clamp must lie in (0, 1)");
    if (lag < 1) throw ConfigError("lag must be >= 1");
    if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be >= 0");
}

LooseState::LooseState(int lag, double clamp, std::size_t window) : lag_(lag), clamp_(clamp) {
    if (lag < 1) throw ConfigError("lag must be >= 1");
    if (!(clamp > 0.0 && clamp < 1.0)) throw ConfigError("clamp must lie in (0, 1)");
    ring_.assign(std::max<std::size_t>(window, static_cast<std::size_t>(lag)), 0.0);
}

std::optional<double> LooseState::recorded(std::size_t back) const {
    if (back == 0 || back > count_ || back > ring_.size()) return std::nullopt;
    return ring_[(count_ - back) % ring_.size()];
}

double LooseState::peek(double current_loss) const {
    if (!(current_loss > 0.0) || !std::isfinite(current_loss))
        throw NumericError("loose factor needs a positive finite loss");
    const auto prev = recorded(static_cast<std::size_t>(lag_));
    if (!prev) return clamp_;
    const double ratio = std::max(*prev / current_loss, std::numeric_limits<double>::min());
    return std::min(ratio, clamp_);
}

double LooseState::gamma(double current_loss) {
    const double g = peek(current_loss);
    ring_[count_ % ring_.size()] = current_loss;
    ++count_;
    return g;
}

ad::Var cross_entropy(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets) {
    return tape.nll_mean(tape.log_softmax(logits), targets);
}

LossValue alo_loss(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets, LooseState& state,
                   std::optional<double> state_loss) {
    auto base = cross_entropy(tape, logits, targets);
    const double b = base->data[0];
    const double fed = state_loss.value_or(b);
    // A batch fitted to the last bit has nothing to scale and no ratio to offer.
    const double g = fed > 0.0 ? state.gamma(fed) : state.clamp();
    return {tape.scale(base, g), b, g};
}

ad::Var focal_loss(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets, double focal_gamma) {
    if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be >= 0");
    auto logp = tape.log_softmax(logits);
    const std::size_t rows = logp->rows(), cols = logp->cols();
    if (targets.size() != rows) throw DimensionError("focal_loss: target count differs from batch");
    std::vector<int> tg(targets.begin(), targets.end());
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (tg[r] < 0 || static_cast<std::size_t>(tg[r]) >= cols) throw DataError("target out of range");
        const double lp = logp->data[r * cols + static_cast<std::size_t>(tg[r])];
        const double q = -std::expm1(lp);  // 1 - p
        acc -= std::pow(q, focal_gamma) * lp;
    }
    auto out = ad::make({1}, {acc / static_cast<double>(rows)});
    ad::Tensor* o = out.get();
    return tape.custom(out, [logp, o, tg = std::move(tg), rows, cols, focal_gamma] {
        const double scale = o->grad[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t idx = r * cols + static_cast<std::size_t>(tg[r]);
            const double lp = logp->data[idx];
            const double p = std::exp(lp);
            const double q = -std::expm1(lp);
            // d/dlp of -(q^g)·lp, with dq/dlp = -p
            double d = -std::pow(q, focal_gamma);
            if (focal_gamma != 0.0 && q > 0.0) d += focal_gamma * p * std::pow(q, focal_gamma - 1.0) * lp;
            logp->grad[idx] += scale * d;
        }
    });
}

LossValue objective(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets, const LossConfig& cfg,
                    LooseState& state, std::optional<double> state_loss) {
    switch (cfg.kind) {
        case LossKind::ce: {
            auto l = cross_entropy(tape, logits, targets);
            return {l, l->data[0], 1.0};
        }
        case LossKind::alo: return alo_loss(tape, logits, targets, state, state_loss);
        case LossKind::focal: {
            auto l = focal_loss(tape, logits, targets, cfg.focal_gamma);
            return {l, l->data[0], 1.0};
        }
    }
    throw ConfigError("unknown loss kind");
}

SpanLoss span_losses(ad::Tape& tape, const ad::Var& start_logits, const ad::Var& end_logits,
                     std::span<const int> starts, std::span<const int> ends, const LossConfig& cfg,
                     SpanStates& states) {
    if (start_logits->shape != end_logits->shape)
        throw DimensionError("span_losses: start and end logits differ in shape");
    const std::size_t len = start_logits->cols();
    if (starts.size() != ends.size()) throw DataError("span_losses: start/end count mismatch");
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (starts[i] < 0 || ends[i] < starts[i] || static_cast<std::size_t>(ends[i]) >= len)
            throw DataError("invalid answer span (" + std::to_string(starts[i]) + ", " + std::to_string(ends[i]) +
                            ") for context of " + std::to_string(len) + " tokens");
    }

    SpanLoss out;
    if (cfg.kind != LossKind::alo) {
        out.start = objective(tape, start_logits, starts, cfg, states.start);
        out.end = objective(tape, end_logits, ends, cfg, states.end);
    } else if (cfg.span_state_mode == SpanStateMode::separate) {
        out.start = alo_loss(tape, start_logits, starts, states.start);
        out.end = alo_loss(tape, end_logits, ends, states.end);
    } else {
        auto cs = cross_entropy(tape, start_logits, starts);
        auto ce = cross_entropy(tape, end_logits, ends);
        const double mean = 0.5 * (cs->data[0] + ce->data[0]);
        const double g = mean > 0.0 ? states.shared.gamma(mean) : states.shared.clamp();
        out.start = {tape.scale(cs, g), cs->data[0], g};
        out.end = {tape.scale(ce, g), ce->data[0], g};
    }
    out.total = tape.add(out.start.loss, out.end.loss);
    return out;
}

}  // namespace alo::loss
