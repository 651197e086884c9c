#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alo/tensor.hpp"

namespace alo::loss {

enum class LossKind { ce, alo, focal };
enum class SpanStateMode { shared, separate };
/// Which loss feeds the loose-factor history when a debiasing combiner is active.
enum class StateSource { combined, main };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);
std::string to_string(SpanStateMode m);
SpanStateMode parse_span_state_mode(const std::string& s);
std::string to_string(StateSource s);
StateSource parse_state_source(const std::string& s);

inline constexpr double kDefaultClamp = 0.999;

struct LossConfig {
    LossKind kind = LossKind::ce;
    int lag = 1;
    double clamp = kDefaultClamp;
    double focal_gamma = 2.0;
    SpanStateMode span_state_mode = SpanStateMode::shared;
    StateSource state_source = StateSource::combined;

    /// Throws ConfigError unless clamp ∈ (0,1), lag ≥ 1, focal_gamma ≥ 0.
    void validate() const;
};

/// Recent batch losses and the rule that turns them into the loose factor:
///
///   γ_t = min(loss_{t-lag} / loss_t, clamp)
///
/// with γ_t = clamp until `lag` losses have been recorded.
class LooseState {
   public:
    explicit LooseState(int lag = 1, double clamp = kDefaultClamp, std::size_t window = 0);

    /// Loose factor for `current_loss`, then record it. Throws NumericError
    /// when current_loss is not positive and finite.
    double gamma(double current_loss);
    /// Same value `gamma` would return, without recording.
    double peek(double current_loss) const;

    int lag() const noexcept { return lag_; }
    double clamp() const noexcept { return clamp_; }
    /// Number of losses recorded so far.
    std::size_t batch_index() const noexcept { return count_; }
    std::size_t window() const noexcept { return ring_.size(); }
    /// Loss recorded `back` calls ago (1 = most recent).
    std::optional<double> recorded(std::size_t back) const;

   private:
    int lag_;
    double clamp_;
    std::vector<double> ring_;
    std::size_t count_ = 0;
};

/// A loss on the tape plus the quantities the training trace records.
struct LossValue {
    ad::Var loss;
    double base = 0.0;   // pre-γ loss
    double gamma = 1.0;  // 1 for non-ALO losses
};

/// mean_b(-log softmax(logits)[target]); gradient (p - onehot)/b.
ad::Var cross_entropy(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets);

/// γ · cross_entropy with γ drawn from `state`. The state is fed the base
/// cross entropy, or `state_loss` when given. γ carries no gradient.
LossValue alo_loss(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets, LooseState& state,
                   std::optional<double> state_loss = std::nullopt);

/// mean_b(-(1-p)^focal_gamma · log p) on the target class.
ad::Var focal_loss(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets, double focal_gamma);

/// Dispatch on cfg.kind; `state` is only touched for ALO.
LossValue objective(ad::Tape& tape, const ad::Var& logits, std::span<const int> targets,
                    const LossConfig& cfg, LooseState& state, std::optional<double> state_loss = std::nullopt);

/// Loose-factor state for the two span heads.
struct SpanStates {
    LooseState shared;
    LooseState start;
    LooseState end;

    explicit SpanStates(const LossConfig& cfg)
        : shared(cfg.lag, cfg.clamp), start(cfg.lag, cfg.clamp), end(cfg.lag, cfg.clamp) {}
};

struct SpanLoss {
    LossValue start;
    LossValue end;
    ad::Var total;
    /// Pre-γ sum of both heads.
    double base_total() const { return start.base + end.base; }
};

/// Per-head loss for start/end logits ([b×L] each). Under ALO with shared
/// state, one γ per batch is derived from the mean of both heads' base
/// losses; with separate state each head keeps its own history.
SpanLoss span_losses(ad::Tape& tape, const ad::Var& start_logits, const ad::Var& end_logits,
                     std::span<const int> starts, std::span<const int> ends, const LossConfig& cfg,
                     SpanStates& states);

}  // namespace alo::loss
