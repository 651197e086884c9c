#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "alo/tensor.hpp"

namespace alo::models {

using NamedParams = std::vector<std::pair<std::string, ad::Var>>;

/// Fully connected layer, y = x·w + b with w [in×out] and b [1×out].
struct Dense {
    ad::Var w;
    ad::Var b;

    Dense() = default;
    Dense(std::size_t in, std::size_t out);
    ad::Var forward(ad::Tape& tape, const ad::Var& x) const;
    std::size_t in() const { return w->shape[0]; }
    std::size_t out() const { return w->shape[1]; }
};

/// tanh MLP; no activation after the last layer.
struct Mlp {
    std::vector<Dense> layers;

    Mlp() = default;
    /// widths = {in, hidden..., out}
    explicit Mlp(const std::vector<std::size_t>& widths);
    ad::Var forward(ad::Tape& tape, const ad::Var& x) const;
    std::size_t in() const { return layers.front().in(); }
    std::size_t out() const { return layers.back().out(); }
    void append_params(const std::string& prefix, NamedParams& out) const;
};

// ---------------------------------------------------------------------------
// Classifier: main branch sees context ⊕ question, bias branch sees question only.

struct ClassifierConfig {
    std::size_t context_dim = 16;
    std::size_t question_dim = 8;
    std::size_t num_answers = 16;
    std::size_t hidden = 64;
    std::size_t depth = 2;  // hidden layers per branch
};

struct ClassifierModel {
    ClassifierConfig cfg;
    Mlp main_branch;
    Mlp bias_branch;
    ad::Var gate;           // learned-mixin gate parameter, g = softplus(gate)
    ad::Var constant_head;  // [1×|A|], used by the cf_variant combiner

    static ClassifierModel init(const ClassifierConfig& cfg, std::uint64_t seed);

    NamedParams named_params() const;
    std::vector<ad::Var> main_params() const;
    std::vector<ad::Var> bias_params() const;
};

struct ClassifierBatch {
    ad::Var context;   // [b×context_dim]
    ad::Var question;  // [b×question_dim]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

struct ClassifierOutput {
    ad::Var main_logits;  // [b×|A|]
    ad::Var bias_logits;  // [b×|A|]
};

ClassifierOutput forward_classifier(ad::Tape& tape, const ClassifierModel& model, const ClassifierBatch& batch);
/// Main branch only.
ad::Var forward_main(ad::Tape& tape, const ClassifierModel& model, const ClassifierBatch& batch);

// ---------------------------------------------------------------------------
// Span predictor: per-token encoder with start/end heads, plus a bias branch
// that scores positions only.

struct SpanConfig {
    std::size_t feature_dim = 16;
    std::size_t hidden = 32;
    std::size_t max_positions = 40;
};

struct SpanModel {
    SpanConfig cfg;
    Mlp encoder;  // feature_dim → hidden, tanh
    Dense start_head;
    Dense end_head;
    ad::Var bias_start;  // [1×max_positions]
    ad::Var bias_end;    // [1×max_positions]
    ad::Var gate;        // learned-mixin gate parameter

    static SpanModel init(const SpanConfig& cfg, std::uint64_t seed);

    NamedParams named_params() const;
    std::vector<ad::Var> main_params() const;
    std::vector<ad::Var> bias_params() const;
};

struct SpanBatch {
    std::size_t length = 0;  // tokens per context, equal across the batch
    ad::Var tokens;          // [(b·length)×feature_dim], contexts stacked
    std::vector<int> starts;
    std::vector<int> ends;

    std::size_t size() const { return starts.size(); }
};

struct SpanOutput {
    ad::Var start_logits;  // [b×L]
    ad::Var end_logits;
    ad::Var bias_start_logits;
    ad::Var bias_end_logits;
};

SpanOutput forward_span(ad::Tape& tape, const SpanModel& model, const SpanBatch& batch);

// ---------------------------------------------------------------------------

struct Span {
    int start = 0;
    int end = 0;
    friend bool operator==(const Span&, const Span&) = default;
};

/// argmax over s ≤ e ≤ s+max_answer_len-1 of start[s] + end[e]; lowest (s, e) wins ties.
Span decode_span(std::span<const double> start_logits, std::span<const double> end_logits, int max_answer_len);

/// Row-wise softmax (no tape).
std::vector<double> softmax_rows(const ad::Tensor& logits);
std::vector<int> argmax_rows(const ad::Tensor& logits);

/// Logits, their softmax and argmax for one classifier batch.
struct Prediction {
    ad::Tensor logits;
    std::vector<double> probs;
    std::vector<int> argmax;
};
Prediction make_prediction(const ad::Tensor& logits);

/// Set every parameter to zero.
void zero_params(const NamedParams& params);

// ---------------------------------------------------------------------------
// Checkpoints: text records, hex-float values so loading is bit-exact.
//
//   alo-checkpoint 1 <record count>
//   <name> <rank> <dim>... 
//   <value> <value> ...
//
void save_checkpoint(std::ostream& os, const NamedParams& params);
/// Load into `params`; names and shapes must match exactly.
void load_checkpoint(std::istream& is, const NamedParams& params);

}  // namespace alo::models
