#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alo/models.hpp"

namespace alo::metrics {

/// One metric value for one (method, loss, seed, split).
struct ResultRow {
    std::string method;
    std::string loss;
    std::string strategy;
    std::int64_t seed = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// min(n_a / 3, 1)
double open_ended_accuracy(int n_agreeing);

/// n / Σ 1/xᵢ. Throws DomainError if any xᵢ ≤ 0 or xs is empty.
double harmonic_mean(std::span<const double> xs);

/// Fraction of positions where preds == labels. Throws DataError on length mismatch.
double standard_accuracy(std::span<const int> preds, std::span<const int> labels);

/// Bag-of-tokens F1 between two spans of `context` (inclusive bounds).
template <class Token>
double token_f1(models::Span pred, models::Span gold, std::span<const Token> context);

/// token_f1 with each position its own token.
double span_f1(models::Span pred, models::Span gold, int context_length);

/// Per question, the best F1 over its gold answers; averaged over questions.
double macro_f1(std::span<const models::Span> preds, std::span<const std::vector<models::Span>> golds,
                std::span<const int> context_lengths);

}  // namespace alo::metrics

#include "alo/metrics_impl.hpp"
