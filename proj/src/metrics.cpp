#include "alo/metrics.hpp"

#include <cmath>
#include <numeric>

namespace alo::metrics {

namespace detail {
void check_span(models::Span s, std::size_t len) {
    if (s.start < 0 || s.end < s.start || static_cast<std::size_t>(s.end) >= len)
        throw DataError("span (" + std::to_string(s.start) + ", " + std::to_string(s.end) + ") invalid for " +
                        std::to_string(len) + " tokens");
}
}  // namespace detail

double open_ended_accuracy(int n_agreeing) {
    if (n_agreeing < 0) throw DomainError("annotator count must be >= 0");
    return std::min(static_cast<double>(n_agreeing) / 3.0, 1.0);
}

double harmonic_mean(std::span<const double> xs) {
    if (xs.empty()) throw DomainError("harmonic mean of nothing");
    double inv = 0.0;
    for (double x : xs) {
        if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("harmonic mean needs positive finite values");
        inv += 1.0 / x;
    }
    return static_cast<double>(xs.size()) / inv;
}

double standard_accuracy(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size())
        throw DataError("accuracy: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
    if (preds.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double span_f1(models::Span pred, models::Span gold, int context_length) {
    std::vector<int> ids(static_cast<std::size_t>(std::max(context_length, 0)));
    std::iota(ids.begin(), ids.end(), 0);
    return token_f1<int>(pred, gold, ids);
}

double macro_f1(std::span<const models::Span> preds, std::span<const std::vector<models::Span>> golds,
                std::span<const int> context_lengths) {
    if (preds.size() != golds.size() || preds.size() != context_lengths.size())
        throw DataError("macro_f1: predictions, golds and contexts differ in count");
    if (preds.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t q = 0; q < preds.size(); ++q) {
        if (golds[q].empty()) throw DataError("question without a gold answer");
        double best = 0.0;
        for (const auto& g : golds[q]) best = std::max(best, span_f1(preds[q], g, context_lengths[q]));
        total += best;
    }
    return total / static_cast<double>(preds.size());
}

}  // namespace alo::metrics
