#pragma once

#include <algorithm>
#include <map>

#include "alo/errors.hpp"

namespace alo::metrics {

namespace detail {
void check_span(models::Span s, std::size_t len);
}

template <class Token>
double token_f1(models::Span pred, models::Span gold, std::span<const Token> context) {
    detail::check_span(pred, context.size());
    detail::check_span(gold, context.size());
    std::map<Token, int> bag;
    for (int i = gold.start; i <= gold.end; ++i) ++bag[context[static_cast<std::size_t>(i)]];
    int common = 0;
    for (int i = pred.start; i <= pred.end; ++i) {
        auto it = bag.find(context[static_cast<std::size_t>(i)]);
        if (it != bag.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / (pred.end - pred.start + 1);
    const double recall = static_cast<double>(common) / (gold.end - gold.start + 1);
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace alo::metrics
