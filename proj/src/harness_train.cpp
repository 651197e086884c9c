#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "alo/errors.hpp"
#include "alo/harness.hpp"

namespace alo::harness {

using debias::Strategy;

namespace {

enum : std::uint32_t { kOrder = 100, kValidation = 101, kBiasOrder = 102 };

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
    return std::mt19937_64(seq);
}

constexpr std::size_t kEvalChunk = 1024;

models::ClassifierBatch class_batch(const data::ClassDataset& ds, std::span<const std::size_t> idx) {
    const std::size_t b = idx.size(), dc = ds.cfg.context_dim(), dq = ds.cfg.question_dim();
    models::ClassifierBatch batch{ad::make({b, dc}), ad::make({b, dq}), std::vector<int>(b)};
    for (std::size_t r = 0; r < b; ++r) {
        const auto& s = ds.samples[idx[r]];
        if (s.context_features.size() != dc || s.question_features.size() != dq)
            throw DataError("sample feature widths do not match dataset config");
        std::copy(s.context_features.begin(), s.context_features.end(), batch.context->data.begin() + static_cast<std::ptrdiff_t>(r * dc));
        std::copy(s.question_features.begin(), s.question_features.end(), batch.question->data.begin() + static_cast<std::ptrdiff_t>(r * dq));
        batch.labels[r] = s.label;
    }
    return batch;
}

models::SpanBatch span_batch(const data::SpanDataset& ds, std::span<const std::size_t> idx) {
    const std::size_t b = idx.size();
    const auto len = static_cast<std::size_t>(ds.cfg.context_length());
    const auto dim = static_cast<std::size_t>(ds.cfg.feature_dim);
    models::SpanBatch batch{len, ad::make({b * len, dim}), std::vector<int>(b), std::vector<int>(b)};
    for (std::size_t r = 0; r < b; ++r) {
        const auto& s = ds.samples[idx[r]];
        if (s.tokens.size() != len) throw DataError("context length differs from dataset config");
        for (std::size_t t = 0; t < len; ++t) {
            if (s.tokens[t].size() != dim) throw DataError("token width differs from dataset config");
            std::copy(s.tokens[t].begin(), s.tokens[t].end(), batch.tokens->data.begin() + static_cast<std::ptrdiff_t>((r * len + t) * dim));
        }
        batch.starts[r] = s.start;
        batch.ends[r] = s.end;
    }
    return batch;
}

/// Training-time combination of main and bias logits.
ad::Var combine(ad::Tape& tape, const ExperimentConfig& cfg, const ad::Var& main, const ad::Var& bias,
                const ad::Var& gate, const ad::Var& constant_head) {
    switch (cfg.strategy) {
        case Strategy::none: return main;
        case Strategy::rubi: return debias::rubi_fuse(tape, main, bias);
        case Strategy::bias_product: return debias::bias_product(tape, main, bias);
        case Strategy::learned_mixin: return debias::learned_mixin(tape, main, bias, gate);
        case Strategy::cf_full: return debias::cf_combine(tape, main, bias, cfg.cf_fusion);
        case Strategy::cf_variant: return tape.add_row(bias, constant_head);
    }
    throw ConfigError("unknown strategy");
}

std::vector<std::size_t> iota_n(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

/// Batches of `size`; a trailing batch of one sample is dropped.
template <class F>
void for_each_batch(const std::vector<std::size_t>& order, std::size_t size, F f) {
    for (std::size_t off = 0; off < order.size(); off += size) {
        const std::size_t n = std::min(size, order.size() - off);
        if (n < 2) break;
        f(std::span<const std::size_t>(order.data() + off, n));
    }
}

std::vector<std::vector<double>> snapshot(const models::NamedParams& params) {
    std::vector<std::vector<double>> out;
    for (const auto& [_, v] : params) out.push_back(v->data);
    return out;
}

void restore(const models::NamedParams& params, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].second->data = snap[i];
}

ad::Tensor class_logits_for(const ExperimentConfig& cfg, const models::ClassifierModel& model, const data::ClassDataset& ds,
                            const std::vector<std::size_t>& idx) {
    const std::size_t A = model.cfg.num_answers;
    ad::Tensor out({idx.size(), A});
    for (std::size_t off = 0; off < idx.size(); off += kEvalChunk) {
        const std::size_t n = std::min(kEvalChunk, idx.size() - off);
        auto batch = class_batch(ds, std::span<const std::size_t>(idx.data() + off, n));
        ad::Tape tape;
        auto fwd = models::forward_classifier(tape, model, batch);
        auto logits = debias::inference_logits(cfg.strategy, {fwd.main_logits.get(), fwd.bias_logits.get(), model.constant_head.get()},
                                               cfg.cf_fusion, cfg.cf_c);
        std::copy(logits.data.begin(), logits.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * A));
    }
    return out;
}

template <class Fn>
auto guard_divergence(std::size_t& batch_index, Fn fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        throw RunError("training diverged at batch " + std::to_string(batch_index) + ": " + e.what());
    }
}

void check_finite(const loss::LossValue& lv) {
    if (!std::isfinite(lv.base) || !std::isfinite(lv.loss->data[0])) throw NumericError("non-finite loss");
}

}  // namespace

// ---------------------------------------------------------------------------

ClassifierRun train_classifier(const ExperimentConfig& cfg, std::uint64_t seed, const data::ClassSplits& splits) {
    cfg.validate();
    if (cfg.task != Task::classification) throw ConfigError("train_classifier needs a classification config");
    const auto& ds = splits.train;
    const auto& dcfg = ds.cfg;
    models::ClassifierConfig mc{dcfg.context_dim(), dcfg.question_dim(), static_cast<std::size_t>(dcfg.answers), cfg.hidden,
                                cfg.depth};
    ClassifierRun run{models::ClassifierModel::init(mc, seed), {}, cfg.epochs - 1};
    auto& model = run.model;

    // Model selection on held-out training data only when test matches train.
    const bool select_on_val = dcfg.shift_mode == data::ShiftMode::id && cfg.validation_fraction > 0.0;
    auto train_idx = iota_n(ds.samples.size());
    std::vector<std::size_t> val_idx;
    if (select_on_val) {
        auto vrng = stream(seed, kValidation);
        std::shuffle(train_idx.begin(), train_idx.end(), vrng);
        const auto n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(train_idx.size()));
        val_idx.assign(train_idx.begin(), train_idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_idx.erase(train_idx.begin(), train_idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::sort(train_idx.begin(), train_idx.end());
    }

    std::size_t t = 0;
    return guard_divergence(t, [&]() -> ClassifierRun {
        const std::size_t A = mc.num_answers;
        // Frozen-bias strategies: fit the question-only branch first, then cache its logits.
        std::vector<double> frozen_bias;
        if (debias::uses_frozen_bias(cfg.strategy)) {
            auto brng = stream(seed, kBiasOrder);
            auto order = train_idx;
            const auto bparams = model.bias_params();
            for (int epoch = 0; epoch < cfg.bias_pretrain_epochs; ++epoch) {
                std::shuffle(order.begin(), order.end(), brng);
                for_each_batch(order, cfg.batch_size, [&](std::span<const std::size_t> idx) {
                    auto batch = class_batch(ds, idx);
                    ad::Tape tape;
                    auto l = loss::cross_entropy(tape, model.bias_branch.forward(tape, batch.question), batch.labels);
                    tape.backward(l);
                    optim::sgd_step(bparams, cfg.lr, cfg.max_grad_norm);
                });
            }
            frozen_bias.assign(ds.samples.size() * A, 0.0);
            auto all = iota_n(ds.samples.size());
            for (std::size_t off = 0; off < all.size(); off += kEvalChunk) {
                const std::size_t n = std::min(kEvalChunk, all.size() - off);
                auto batch = class_batch(ds, std::span<const std::size_t>(all.data() + off, n));
                ad::Tape tape;
                auto bl = model.bias_branch.forward(tape, batch.question);
                std::copy(bl->data.begin(), bl->data.end(), frozen_bias.begin() + static_cast<std::ptrdiff_t>(off * A));
            }
        }

        std::vector<ad::Var> params;
        if (cfg.strategy != Strategy::cf_variant) params = model.main_params();
        if (cfg.strategy == Strategy::learned_mixin) params.push_back(model.gate);
        if (cfg.strategy == Strategy::cf_variant) params.push_back(model.constant_head);
        if (debias::supervises_bias_jointly(cfg.strategy)) {
            auto bp = model.bias_params();
            params.insert(params.end(), bp.begin(), bp.end());
        }

        loss::LooseState state(cfg.loss.lag, cfg.loss.clamp);
        auto order_rng = stream(seed, kOrder);
        const auto named = model.named_params();
        std::vector<std::vector<double>> best;
        double best_acc = -1.0;

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double lr = cfg.schedule.lr_at(cfg.lr, epoch);
            std::shuffle(train_idx.begin(), train_idx.end(), order_rng);
            for_each_batch(train_idx, cfg.batch_size, [&](std::span<const std::size_t> idx) {
                auto batch = class_batch(ds, idx);
                ad::Tape tape;
                ad::Var main, bias;
                if (cfg.strategy != Strategy::cf_variant) main = models::forward_main(tape, model, batch);
                if (debias::supervises_bias_jointly(cfg.strategy)) bias = model.bias_branch.forward(tape, batch.question);
                if (!frozen_bias.empty()) {
                    bias = ad::make({idx.size(), A});
                    for (std::size_t r = 0; r < idx.size(); ++r)
                        std::copy_n(frozen_bias.begin() + static_cast<std::ptrdiff_t>(idx[r] * A), A,
                                    bias->data.begin() + static_cast<std::ptrdiff_t>(r * A));
                }
                auto logits = combine(tape, cfg, main, bias, model.gate, model.constant_head);

                std::optional<double> state_loss;
                if (cfg.loss.state_source == loss::StateSource::main && main) {
                    ad::Tape scratch;
                    state_loss = loss::cross_entropy(scratch, ad::detach(main), batch.labels)->data[0];
                }
                auto lv = loss::objective(tape, logits, batch.labels, cfg.loss, state, state_loss);
                check_finite(lv);
                auto total = lv.loss;
                if (debias::supervises_bias_jointly(cfg.strategy))
                    total = tape.add(total, loss::cross_entropy(tape, bias, batch.labels));
                tape.backward(total);
                optim::sgd_step(params, lr, cfg.max_grad_norm);
                run.trace.push_back({t++, lv.base, lv.gamma, lv.loss->data[0]});
            });

            if (select_on_val && !val_idx.empty()) {
                auto logits = class_logits_for(cfg, model, ds, val_idx);
                const auto preds = models::argmax_rows(logits);
                std::vector<int> labels;
                for (auto i : val_idx) labels.push_back(ds.samples[i].label);
                const double acc = metrics::standard_accuracy(preds, labels);
                if (acc > best_acc) {
                    best_acc = acc;
                    best = snapshot(named);
                    run.selected_epoch = epoch;
                }
            }
        }
        if (!best.empty()) restore(named, best);
        return std::move(run);
    });
}

ad::Tensor classifier_logits(const ExperimentConfig& cfg, const models::ClassifierModel& model, const data::ClassDataset& ds) {
    return class_logits_for(cfg, model, ds, iota_n(ds.samples.size()));
}

// ---------------------------------------------------------------------------

namespace {

/// log of Laplace-smoothed answer position frequencies.
std::vector<double> position_log_prior(const data::SpanDataset& ds, bool start, std::size_t positions) {
    std::vector<double> counts(positions, 1.0);
    for (const auto& s : ds.samples) counts[static_cast<std::size_t>(start ? s.start : s.end)] += 1.0;
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (double& c : counts) c = std::log(c / total);
    return counts;
}

}  // namespace

SpanRun train_span(const ExperimentConfig& cfg, std::uint64_t seed, const data::SpanSplits& splits) {
    cfg.validate();
    if (cfg.task != Task::span) throw ConfigError("train_span needs a span config");
    const auto& ds = splits.train_k;
    const auto len = static_cast<std::size_t>(ds.cfg.context_length());
    models::SpanConfig mc{static_cast<std::size_t>(ds.cfg.feature_dim), cfg.span_hidden, len};
    SpanRun run{models::SpanModel::init(mc, seed), {}};
    auto& model = run.model;

    const bool frozen = debias::uses_frozen_bias(cfg.strategy);
    if (frozen) {
        model.bias_start->data = position_log_prior(ds, true, len);
        model.bias_end->data = position_log_prior(ds, false, len);
    }
    std::vector<ad::Var> params = model.main_params();
    if (cfg.strategy == Strategy::learned_mixin) params.push_back(model.gate);
    if (debias::supervises_bias_jointly(cfg.strategy)) params.insert(params.end(), {model.bias_start, model.bias_end});

    loss::SpanStates states(cfg.loss);
    auto order_rng = stream(seed, kOrder);
    auto order = iota_n(ds.samples.size());
    std::size_t t = 0;
    return guard_divergence(t, [&]() -> SpanRun {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double lr = cfg.schedule.lr_at(cfg.lr, epoch);
            std::shuffle(order.begin(), order.end(), order_rng);
            for_each_batch(order, cfg.batch_size, [&](std::span<const std::size_t> idx) {
                auto batch = span_batch(ds, idx);
                ad::Tape tape;
                auto out = models::forward_span(tape, model, batch);
                ad::Var bs = out.bias_start_logits, be = out.bias_end_logits;
                if (frozen) {
                    bs = ad::detach(bs);
                    be = ad::detach(be);
                }
                auto ls = combine(tape, cfg, out.start_logits, bs, model.gate, nullptr);
                auto le = combine(tape, cfg, out.end_logits, be, model.gate, nullptr);
                auto sl = loss::span_losses(tape, ls, le, batch.starts, batch.ends, cfg.loss, states);
                check_finite(sl.start);
                check_finite(sl.end);
                auto total = sl.total;
                if (debias::supervises_bias_jointly(cfg.strategy)) {
                    total = tape.add(total, loss::cross_entropy(tape, bs, batch.starts));
                    total = tape.add(total, loss::cross_entropy(tape, be, batch.ends));
                }
                tape.backward(total);
                optim::sgd_step(params, lr, cfg.max_grad_norm);
                run.trace.push_back({t++, sl.base_total(), 0.5 * (sl.start.gamma + sl.end.gamma), sl.total->data[0]});
            });
        }
        return std::move(run);
    });
}

std::vector<models::Span> span_predictions(const ExperimentConfig& cfg, const models::SpanModel& model,
                                           const data::SpanDataset& ds) {
    const auto len = static_cast<std::size_t>(ds.cfg.context_length());
    auto all = iota_n(ds.samples.size());
    std::vector<models::Span> preds;
    preds.reserve(all.size());
    const std::size_t chunk = std::max<std::size_t>(1, kEvalChunk / len);
    for (std::size_t off = 0; off < all.size(); off += chunk) {
        const std::size_t n = std::min(chunk, all.size() - off);
        auto batch = span_batch(ds, std::span<const std::size_t>(all.data() + off, n));
        ad::Tape tape;
        auto out = models::forward_span(tape, model, batch);
        auto s = debias::inference_logits(cfg.strategy, {out.start_logits.get(), out.bias_start_logits.get(), nullptr},
                                          cfg.cf_fusion, cfg.cf_c);
        auto e = debias::inference_logits(cfg.strategy, {out.end_logits.get(), out.bias_end_logits.get(), nullptr},
                                          cfg.cf_fusion, cfg.cf_c);
        for (std::size_t r = 0; r < n; ++r)
            preds.push_back(models::decode_span(std::span<const double>(s.data.data() + r * len, len),
                                                std::span<const double>(e.data.data() + r * len, len), cfg.max_answer_len));
    }
    return preds;
}

}  // namespace alo::harness
