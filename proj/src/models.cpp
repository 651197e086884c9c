#include "alo/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "alo/errors.hpp"
#include "alo/optim.hpp"

namespace alo::models {

Dense::Dense(std::size_t in, std::size_t out) : w(ad::make({in, out})), b(ad::make({1, out})) {}

ad::Var Dense::forward(ad::Tape& tape, const ad::Var& x) const { return tape.add_row(tape.matmul(x, w), b); }

Mlp::Mlp(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers.emplace_back(widths[i], widths[i + 1]);
}

ad::Var Mlp::forward(ad::Tape& tape, const ad::Var& x) const {
    ad::Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(tape, h);
        if (i + 1 < layers.size()) h = tape.tanh(h);
    }
    return h;
}

void Mlp::append_params(const std::string& prefix, NamedParams& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out.emplace_back(prefix + "." + std::to_string(i) + ".w", layers[i].w);
        out.emplace_back(prefix + "." + std::to_string(i) + ".b", layers[i].b);
    }
}

namespace {

void init_mlp(Mlp& mlp, std::mt19937_64& rng) {
    for (auto& l : mlp.layers) optim::glorot_uniform(*l.w, rng);
}

std::vector<std::size_t> branch_widths(std::size_t in, std::size_t hidden, std::size_t depth, std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), depth, hidden);
    w.push_back(out);
    return w;
}

std::vector<ad::Var> values_of(const NamedParams& named) {
    std::vector<ad::Var> out;
    out.reserve(named.size());
    for (const auto& [_, v] : named) out.push_back(v);
    return out;
}

}  // namespace

ClassifierModel ClassifierModel::init(const ClassifierConfig& cfg, std::uint64_t seed) {
    if (cfg.context_dim == 0 || cfg.question_dim == 0 || cfg.num_answers < 2)
        throw ConfigError("classifier needs nonzero feature widths and at least two answers");
    ClassifierModel m;
    m.cfg = cfg;
    m.main_branch = Mlp(branch_widths(cfg.context_dim + cfg.question_dim, cfg.hidden, cfg.depth, cfg.num_answers));
    m.bias_branch = Mlp(branch_widths(cfg.question_dim, cfg.hidden, cfg.depth, cfg.num_answers));
    m.gate = ad::make({1}, {0.0});
    m.constant_head = ad::make({1, cfg.num_answers});
    std::mt19937_64 rng(seed);
    init_mlp(m.main_branch, rng);
    init_mlp(m.bias_branch, rng);
    return m;
}

NamedParams ClassifierModel::named_params() const {
    NamedParams out;
    main_branch.append_params("main", out);
    bias_branch.append_params("bias", out);
    out.emplace_back("gate", gate);
    out.emplace_back("constant_head", constant_head);
    return out;
}

std::vector<ad::Var> ClassifierModel::main_params() const {
    NamedParams out;
    main_branch.append_params("main", out);
    return values_of(out);
}

std::vector<ad::Var> ClassifierModel::bias_params() const {
    NamedParams out;
    bias_branch.append_params("bias", out);
    return values_of(out);
}

namespace {

ad::Var joint_input(const ClassifierModel& model, const ClassifierBatch& batch) {
    const auto& cfg = model.cfg;
    const std::size_t b = batch.size();
    if (batch.context->shape != ad::Shape{b, cfg.context_dim} || batch.question->shape != ad::Shape{b, cfg.question_dim})
        throw ConfigError("classifier batch widths " + ad::to_string(batch.context->shape) + ", " +
                          ad::to_string(batch.question->shape) + " do not match model (" +
                          std::to_string(cfg.context_dim) + ", " + std::to_string(cfg.question_dim) + ")");
    // Inputs are leaves without trainable state, so the concatenation is a plain copy.
    const std::size_t width = cfg.context_dim + cfg.question_dim;
    auto joint = ad::make({b, width});
    for (std::size_t r = 0; r < b; ++r) {
        std::copy_n(batch.context->data.begin() + static_cast<std::ptrdiff_t>(r * cfg.context_dim), cfg.context_dim,
                    joint->data.begin() + static_cast<std::ptrdiff_t>(r * width));
        std::copy_n(batch.question->data.begin() + static_cast<std::ptrdiff_t>(r * cfg.question_dim), cfg.question_dim,
                    joint->data.begin() + static_cast<std::ptrdiff_t>(r * width + cfg.context_dim));
    }
    return joint;
}

}  // namespace

ad::Var forward_main(ad::Tape& tape, const ClassifierModel& model, const ClassifierBatch& batch) {
    return model.main_branch.forward(tape, joint_input(model, batch));
}

ClassifierOutput forward_classifier(ad::Tape& tape, const ClassifierModel& model, const ClassifierBatch& batch) {
    auto main = forward_main(tape, model, batch);
    return {main, model.bias_branch.forward(tape, batch.question)};
}

SpanModel SpanModel::init(const SpanConfig& cfg, std::uint64_t seed) {
    if (cfg.feature_dim == 0 || cfg.hidden == 0 || cfg.max_positions == 0)
        throw ConfigError("span model needs nonzero widths");
    SpanModel m;
    m.cfg = cfg;
    m.encoder = Mlp({cfg.feature_dim, cfg.hidden});
    m.start_head = Dense(cfg.hidden, 1);
    m.end_head = Dense(cfg.hidden, 1);
    m.bias_start = ad::make({1, cfg.max_positions});
    m.bias_end = ad::make({1, cfg.max_positions});
    m.gate = ad::make({1}, {0.0});
    std::mt19937_64 rng(seed);
    init_mlp(m.encoder, rng);
    optim::glorot_uniform(*m.start_head.w, rng);
    optim::glorot_uniform(*m.end_head.w, rng);
    return m;
}

NamedParams SpanModel::named_params() const {
    NamedParams out;
    encoder.append_params("encoder", out);
    out.emplace_back("start_head.w", start_head.w);
    out.emplace_back("start_head.b", start_head.b);
    out.emplace_back("end_head.w", end_head.w);
    out.emplace_back("end_head.b", end_head.b);
    out.emplace_back("bias_start", bias_start);
    out.emplace_back("bias_end", bias_end);
    out.emplace_back("gate", gate);
    return out;
}

std::vector<ad::Var> SpanModel::main_params() const {
    NamedParams out;
    encoder.append_params("encoder", out);
    auto v = values_of(out);
    v.insert(v.end(), {start_head.w, start_head.b, end_head.w, end_head.b});
    return v;
}

std::vector<ad::Var> SpanModel::bias_params() const { return {bias_start, bias_end}; }

SpanOutput forward_span(ad::Tape& tape, const SpanModel& model, const SpanBatch& batch) {
    const std::size_t b = batch.size(), len = batch.length;
    if (len == 0) throw DataError("span context has no tokens");
    if (len > model.cfg.max_positions)
        throw ConfigError("context of " + std::to_string(len) + " tokens exceeds max_positions " +
                          std::to_string(model.cfg.max_positions));
    if (batch.tokens->shape != ad::Shape{b * len, model.cfg.feature_dim})
        throw ConfigError("span batch tokens " + ad::to_string(batch.tokens->shape) + " do not match model");

    // Hidden layer then tanh; the heads read the activated encoding.
    auto h = tape.tanh(model.encoder.forward(tape, batch.tokens));
    auto s = tape.reshape(model.start_head.forward(tape, h), {b, len});
    auto e = tape.reshape(model.end_head.forward(tape, h), {b, len});
    auto bs = tape.broadcast_rows(tape.take_cols(tape.reshape(model.bias_start, {1, model.cfg.max_positions}), len), b);
    auto be = tape.broadcast_rows(tape.take_cols(tape.reshape(model.bias_end, {1, model.cfg.max_positions}), len), b);
    return {s, e, bs, be};
}

Span decode_span(std::span<const double> start_logits, std::span<const double> end_logits, int max_answer_len) {
    if (start_logits.size() != end_logits.size()) throw DimensionError("decode_span: logits differ in length");
    if (start_logits.empty()) throw DataError("decode_span: empty context");
    if (max_answer_len < 1) throw ConfigError("max_answer_len must be positive");
    const int len = static_cast<int>(start_logits.size());
    Span best{0, 0};
    double best_score = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < len; ++s) {
        const int last = std::min(len - 1, s + max_answer_len - 1);
        for (int e = s; e <= last; ++e) {
            const double score = start_logits[static_cast<std::size_t>(s)] + end_logits[static_cast<std::size_t>(e)];
            if (score > best_score) {
                best_score = score;
                best = {s, e};
            }
        }
    }
    return best;
}

std::vector<double> softmax_rows(const ad::Tensor& logits) {
    const std::size_t rows = logits.rows(), cols = logits.cols();
    std::vector<double> out(logits.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data.data() + r * cols;
        const double mx = *std::max_element(z, z + cols);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += out[r * cols + j] = std::exp(z[j] - mx);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= s;
    }
    return out;
}

std::vector<int> argmax_rows(const ad::Tensor& logits) {
    const std::size_t rows = logits.rows(), cols = logits.cols();
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data.data() + r * cols;
        out[r] = static_cast<int>(std::max_element(z, z + cols) - z);
    }
    return out;
}

Prediction make_prediction(const ad::Tensor& logits) { return {logits, softmax_rows(logits), argmax_rows(logits)}; }

void zero_params(const NamedParams& params) {
    for (const auto& [_, v] : params) std::fill(v->data.begin(), v->data.end(), 0.0);
}

void save_checkpoint(std::ostream& os, const NamedParams& params) {
    os << "alo-checkpoint 1 " << params.size() << '\n';
    char buf[64];
    for (const auto& [name, v] : params) {
        os << name << ' ' << v->shape.size();
        for (auto d : v->shape) os << ' ' << d;
        os << '\n';
        for (std::size_t i = 0; i < v->size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", v->data[i]);
            os << (i ? " " : "") << buf;
        }
        os << '\n';
    }
}

void load_checkpoint(std::istream& is, const NamedParams& params) {
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    if (!(is >> magic >> version >> count) || magic != "alo-checkpoint" || version != 1)
        throw ParseError("not an alo checkpoint", 1);
    if (count != params.size())
        throw ParseError("checkpoint holds " + std::to_string(count) + " records, model has " +
                         std::to_string(params.size()), 1);
    for (const auto& [name, v] : params) {
        std::string got;
        std::size_t rank = 0;
        if (!(is >> got >> rank)) throw ParseError("truncated checkpoint at " + name, 0);
        if (got != name) throw ParseError("expected record '" + name + "', found '" + got + "'", 0);
        ad::Shape shape(rank);
        for (auto& d : shape)
            if (!(is >> d)) throw ParseError("truncated shape for " + name, 0);
        if (shape != v->shape)
            throw ParseError("shape " + ad::to_string(shape) + " for " + name + " does not match " +
                             ad::to_string(v->shape), 0);
        std::string tok;
        for (auto& x : v->data) {
            if (!(is >> tok)) throw ParseError("truncated values for " + name, 0);
            char* end = nullptr;
            x = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') throw ParseError("bad value '" + tok + "' in " + name, 0);
        }
    }
}

}  // namespace alo::models
