#include "alo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "alo/errors.hpp"
#include "alo/kernels.hpp"

namespace alo::ad {

namespace kn = kernels::parallel;

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0), grad(data.size(), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (numel(shape) != data.size())
        throw DimensionError("tensor shape " + to_string(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
    grad.assign(data.size(), 0.0);
}

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw DimensionError("expected 2-D tensor, got " + to_string(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("expected 2-D tensor, got " + to_string(shape));
    return shape[1];
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Var make(Shape shape) { return std::make_shared<Tensor>(std::move(shape)); }

Var make(Shape shape, std::vector<double> values) {
    return std::make_shared<Tensor>(std::move(shape), std::move(values));
}

Var detach(const Var& v) { return make(v->shape, v->data); }

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
    if (a->shape != b->shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a->shape) + " vs " +
                             to_string(b->shape));
}

void require_2d(const Var& a, const char* op) {
    if (a->shape.size() != 2)
        throw DimensionError(std::string(op) + ": expected 2-D tensor, got " + to_string(a->shape));
}

template <class F>
Var map(const Var& a, F f) {
    auto out = make(a->shape);
    std::transform(a->data.begin(), a->data.end(), out->data.begin(), f);
    return out;
}

}  // namespace

Var Tape::record(Var out, std::function<void()> backprop) {
    if (consumed_) throw ContractError("tape already consumed by backward");
    for (double v : out->data)
        if (!std::isfinite(v)) throw NumericError("non-finite value produced on tape");
    nodes_.push_back({out, std::move(backprop)});
    return out;
}

Var Tape::matmul(const Var& a, const Var& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    if (b->shape[0] != k)
        throw DimensionError("matmul: inner dimensions differ, " + to_string(a->shape) + " · " +
                             to_string(b->shape));
    auto out = make({m, n});
    kn::matmul(a->data, b->data, out->data, m, k, n);
    Tensor* o = out.get();
    return record(out, [a, b, o, m, k, n] {
        kn::matmul_grad_lhs(o->grad, b->data, a->grad, m, k, n);
        kn::matmul_grad_rhs(a->data, o->grad, b->grad, m, k, n);
    });
}

Var Tape::add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    auto out = make(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    Tensor* o = out.get();
    return record(out, [a, b, o] {
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i];
            b->grad[i] += o->grad[i];
        }
    });
}

Var Tape::add_row(const Var& a, const Var& row) {
    require_2d(a, "add_row");
    const std::size_t m = a->rows(), n = a->cols();
    if (row->size() != n)
        throw DimensionError("add_row: row " + to_string(row->shape) + " does not match " +
                             to_string(a->shape));
    auto out = make(a->shape);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->data[i * n + j] = a->data[i * n + j] + row->data[j];
    Tensor* o = out.get();
    return record(out, [a, row, o, m, n] {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                a->grad[i * n + j] += o->grad[i * n + j];
                row->grad[j] += o->grad[i * n + j];
            }
    });
}

Var Tape::mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    auto out = make(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    Tensor* o = out.get();
    return record(out, [a, b, o] {
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i] * b->data[i];
            b->grad[i] += o->grad[i] * a->data[i];
        }
    });
}

Var Tape::scale(const Var& a, double factor) {
    if (!std::isfinite(factor)) throw NumericError("scale: non-finite factor");
    auto out = map(a, [factor](double x) { return x * factor; });
    Tensor* o = out.get();
    return record(out, [a, o, factor] {
        for (std::size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i] * factor;
    });
}

Var Tape::scale_by(const Var& a, const Var& s) {
    if (s->size() != 1)
        throw DimensionError("scale_by: factor must hold one element, got " + to_string(s->shape));
    const double f = s->data[0];
    auto out = map(a, [f](double x) { return x * f; });
    Tensor* o = out.get();
    return record(out, [a, s, o] {
        double acc = 0.0;
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i] * s->data[0];
            acc += o->grad[i] * a->data[i];
        }
        s->grad[0] += acc;
    });
}

Var Tape::relu(const Var& a) {
    auto out = map(a, [](double x) { return x > 0.0 ? x : 0.0; });
    Tensor* o = out.get();
    return record(out, [a, o] {
        for (std::size_t i = 0; i < o->size(); ++i)
            if (a->data[i] > 0.0) a->grad[i] += o->grad[i];
    });
}

Var Tape::tanh(const Var& a) {
    auto out = map(a, [](double x) { return std::tanh(x); });
    Tensor* o = out.get();
    return record(out, [a, o] {
        for (std::size_t i = 0; i < o->size(); ++i)
            a->grad[i] += o->grad[i] * (1.0 - o->data[i] * o->data[i]);
    });
}

namespace {
double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
}  // namespace

Var Tape::sigmoid(const Var& a) {
    auto out = map(a, sigmoid_value);
    Tensor* o = out.get();
    return record(out, [a, o] {
        for (std::size_t i = 0; i < o->size(); ++i)
            a->grad[i] += o->grad[i] * o->data[i] * (1.0 - o->data[i]);
    });
}

Var Tape::softplus(const Var& a) {
    auto out = map(a, softplus_value);
    Tensor* o = out.get();
    return record(out, [a, o] {
        for (std::size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i] * sigmoid_value(a->data[i]);
    });
}

Var Tape::log_softmax(const Var& z) {
    require_2d(z, "log_softmax");
    const std::size_t rows = z->rows(), cols = z->cols();
    if (cols == 0) throw DimensionError("log_softmax: zero classes");
    for (double v : z->data)
        if (!std::isfinite(v)) throw NumericError("log_softmax: non-finite input");
    auto out = make(z->shape);
    kn::log_softmax_rows(z->data, out->data, rows, cols);
    Tensor* o = out.get();
    return record(out, [z, o, rows, cols] { kn::log_softmax_grad_rows(o->data, o->grad, z->grad, rows, cols); });
}

Var Tape::nll_mean(const Var& logp, std::span<const int> targets) {
    require_2d(logp, "nll_mean");
    const std::size_t rows = logp->rows(), cols = logp->cols();
    if (targets.size() != rows)
        throw DimensionError("nll_mean: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(rows) + " rows");
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= cols)
            throw DataError("target " + std::to_string(t) + " outside [0, " + std::to_string(cols) + ")");
    std::vector<int> tg(targets.begin(), targets.end());
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc -= logp->data[r * cols + static_cast<std::size_t>(tg[r])];
    auto out = make({1}, {acc / static_cast<double>(rows)});
    Tensor* o = out.get();
    return record(out, [logp, o, tg = std::move(tg), rows, cols] {
        const double g = o->grad[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) logp->grad[r * cols + static_cast<std::size_t>(tg[r])] -= g;
    });
}

Var Tape::sum(const Var& a) {
    double acc = 0.0;
    for (double v : a->data) acc += v;
    auto out = make({1}, {acc});
    Tensor* o = out.get();
    return record(out, [a, o] {
        for (double& g : a->grad) g += o->grad[0];
    });
}

Var Tape::reshape(const Var& a, Shape shape) {
    if (numel(shape) != a->size())
        throw DimensionError("reshape: " + to_string(a->shape) + " to " + to_string(shape));
    auto out = make(std::move(shape), a->data);
    Tensor* o = out.get();
    return record(out, [a, o] {
        for (std::size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
    });
}

Var Tape::broadcast_rows(const Var& row, std::size_t rows) {
    const std::size_t n = row->size();
    auto out = make({rows, n});
    for (std::size_t i = 0; i < rows; ++i) std::copy(row->data.begin(), row->data.end(), out->data.begin() + static_cast<std::ptrdiff_t>(i * n));
    Tensor* o = out.get();
    return record(out, [row, o, rows, n] {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < n; ++j) row->grad[j] += o->grad[i * n + j];
    });
}

Var Tape::take_cols(const Var& a, std::size_t n) {
    require_2d(a, "take_cols");
    const std::size_t m = a->rows(), c = a->cols();
    if (n > c) throw DimensionError("take_cols: " + std::to_string(n) + " of " + to_string(a->shape));
    auto out = make({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->data[i * n + j] = a->data[i * c + j];
    Tensor* o = out.get();
    return record(out, [a, o, m, n, c] {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) a->grad[i * c + j] += o->grad[i * n + j];
    });
}

void Tape::backward(const Var& loss) {
    if (consumed_) throw ContractError("backward called twice on the same tape");
    if (!loss || loss->size() != 1)
        throw ContractError("backward needs a scalar loss, got " + (loss ? to_string(loss->shape) : "null"));
    const bool on_tape = std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.output == loss; });
    if (!on_tape) throw ContractError("backward: loss was not recorded on this tape");
    consumed_ = true;
    loss->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backprop();
    for (const auto& n : nodes_)
        for (double g : n.output->grad)
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in backward");
}

}  // namespace alo::ad
