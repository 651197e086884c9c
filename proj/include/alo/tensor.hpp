#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace alo::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles with an accumulated gradient of the same size.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    /// Rows of a 2-D tensor.
    std::size_t rows() const;
    /// Columns of a 2-D tensor.
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    void zero_grad();
};

/// Tensors are shared between the model that owns them and the tapes that
/// reference them during a pass.
using Var = std::shared_ptr<Tensor>;

Var make(Shape shape);
Var make(Shape shape, std::vector<double> values);
/// Value copy with no history.
Var detach(const Var& v);

/// Records operations in execution order and replays their local derivatives
/// in reverse. A tape serves exactly one forward pass; `backward` may be called
/// once, a second call throws `ContractError`.
class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var matmul(const Var& a, const Var& b);
    Var add(const Var& a, const Var& b);
    /// a[m×n] + row[1×n], broadcast over rows.
    Var add_row(const Var& a, const Var& row);
    /// Elementwise product.
    Var mul(const Var& a, const Var& b);
    Var scale(const Var& a, double factor);
    /// a · s where s holds a single element.
    Var scale_by(const Var& a, const Var& s);
    Var relu(const Var& a);
    Var tanh(const Var& a);
    Var sigmoid(const Var& a);
    Var softplus(const Var& a);
    /// Row-wise log softmax of a [b×c] tensor, c ≥ 2.
    Var log_softmax(const Var& z);
    /// mean_r(-logp[r, targets[r]]) as a 1-element tensor.
    Var nll_mean(const Var& logp, std::span<const int> targets);
    /// Sum of all elements.
    Var sum(const Var& a);
    Var reshape(const Var& a, Shape shape);
    /// Tile a [1×n] row into [rows×n].
    Var broadcast_rows(const Var& row, std::size_t rows);
    /// Select the first `n` columns of a 2-D tensor.
    Var take_cols(const Var& a, std::size_t n);

    /// Populate grads of everything upstream of `loss` (a 1-element tensor
    /// recorded on this tape). Gradients accumulate into existing grads.
    void backward(const Var& loss);

    /// Record an externally computed op. `backprop` must only add into the
    /// grads of tensors that were created before `out`.
    Var custom(Var out, std::function<void()> backprop) { return record(std::move(out), std::move(backprop)); }

    std::size_t size() const noexcept { return nodes_.size(); }
    bool consumed() const noexcept { return consumed_; }

   private:
    struct Node {
        Var output;
        std::function<void()> backprop;
    };

    Var record(Var out, std::function<void()> backprop);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace alo::ad
