#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rgcl {

/// Dense row-major float64 matrix. Vectors are stored as n x 1 columns and
/// scalars as 1 x 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor column(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    const std::vector<double>& storage() const { return values_; }

    /// Value of a 1 x 1 tensor.
    double item() const;

    bool operator==(const Tensor& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradients of a loss with respect to leaves (and retained intermediates).
class Gradients {
public:
    const Tensor& of(const Var& leaf) const;
    bool contains(const Var& leaf) const { return grads_.count(leaf.id()) != 0; }

private:
    friend class Tape;
    std::unordered_map<std::size_t, Tensor> grads_;
};

/// Define-by-run recording of operations. Nodes are appended in evaluation
/// order, so reverse recording order is a valid reverse topological order.
/// A tape supports exactly one backward pass.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends the result of an op. `backward` receives d(loss)/d(output) and
    /// must route it to the inputs via accumulate().
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

    /// Keeps the gradient of an intermediate value so Gradients::of() can
    /// report it after backward().
    void retain_grad(const Var& v) { nodes_[v.id()].retain = true; }

    Gradients backward(const Var& loss);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    void accumulate(const Var& v, const Tensor& grad);

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        bool requires_grad = false;
        bool is_leaf = false;
        bool retain = false;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

namespace ad {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Elementwise binary ops. `b` may have the same shape as `a`, be a 1 x cols
// row (broadcast down rows) or a rows x 1 column (broadcast across columns).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double factor);
/// factor * a + offset
Var affine(const Var& a, double factor, double offset);
Var neg(const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// Clamp into [lo, hi]; gradient is zero where clamping is active.
Var clamp(const Var& a, double lo, double hi);

/// Softmax over all entries of a vector. Throws NumericError on NaN.
Var softmax(const Var& a);
/// Softmax of a column vector computed independently within each segment.
Var segment_softmax(const Var& a, std::span<const std::size_t> segment_ids,
                    std::size_t num_segments);

Var segment_sum(const Var& a, std::span<const std::size_t> segment_ids,
                std::size_t num_segments);
Var segment_mean(const Var& a, std::span<const std::size_t> segment_ids,
                 std::size_t num_segments);

/// Sparse aggregation: out[dst] += w_e * a[src] for every edge e = (src, dst).
/// Empty `weights` means unit weights.
Var scatter_edges(const Var& a, std::span<const std::pair<std::size_t, std::size_t>> edges,
                  std::size_t num_rows, std::span<const double> weights = {});

/// Row-wise L2 normalization; rows with norm below 1e-12 pass through as is.
Var l2_normalize(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
/// Picks entries a(r, c) into a k x 1 column.
Var gather_entries(const Var& a, std::span<const std::pair<std::size_t, std::size_t>> entries);
Var concat_cols(const Var& a, const Var& b);
/// Per-row log-sum-exp over the columns where mask(r, c) is true. Every row
/// must select at least one column.
Var masked_row_logsumexp(const Var& a, const std::vector<std::vector<bool>>& mask);

constexpr double kNormEpsilon = 1e-12;

}  // namespace ad
}  // namespace rgcl
