#include "rgcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rgcl/error.hpp"

namespace rgcl {

namespace {

std::string shape_str(const Tensor& t) {
    return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

Tape& tape_of(const Var& a) {
    require(a.tape() != nullptr, "operation on an unbound Var");
    return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
    require(a.tape() != nullptr && a.tape() == b.tape(), "operands live on different tapes");
    return *a.tape();
}

enum class Broadcast { same, row, column };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Broadcast::same;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::column;
    throw InvalidArgument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                          shape_str(b));
}

std::size_t b_index(Broadcast kind, const Tensor& a, std::size_t r, std::size_t c) {
    switch (kind) {
        case Broadcast::same:
            return r * a.cols() + c;
        case Broadcast::row:
            return c;
        case Broadcast::column:
            return r;
    }
    return 0;
}

// Reduces a gradient shaped like `a` back onto the broadcast operand shape.
Tensor reduce_to(Broadcast kind, const Tensor& grad, const Tensor& b_shape) {
    if (kind == Broadcast::same) return grad;
    Tensor out(b_shape.rows(), b_shape.cols());
    for (std::size_t r = 0; r < grad.rows(); ++r)
        for (std::size_t c = 0; c < grad.cols(); ++c) out[b_index(kind, grad, r, c)] += grad(r, c);
    return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

void check_no_nan(const Tensor& a, const char* op) {
    for (double v : a.values())
        if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
}

void check_segments(std::span<const std::size_t> ids, std::size_t rows, std::size_t num_segments,
                    const char* op) {
    require(ids.size() == rows, std::string(op) + ": segment id count " +
                                    std::to_string(ids.size()) + " != rows " +
                                    std::to_string(rows));
    for (std::size_t s : ids)
        require(s < num_segments, std::string(op) + ": segment id " + std::to_string(s) +
                                      " out of range [0," + std::to_string(num_segments) + ")");
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols)
        throw InvalidArgument("tensor value count " + std::to_string(values_.size()) +
                              " does not match shape " + std::to_string(rows) + "x" +
                              std::to_string(cols));
}

Tensor Tensor::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(n, 1, std::move(values));
}

double Tensor::item() const {
    if (size() != 1) throw InvalidArgument("item() on non-scalar tensor " + shape_str(*this));
    return values_[0];
}

const Tensor& Var::value() const { return tape_->value(id_); }

const Tensor& Gradients::of(const Var& leaf) const {
    auto it = grads_.find(leaf.id());
    if (it == grads_.end()) throw InvalidArgument("no gradient recorded for this leaf");
    return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (consumed_) throw InvalidArgument("tape already consumed by backward()");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    if (consumed_) throw InvalidArgument("tape already consumed by backward()");
    Node n;
    n.value = std::move(value);
    for (const Var& in : inputs) n.requires_grad = n.requires_grad || requires_grad(in.id());
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Tensor& grad) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = grad;
        return;
    }
    for (std::size_t i = 0; i < grad.size(); ++i) n.grad[i] += grad[i];
}

Gradients Tape::backward(const Var& loss) {
    if (consumed_) throw InvalidArgument("backward() called twice on the same tape");
    if (loss.tape() != this) throw InvalidArgument("loss is not recorded on this tape");
    if (loss.value().size() != 1)
        throw InvalidArgument("backward() needs a scalar loss, got " + shape_str(loss.value()));
    consumed_ = true;

    nodes_[loss.id()].grad = Tensor::scalar(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.is_leaf || n.grad.size() == 0) continue;
        Tensor g = n.retain ? n.grad : std::move(n.grad);
        n.backward(*this, g);
        n.backward = nullptr;
    }

    Gradients out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (!(n.is_leaf || n.retain) || !n.requires_grad) continue;
        out.grads_[i] = n.grad.size() ? std::move(n.grad) : Tensor(n.value.rows(), n.value.cols());
    }
    return out;
}

namespace ad {

Var matmul(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.cols() == B.rows(),
            "matmul: inner dimensions differ " + shape_str(A) + " x " + shape_str(B));
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out(i, j) += av * B(p, j);
        }
    return t.record(std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, const Tensor& g) {
        const Tensor& A = a.value();
        const Tensor& B = b.value();
        if (tp.requires_grad(a.id())) {
            Tensor ga(m, k);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g(i, j) * B(p, j);
                    ga(i, p) = s;
                }
            tp.accumulate(a, ga);
        }
        if (tp.requires_grad(b.id())) {
            Tensor gb(k, n);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A(i, p);
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb(p, j) += av * g(i, j);
                }
            tp.accumulate(b, gb);
        }
    });
}

Var transpose(const Var& a) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    Tensor out(A.cols(), A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) out(c, r) = A(r, c);
    return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor ga(g.cols(), g.rows());
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) = g(r, c);
        tp.accumulate(a, ga);
    });
}

Var add(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const Broadcast kind = broadcast_kind(A, B, "add");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) += B[b_index(kind, A, r, c)];
    return t.record(std::move(out), {a, b}, [a, b, kind](Tape& tp, const Tensor& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b.id())) tp.accumulate(b, reduce_to(kind, g, b.value()));
    });
}

Var sub(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const Broadcast kind = broadcast_kind(A, B, "sub");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) -= B[b_index(kind, A, r, c)];
    return t.record(std::move(out), {a, b}, [a, b, kind](Tape& tp, const Tensor& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b.id())) {
            Tensor gb = reduce_to(kind, g, b.value());
            for (double& v : gb.values()) v = -v;
            tp.accumulate(b, gb);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const Broadcast kind = broadcast_kind(A, B, "mul");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) *= B[b_index(kind, A, r, c)];
    return t.record(std::move(out), {a, b}, [a, b, kind](Tape& tp, const Tensor& g) {
        const Tensor& A = a.value();
        const Tensor& B = b.value();
        if (tp.requires_grad(a.id())) {
            Tensor ga = g;
            for (std::size_t r = 0; r < A.rows(); ++r)
                for (std::size_t c = 0; c < A.cols(); ++c) ga(r, c) *= B[b_index(kind, A, r, c)];
            tp.accumulate(a, ga);
        }
        if (tp.requires_grad(b.id())) {
            Tensor prod = g;
            for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= A[i];
            tp.accumulate(b, reduce_to(kind, prod, B));
        }
    });
}

Var affine(const Var& a, double factor, double offset) {
    Tape& t = tape_of(a);
    Tensor out = map(a.value(), [=](double v) { return factor * v + offset; });
    return t.record(std::move(out), {a}, [a, factor](Tape& tp, const Tensor& g) {
        tp.accumulate(a, map(g, [=](double v) { return factor * v; }));
    });
}

Var scale(const Var& a, double factor) { return affine(a, factor, 0.0); }

Var neg(const Var& a) { return affine(a, -1.0, 0.0); }

Var relu(const Var& a) {
    Tape& t = tape_of(a);
    Tensor out = map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
    return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        const Tensor& A = a.value();
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (!(A[i] > 0.0)) ga[i] = 0.0;
        tp.accumulate(a, ga);
    });
}

Var sigmoid(const Var& a) {
    Tape& t = tape_of(a);
    Tensor out = map(a.value(), [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
    Tensor y = out;
    return t.record(std::move(out), {a}, [a, y](Tape& tp, const Tensor& g) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i] * (1.0 - y[i]);
        tp.accumulate(a, ga);
    });
}

Var exp(const Var& a) {
    Tape& t = tape_of(a);
    Tensor out = map(a.value(), [](double v) { return std::exp(v); });
    Tensor saved = out;
    return t.record(std::move(out), {a}, [a, saved](Tape& tp, const Tensor& g) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= saved[i];
        tp.accumulate(a, ga);
    });
}

Var log(const Var& a) {
    Tape& t = tape_of(a);
    for (double v : a.value().values())
        if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
    Tensor out = map(a.value(), [](double v) { return std::log(v); });
    return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        const Tensor& A = a.value();
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] /= A[i];
        tp.accumulate(a, ga);
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Tape& t = tape_of(a);
    require(lo <= hi, "clamp: lo > hi");
    Tensor out = map(a.value(), [=](double v) { return std::clamp(v, lo, hi); });
    return t.record(std::move(out), {a}, [a, lo, hi](Tape& tp, const Tensor& g) {
        const Tensor& A = a.value();
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (A[i] < lo || A[i] > hi) ga[i] = 0.0;
        tp.accumulate(a, ga);
    });
}

Var segment_softmax(const Var& a, std::span<const std::size_t> segment_ids,
                    std::size_t num_segments) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    require(A.cols() == 1, "segment_softmax: expects a column vector, got " + shape_str(A));
    check_segments(segment_ids, A.rows(), num_segments, "segment_softmax");
    check_no_nan(A, "softmax");

    std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
    std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < ids.size(); ++i) seg_max[ids[i]] = std::max(seg_max[ids[i]], A[i]);
    Tensor out(A.rows(), 1);
    std::vector<double> seg_sum(num_segments, 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out[i] = std::exp(A[i] - seg_max[ids[i]]);
        seg_sum[ids[i]] += out[i];
    }
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] /= seg_sum[ids[i]];

    Tensor y = out;
    return t.record(std::move(out), {a},
                    [a, y, ids = std::move(ids), num_segments](Tape& tp, const Tensor& g) {
                        std::vector<double> dot(num_segments, 0.0);
                        for (std::size_t i = 0; i < ids.size(); ++i) dot[ids[i]] += g[i] * y[i];
                        Tensor ga(y.rows(), 1);
                        for (std::size_t i = 0; i < ids.size(); ++i)
                            ga[i] = y[i] * (g[i] - dot[ids[i]]);
                        tp.accumulate(a, ga);
                    });
}

Var softmax(const Var& a) {
    const Tensor& A = a.value();
    require(A.rows() == 1 || A.cols() == 1, "softmax: expects a vector, got " + shape_str(A));
    const bool as_row = A.rows() == 1 && A.cols() > 1;
    Var col = as_row ? transpose(a) : a;
    std::vector<std::size_t> ids(col.rows(), 0);
    Var out = segment_softmax(col, ids, 1);
    return as_row ? transpose(out) : out;
}

Var segment_sum(const Var& a, std::span<const std::size_t> segment_ids, std::size_t num_segments) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    check_segments(segment_ids, A.rows(), num_segments, "segment_sum");
    std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
    const std::size_t d = A.cols();
    Tensor out(num_segments, d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) out(ids[i], c) += A(i, c);
    return t.record(std::move(out), {a}, [a, ids = std::move(ids), d](Tape& tp, const Tensor& g) {
        Tensor ga(ids.size(), d);
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t c = 0; c < d; ++c) ga(i, c) = g(ids[i], c);
        tp.accumulate(a, ga);
    });
}

Var segment_mean(const Var& a, std::span<const std::size_t> segment_ids,
                 std::size_t num_segments) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    check_segments(segment_ids, A.rows(), num_segments, "segment_mean");
    std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
    std::vector<double> inv_count(num_segments, 0.0);
    for (std::size_t s : ids) inv_count[s] += 1.0;
    for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
    const std::size_t d = A.cols();
    Tensor out(num_segments, d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) out(ids[i], c) += A(i, c) * inv_count[ids[i]];
    return t.record(std::move(out), {a},
                    [a, ids = std::move(ids), inv_count = std::move(inv_count), d](
                        Tape& tp, const Tensor& g) {
                        Tensor ga(ids.size(), d);
                        for (std::size_t i = 0; i < ids.size(); ++i)
                            for (std::size_t c = 0; c < d; ++c)
                                ga(i, c) = g(ids[i], c) * inv_count[ids[i]];
                        tp.accumulate(a, ga);
                    });
}

Var scatter_edges(const Var& a, std::span<const std::pair<std::size_t, std::size_t>> edges,
                  std::size_t num_rows, std::span<const double> weights) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    require(weights.empty() || weights.size() == edges.size(),
            "scatter_edges: weight count does not match edge count");
    for (const auto& [src, dst] : edges)
        require(src < A.rows() && dst < num_rows, "scatter_edges: edge endpoint out of range");
    std::vector<std::pair<std::size_t, std::size_t>> e(edges.begin(), edges.end());
    std::vector<double> w(weights.begin(), weights.end());
    const std::size_t d = A.cols();
    Tensor out(num_rows, d);
    for (std::size_t k = 0; k < e.size(); ++k) {
        const double wk = w.empty() ? 1.0 : w[k];
        for (std::size_t c = 0; c < d; ++c) out(e[k].second, c) += wk * A(e[k].first, c);
    }
    const std::size_t n_in = A.rows();
    return t.record(std::move(out), {a},
                    [a, e = std::move(e), w = std::move(w), d, n_in](Tape& tp, const Tensor& g) {
                        Tensor ga(n_in, d);
                        for (std::size_t k = 0; k < e.size(); ++k) {
                            const double wk = w.empty() ? 1.0 : w[k];
                            for (std::size_t c = 0; c < d; ++c)
                                ga(e[k].first, c) += wk * g(e[k].second, c);
                        }
                        tp.accumulate(a, ga);
                    });
}

Var l2_normalize(const Var& a) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    const std::size_t n = A.rows(), d = A.cols();
    std::vector<double> norms(n, 0.0);
    Tensor out = A;
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += A(r, c) * A(r, c);
        norms[r] = std::sqrt(s);
        if (norms[r] < kNormEpsilon) continue;
        for (std::size_t c = 0; c < d; ++c) out(r, c) /= norms[r];
    }
    Tensor y = out;
    return t.record(std::move(out), {a},
                    [a, y, norms = std::move(norms), n, d](Tape& tp, const Tensor& g) {
                        Tensor ga = g;
                        for (std::size_t r = 0; r < n; ++r) {
                            if (norms[r] < kNormEpsilon) continue;
                            double dot = 0.0;
                            for (std::size_t c = 0; c < d; ++c) dot += y(r, c) * g(r, c);
                            for (std::size_t c = 0; c < d; ++c)
                                ga(r, c) = (g(r, c) - y(r, c) * dot) / norms[r];
                        }
                        tp.accumulate(a, ga);
                    });
}

Var sum(const Var& a) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    double s = 0.0;
    for (double v : A.values()) s += v;
    const std::size_t r = A.rows(), c = A.cols();
    return t.record(Tensor::scalar(s), {a}, [a, r, c](Tape& tp, const Tensor& g) {
        tp.accumulate(a, Tensor(r, c, g[0]));
    });
}

Var mean(const Var& a) {
    const std::size_t n = a.value().size();
    require(n > 0, "mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    const std::size_t d = A.cols();
    Tensor out(idx.size(), d);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < A.rows(), "gather_rows: row index out of range");
        for (std::size_t c = 0; c < d; ++c) out(i, c) = A(idx[i], c);
    }
    const std::size_t n_in = A.rows();
    return t.record(std::move(out), {a}, [a, idx = std::move(idx), d, n_in](Tape& tp,
                                                                             const Tensor& g) {
        Tensor ga(n_in, d);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < d; ++c) ga(idx[i], c) += g(i, c);
        tp.accumulate(a, ga);
    });
}

Var gather_entries(const Var& a,
                   std::span<const std::pair<std::size_t, std::size_t>> entries) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    std::vector<std::pair<std::size_t, std::size_t>> idx(entries.begin(), entries.end());
    Tensor out(idx.size(), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i].first < A.rows() && idx[i].second < A.cols(),
                "gather_entries: index out of range");
        out[i] = A(idx[i].first, idx[i].second);
    }
    const std::size_t r = A.rows(), c = A.cols();
    return t.record(std::move(out), {a}, [a, idx = std::move(idx), r, c](Tape& tp,
                                                                          const Tensor& g) {
        Tensor ga(r, c);
        for (std::size_t i = 0; i < idx.size(); ++i) ga(idx[i].first, idx[i].second) += g[i];
        tp.accumulate(a, ga);
    });
}

Var concat_cols(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rows() == B.rows(), "concat_cols: row counts differ");
    const std::size_t n = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor out(n, ca + cb);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out(r, c) = A(r, c);
        for (std::size_t c = 0; c < cb; ++c) out(r, ca + c) = B(r, c);
    }
    return t.record(std::move(out), {a, b}, [a, b, n, ca, cb](Tape& tp, const Tensor& g) {
        Tensor ga(n, ca), gb(n, cb);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
            for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
        }
        tp.accumulate(a, ga);
        tp.accumulate(b, gb);
    });
}

Var masked_row_logsumexp(const Var& a, const std::vector<std::vector<bool>>& mask) {
    Tape& t = tape_of(a);
    const Tensor& A = a.value();
    const std::size_t n = A.rows(), d = A.cols();
    require(mask.size() == n, "masked_row_logsumexp: mask row count mismatch");
    check_no_nan(A, "masked_row_logsumexp");
    Tensor out(n, 1);
    Tensor weights(n, d);  // softmax over the masked entries of each row
    for (std::size_t r = 0; r < n; ++r) {
        require(mask[r].size() == d, "masked_row_logsumexp: mask column count mismatch");
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < d; ++c)
            if (mask[r][c]) m = std::max(m, A(r, c));
        require(std::isfinite(m), "masked_row_logsumexp: row selects no finite entry");
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c)
            if (mask[r][c]) {
                weights(r, c) = std::exp(A(r, c) - m);
                s += weights(r, c);
            }
        out[r] = m + std::log(s);
        for (std::size_t c = 0; c < d; ++c) weights(r, c) /= s;
    }
    return t.record(std::move(out), {a}, [a, weights, n, d](Tape& tp, const Tensor& g) {
        Tensor ga(n, d);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) ga(r, c) = g[r] * weights(r, c);
        tp.accumulate(a, ga);
    });
}

}  // namespace ad
}  // namespace rgcl
