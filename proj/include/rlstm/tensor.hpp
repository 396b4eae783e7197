#ifndef RLSTM_TENSOR_HPP
#define RLSTM_TENSOR_HPP

// Define-by-run reverse-mode automatic differentiation over dense row-major
// Eigen matrices. A Graph is an append-only tape; Tensor is a cheap handle
// into it. Every value is two-dimensional: vectors are 1xN, scalars 1x1.

#include "rlstm/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace rlstm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = Matrix<double>;
using Index = Eigen::Index;

/// Trainable storage living outside any graph. Gradients from every graph
/// that binds the parameter accumulate into `grad` until zero_grad().
template <typename Scalar>
struct Parameter {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad = true;

    Parameter() = default;
    explicit Parameter(Matrix<Scalar> v)
        : value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols()))
    {
    }

    Index size() const { return value.size(); }
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Graph;

template <typename Scalar>
class Tensor {
public:
    Tensor() = default;
    Tensor(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

    const Matrix<Scalar>& value() const { return graph_->value(id_); }
    /// Accumulated gradient of a leaf created with Graph::leaf().
    const Matrix<Scalar>& grad() const { return graph_->leaf_grad(id_); }
    bool requires_grad() const { return graph_->requires_grad(id_); }

    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    std::array<Index, 2> shape() const { return {rows(), cols()}; }
    bool is_scalar() const { return rows() == 1 && cols() == 1; }

    Graph<Scalar>& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    Graph<Scalar>* graph_ = nullptr;
    std::size_t id_ = 0;
};

inline std::string shape_str(Index rows, Index cols)
{
    std::ostringstream os;
    os << '[' << rows << 'x' << cols << ']';
    return os.str();
}

template <typename Scalar>
std::string shape_str(const Tensor<Scalar>& t)
{
    return shape_str(t.rows(), t.cols());
}

template <typename Scalar>
class Graph {
public:
    using MatrixType = Matrix<Scalar>;
    using Adjoints = std::vector<MatrixType>;
    /// Receives the node's output adjoint and accumulates into input adjoints.
    using BackwardFn = std::function<void(const Graph&, Adjoints&, const MatrixType&)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Tensor<Scalar> constant(MatrixType value) { return push(std::move(value), nullptr, false, {}, nullptr); }

    /// Leaf whose gradient is retained on the node itself.
    Tensor<Scalar> leaf(MatrixType value, bool requires_grad = true)
    {
        auto t = push(std::move(value), nullptr, requires_grad, {}, nullptr);
        nodes_.back().is_leaf = true;
        return t;
    }

    /// Leaf aliasing external parameter storage; gradients flow into p.grad.
    /// The parameter must outlive the graph and stay unmodified until backward returns.
    Tensor<Scalar> parameter(Parameter<Scalar>& p)
    {
        auto t = push(MatrixType{}, &p.value, p.requires_grad, {}, nullptr);
        nodes_.back().is_leaf = true;
        nodes_.back().sink = &p;
        return t;
    }

    /// Read-only view of external storage (no gradient).
    Tensor<Scalar> view(const MatrixType& value) { return push(MatrixType{}, &value, false, {}, nullptr); }

    /// Appends an operation node. requires_grad is inherited from the inputs.
    Tensor<Scalar> record(MatrixType value, std::initializer_list<Tensor<Scalar>> inputs, BackwardFn fn)
    {
        bool rg = false;
        for (const auto& in : inputs) {
            assert(&in.graph() == this && "tensor from a different graph");
            rg = rg || requires_grad(in.id());
        }
        return push(std::move(value), nullptr, rg, std::move(fn), nullptr);
    }

    const MatrixType& value(std::size_t id) const
    {
        const Node& n = nodes_[id];
        return n.external != nullptr ? *n.external : n.value;
    }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const MatrixType& leaf_grad(std::size_t id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Each node is visited once, in reverse
    /// append order. Leaf gradients accumulate across calls.
    void backward(const Tensor<Scalar>& loss)
    {
        if (!loss.is_scalar())
            throw ContractError("backward: loss must be a scalar, got " + shape_str(loss));
        Adjoints adj(loss.id() + 1);
        adj[loss.id()] = MatrixType::Ones(1, 1);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            if (adj[i].size() == 0)
                continue;
            Node& n = nodes_[i];
            if (n.backward)
                n.backward(*this, adj, adj[i]);
            if (n.is_leaf && n.requires_grad) {
                if (n.sink != nullptr) {
                    n.sink->grad += adj[i];
                } else {
                    if (n.grad.size() == 0)
                        n.grad = MatrixType::Zero(n.value.rows(), n.value.cols());
                    n.grad += adj[i];
                }
            }
            adj[i].resize(0, 0);
        }
    }

    /// Adds `contribution` into the adjoint of `id` if that node needs a gradient.
    template <typename Expr>
    void accumulate(Adjoints& adj, std::size_t id, const Expr& contribution) const
    {
        if (!requires_grad(id))
            return;
        auto& a = adj[id];
        if (a.size() == 0)
            a = contribution;
        else
            a += contribution;
    }

private:
    struct Node {
        MatrixType value;
        const MatrixType* external = nullptr;
        MatrixType grad;
        bool requires_grad = false;
        bool is_leaf = false;
        BackwardFn backward;
        Parameter<Scalar>* sink = nullptr;
    };

    Tensor<Scalar> push(MatrixType value, const MatrixType* external, bool rg, BackwardFn fn,
                        Parameter<Scalar>* sink)
    {
        Node n;
        n.value = std::move(value);
        n.external = external;
        n.requires_grad = rg;
        n.backward = rg ? std::move(fn) : BackwardFn{};
        n.sink = sink;
#ifndef NDEBUG
        const MatrixType& v = external != nullptr ? *external : n.value;
        assert(v.allFinite() && "non-finite value recorded in graph");
#endif
        nodes_.push_back(std::move(n));
        return Tensor<Scalar>(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

namespace detail {

template <typename Scalar>
void require_same_graph(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    if (&a.graph() != &b.graph())
        throw ContractError("operands belong to different graphs");
}

/// Exact shape match, or b is a 1x1 scalar.
template <typename Scalar>
bool scalar_rhs(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    require_same_graph(a, b);
    if (a.shape() == b.shape())
        return false;
    if (b.is_scalar())
        return true;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

} // namespace detail

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    detail::require_same_graph(a, b);
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a) + " x " + shape_str(b));
    Matrix<Scalar> out = a.value() * b.value();
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(std::move(out), {a, b}, [ia, ib](const Graph<Scalar>& g, auto& adj, const auto& go) {
        if (g.requires_grad(ia))
            g.accumulate(adj, ia, go * g.value(ib).transpose());
        if (g.requires_grad(ib))
            g.accumulate(adj, ib, g.value(ia).transpose() * go);
    });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    // Scalar broadcast is allowed on either side.
    if (a.is_scalar() && !b.is_scalar())
        return add(b, a);
    const bool bcast = detail::scalar_rhs("add", a, b);
    Matrix<Scalar> out = bcast ? Matrix<Scalar>(a.value().array() + b.value()(0, 0)) : Matrix<Scalar>(a.value() + b.value());
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(std::move(out), {a, b}, [ia, ib, bcast](const Graph<Scalar>& g, auto& adj, const auto& go) {
        g.accumulate(adj, ia, go);
        if (bcast)
            g.accumulate(adj, ib, Matrix<Scalar>::Constant(1, 1, go.sum()));
        else
            g.accumulate(adj, ib, go);
    });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    const bool bcast = detail::scalar_rhs("sub", a, b);
    Matrix<Scalar> out = bcast ? Matrix<Scalar>(a.value().array() - b.value()(0, 0)) : Matrix<Scalar>(a.value() - b.value());
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(std::move(out), {a, b}, [ia, ib, bcast](const Graph<Scalar>& g, auto& adj, const auto& go) {
        g.accumulate(adj, ia, go);
        if (bcast)
            g.accumulate(adj, ib, Matrix<Scalar>::Constant(1, 1, -go.sum()));
        else
            g.accumulate(adj, ib, -go);
    });
}

/// Hadamard product (or scalar broadcast).
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    if (a.is_scalar() && !b.is_scalar())
        return mul(b, a);
    const bool bcast = detail::scalar_rhs("mul", a, b);
    Matrix<Scalar> out = bcast ? Matrix<Scalar>(a.value() * b.value()(0, 0))
                               : Matrix<Scalar>(a.value().cwiseProduct(b.value()));
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(std::move(out), {a, b}, [ia, ib, bcast](const Graph<Scalar>& g, auto& adj, const auto& go) {
        const auto& va = g.value(ia);
        const auto& vb = g.value(ib);
        if (bcast) {
            if (g.requires_grad(ia))
                g.accumulate(adj, ia, go * vb(0, 0));
            if (g.requires_grad(ib))
                g.accumulate(adj, ib, Matrix<Scalar>::Constant(1, 1, go.cwiseProduct(va).sum()));
        } else {
            if (g.requires_grad(ia))
                g.accumulate(adj, ia, go.cwiseProduct(vb));
            if (g.requires_grad(ib))
                g.accumulate(adj, ib, go.cwiseProduct(va));
        }
    });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s)
{
    const auto ia = a.id();
    return a.graph().record(a.value() * s, {a}, [ia, s](const Graph<Scalar>& g, auto& adj, const auto& go) {
        g.accumulate(adj, ia, go * s);
    });
}

/// Elementwise tanh through the vectorized exp, which Eigen lacks for double
/// tanh. Small arguments use the series to avoid cancellation.
template <typename Scalar>
Matrix<Scalar> tanh_values(const Matrix<Scalar>& x)
{
    const auto xa = x.array();
    const auto series = xa * (Scalar(1) - xa.square() * (Scalar(1) / 3 - xa.square() * (Scalar(2) / 15)));
    const auto viaexp = Scalar(1) - Scalar(2) / ((Scalar(2) * xa).exp() + Scalar(1));
    return (xa.abs() < Scalar(1e-3)).select(series, viaexp).matrix();
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a)
{
    Matrix<Scalar> out = tanh_values(a.value());
    const auto ia = a.id();
    Matrix<Scalar> y = out;
    return a.graph().record(std::move(out), {a}, [ia, y = std::move(y)](const Graph<Scalar>& g, auto& adj, const auto& go) {
        g.accumulate(adj, ia, (go.array() * (Scalar(1) - y.array().square())).matrix());
    });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a)
{
    // exp(-x) may overflow to inf for very negative x; 1 / inf is the exact limit.
    Matrix<Scalar> out = (Scalar(1) + (-a.value().array()).exp()).inverse().matrix();
    const auto ia = a.id();
    Matrix<Scalar> y = out;
    return a.graph().record(std::move(out), {a}, [ia, y = std::move(y)](const Graph<Scalar>& g, auto& adj, const auto& go) {
        g.accumulate(adj, ia, (go.array() * y.array() * (Scalar(1) - y.array())).matrix());
    });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a)
{
    Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
    const auto ia = a.id();
    return a.graph().record(std::move(out), {a}, [ia](const Graph<Scalar>& g, auto& adj, const auto& go) {
        const auto& x = g.value(ia);
        g.accumulate(adj, ia, (x.array() > Scalar(0)).select(go.array(), Scalar(0)).matrix());
    });
}

enum class Elementwise { Add, Mul, Tanh, Sigmoid, Scale };

/// Dispatcher over the pointwise kinds. Binary kinds use `other`; Scale uses `factor`.
template <typename Scalar>
Tensor<Scalar> elementwise(const Tensor<Scalar>& x, Elementwise kind, const Tensor<Scalar>* other = nullptr,
                           Scalar factor = Scalar(1))
{
    switch (kind) {
    case Elementwise::Add:
    case Elementwise::Mul:
        if (other == nullptr)
            throw ContractError("elementwise: binary kind needs a second operand");
        return kind == Elementwise::Add ? add(x, *other) : mul(x, *other);
    case Elementwise::Tanh:
        return tanh(x);
    case Elementwise::Sigmoid:
        return sigmoid(x);
    case Elementwise::Scale:
        return scale(x, factor);
    }
    throw ContractError("elementwise: unknown kind");
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a)
{
    const auto ia = a.id();
    const Index r = a.rows(), c = a.cols();
    return a.graph().record(Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a},
                            [ia, r, c](const Graph<Scalar>& g, auto& adj, const auto& go) {
                                g.accumulate(adj, ia, Matrix<Scalar>::Constant(r, c, go(0, 0)));
                            });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a)
{
    return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& x)
{
    Matrix<Scalar> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
    y.array().colwise() /= y.rowwise().sum().array();
    return y;
}

/// Adjoint of row-wise softmax given its output y and output adjoint gy.
template <typename Scalar, typename DerivedY, typename DerivedG>
Matrix<Scalar> softmax_rows_adjoint(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedG>& gy)
{
    const auto dots = gy.cwiseProduct(y).rowwise().sum().eval();
    return y.cwiseProduct(gy - dots.replicate(1, gy.cols()));
}

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x)
{
    Matrix<Scalar> y = softmax_rows_value<Scalar>(x.value());
    const auto ix = x.id();
    Matrix<Scalar> ycache = y;
    return x.graph().record(std::move(y), {x}, [ix, ycache = std::move(ycache)](const Graph<Scalar>& g, auto& adj, const auto& go) {
        g.accumulate(adj, ix, softmax_rows_adjoint<Scalar>(ycache, go));
    });
}

/// x·W + 1·b with b a 1xN row broadcast over rows.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b)
{
    detail::require_same_graph(x, w);
    detail::require_same_graph(x, b);
    if (x.cols() != w.rows())
        throw DimensionError("linear: input " + shape_str(x) + " does not fit weight " + shape_str(w));
    if (b.rows() != 1 || b.cols() != w.cols())
        throw DimensionError("linear: bias " + shape_str(b) + " does not fit weight " + shape_str(w));
    Matrix<Scalar> out = x.value() * w.value();
    out.rowwise() += b.value().row(0);
    const auto ix = x.id(), iw = w.id(), ib = b.id();
    return x.graph().record(std::move(out), {x, w, b}, [ix, iw, ib](const Graph<Scalar>& g, auto& adj, const auto& go) {
        if (g.requires_grad(ix))
            g.accumulate(adj, ix, go * g.value(iw).transpose());
        if (g.requires_grad(iw))
            g.accumulate(adj, iw, g.value(ix).transpose() * go);
        if (g.requires_grad(ib))
            g.accumulate(adj, ib, go.colwise().sum());
    });
}

/// Columns [begin, begin + count).
template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Index begin, Index count)
{
    if (begin < 0 || count <= 0 || begin + count > x.cols())
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") outside " + shape_str(x));
    const auto ix = x.id();
    const Index r = x.rows(), c = x.cols();
    return x.graph().record(x.value().middleCols(begin, count), {x},
                            [ix, r, c, begin, count](const Graph<Scalar>& g, auto& adj, const auto& go) {
                                Matrix<Scalar> full = Matrix<Scalar>::Zero(r, c);
                                full.middleCols(begin, count) = go;
                                g.accumulate(adj, ix, full);
                            });
}

/// Rows first, first + stride, first + 2·stride, ... (all that fit).
template <typename Scalar>
Tensor<Scalar> rows_strided(const Tensor<Scalar>& x, Index first, Index stride)
{
    if (stride <= 0 || first < 0 || first >= x.rows() || x.rows() % stride != 0)
        throw DimensionError("rows_strided: cannot take every " + std::to_string(stride) + "th row from " +
                             shape_str(x));
    const Index n = x.rows() / stride;
    Matrix<Scalar> out(n, x.cols());
    for (Index k = 0; k < n; ++k)
        out.row(k) = x.value().row(first + k * stride);
    const auto ix = x.id();
    const Index r = x.rows(), c = x.cols();
    return x.graph().record(std::move(out), {x}, [ix, r, c, n, first, stride](const Graph<Scalar>& g, auto& adj, const auto& go) {
        Matrix<Scalar> full = Matrix<Scalar>::Zero(r, c);
        for (Index k = 0; k < n; ++k)
            full.row(first + k * stride) = go.row(k);
        g.accumulate(adj, ix, full);
    });
}

/// Mean over all elements of the squared difference.
template <typename Scalar>
Tensor<Scalar> mse(const Tensor<Scalar>& pred, const Tensor<Scalar>& target)
{
    detail::require_same_graph(pred, target);
    if (pred.shape() != target.shape())
        throw DimensionError("mse: prediction " + shape_str(pred) + " vs target " + shape_str(target));
    const auto n = static_cast<Scalar>(pred.value().size());
    Matrix<Scalar> diff = pred.value() - target.value();
    const Scalar loss = diff.squaredNorm() / n;
    const auto ip = pred.id(), it = target.id();
    return pred.graph().record(Matrix<Scalar>::Constant(1, 1, loss), {pred, target},
                               [ip, it, n, diff = std::move(diff)](const Graph<Scalar>& g, auto& adj, const auto& go) {
                                   const Scalar k = Scalar(2) * go(0, 0) / n;
                                   g.accumulate(adj, ip, diff * k);
                                   g.accumulate(adj, it, diff * -k);
                               });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    return add(a, b);
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    return sub(a, b);
}

} // namespace rlstm

#endif // RLSTM_TENSOR_HPP
