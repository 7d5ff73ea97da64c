#pragma once

// Dense row-major f64 tensors, a tape-based reverse-mode autodiff graph, and
// the Adam optimizer. Only rank-1 and rank-2 tensors are supported; a rank-1
// tensor of length n behaves as a 1 x n row wherever a matrix is expected.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "catseq/rng.hpp"

namespace catseq {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : shape_{rows, cols}, data_(rows * cols, fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_.empty() || shape_.size() > 2)
            throw ShapeError("Tensor: only rank-1 and rank-2 tensors are supported");
        const auto expected = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                                              std::multiplies<>());
        if (expected != data_.size())
            throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(expected));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
        return Tensor({rows, cols}, std::vector<double>(values));
    }

    static Tensor vector(std::vector<double> values) {
        const auto n = values.size();
        return Tensor({n}, std::move(values));
    }

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1); }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool flag) { requires_grad_ = flag; }

    bool same_shape(const Tensor& other) const {
        return rows() == other.rows() && cols() == other.cols();
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::vector<double> row(std::size_t r) const {
        return {data_.begin() + static_cast<std::ptrdiff_t>(r * cols()),
                data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols())};
    }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    bool requires_grad_ = false;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap view(const Tensor& t) {
    return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

inline MutMap view(Tensor& t) {
    return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

}  // namespace detail

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor t(fan_in, fan_out);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

using ParamId = std::size_t;

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    std::uint64_t version = 0;
};

/// Owns every trainable tensor of a model together with its gradient slot.
class ParamStore {
public:
    ParamId add(std::string name, Tensor value) {
        value.set_requires_grad(true);
        Tensor grad(value.rows(), value.cols());
        params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad), 0});
        return params_.size() - 1;
    }

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](ParamId id) { return params_.at(id); }
    const Parameter& operator[](ParamId id) const { return params_.at(id); }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad() {
        for (auto& p : params_) p.grad.fill(0.0);
    }

    /// Replaces a value in place (e.g. after loading), bumping its version.
    void assign(ParamId id, const Tensor& value) {
        auto& p = params_.at(id);
        if (!p.value.same_shape(value))
            throw ShapeError("ParamStore::assign: shape mismatch for " + p.name);
        p.value.values() = value.values();
        ++p.version;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

private:
    std::vector<Parameter> params_;
};

enum class OpKind {
    constant,
    variable,
    param,
    matmul,
    add,
    add_row,
    sub,
    mul,
    concat,
    concat_rows,
    slice,
    transpose,
    relu,
    sigmoid,
    softmax_rows,
    layer_norm,
    scale,
    sum,
    mse,
};

using NodeId = std::size_t;

/// A single-use computation tape. Nodes are appended in topological order;
/// backward() walks them in reverse and accumulates parameter gradients into
/// the attached ParamStore.
class Graph {
public:
    explicit Graph(ParamStore* params = nullptr) : params_(params) {}

    NodeId constant(Tensor value) { return push_leaf(OpKind::constant, std::move(value), false); }

    /// Leaf whose gradient is retained (used for input-gradient checks).
    NodeId variable(Tensor value) { return push_leaf(OpKind::variable, std::move(value), true); }

    NodeId param(ParamId id) {
        if (!params_) throw std::logic_error("Graph::param: no ParamStore attached");
        if (auto it = std::find(param_ids_.begin(), param_ids_.end(), id); it != param_ids_.end())
            return param_nodes_[static_cast<std::size_t>(it - param_ids_.begin())];
        const auto& p = (*params_)[id];
        NodeId n = push_leaf(OpKind::param, p.value, true);
        nodes_[n].param = id;
        nodes_[n].version = p.version;
        param_ids_.push_back(id);
        param_nodes_.push_back(n);
        return n;
    }

    /// Generic entry point over the primitive op set. Ops that need an extra
    /// scalar (scale, layer_norm epsilon) take it from `arg`.
    NodeId apply(OpKind kind, std::span<const NodeId> inputs, double arg = 0.0) {
        auto need = [&](std::size_t n) {
            if (inputs.size() != n)
                throw ShapeError("Graph::apply: wrong arity for op");
        };
        switch (kind) {
            case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
            case OpKind::add: need(2); return add(inputs[0], inputs[1]);
            case OpKind::sub: need(2); return sub(inputs[0], inputs[1]);
            case OpKind::mul: need(2); return mul(inputs[0], inputs[1]);
            case OpKind::concat: return concat(std::vector<NodeId>(inputs.begin(), inputs.end()));
            case OpKind::relu: need(1); return relu(inputs[0]);
            case OpKind::sigmoid: need(1); return sigmoid(inputs[0]);
            case OpKind::softmax_rows: need(1); return softmax_rows(inputs[0]);
            case OpKind::layer_norm: need(3); return layer_norm(inputs[0], inputs[1], inputs[2], arg > 0 ? arg : 1e-5);
            case OpKind::scale: need(1); return scale(inputs[0], arg);
            case OpKind::transpose: need(1); return transpose(inputs[0]);
            case OpKind::sum: need(1); return sum(inputs[0]);
            case OpKind::mse: need(2); return mse(inputs[0], inputs[1]);
            default: throw std::invalid_argument("Graph::apply: op needs a dedicated builder");
        }
    }

    NodeId matmul(NodeId a, NodeId b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.cols() != B.rows())
            throw ShapeError("matmul: " + A.shape_string() + " x " + B.shape_string());
        Tensor out(A.rows(), B.cols());
        detail::view(out).noalias() = detail::view(A) * detail::view(B);
        return push(OpKind::matmul, {a, b}, std::move(out));
    }

    /// Elementwise sum; `b` may also be a 1 x cols row broadcast over rows.
    NodeId add(NodeId a, NodeId b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.same_shape(B)) {
            Tensor out = A;
            detail::view(out) += detail::view(B);
            return push(OpKind::add, {a, b}, std::move(out));
        }
        if (B.rows() == 1 && B.cols() == A.cols()) return add_row(a, b);
        throw ShapeError("add: " + A.shape_string() + " + " + B.shape_string());
    }

    NodeId add_row(NodeId a, NodeId bias) {
        const auto& A = value(a);
        const auto& B = value(bias);
        if (B.rows() != 1 || B.cols() != A.cols())
            throw ShapeError("add_row: " + A.shape_string() + " + " + B.shape_string());
        Tensor out = A;
        detail::view(out).rowwise() += detail::view(B).row(0);
        return push(OpKind::add_row, {a, bias}, std::move(out));
    }

    NodeId sub(NodeId a, NodeId b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("sub: " + A.shape_string() + " - " + B.shape_string());
        Tensor out = A;
        detail::view(out) -= detail::view(B);
        return push(OpKind::sub, {a, b}, std::move(out));
    }

    NodeId mul(NodeId a, NodeId b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("mul: " + A.shape_string() + " * " + B.shape_string());
        Tensor out = A;
        detail::view(out).array() *= detail::view(B).array();
        return push(OpKind::mul, {a, b}, std::move(out));
    }

    /// Column-wise concatenation of tensors with equal row counts.
    NodeId concat(std::vector<NodeId> parts) {
        if (parts.empty()) throw ShapeError("concat: no inputs");
        const std::size_t rows = value(parts[0]).rows();
        std::size_t cols = 0;
        for (auto p : parts) {
            if (value(p).rows() != rows) throw ShapeError("concat: row counts differ");
            cols += value(p).cols();
        }
        Tensor out(rows, cols);
        std::size_t offset = 0;
        for (auto p : parts) {
            const auto& P = value(p);
            detail::view(out).middleCols(static_cast<Eigen::Index>(offset),
                                         static_cast<Eigen::Index>(P.cols())) = detail::view(P);
            offset += P.cols();
        }
        return push(OpKind::concat, std::move(parts), std::move(out));
    }

    NodeId concat_rows(std::vector<NodeId> parts) {
        if (parts.empty()) throw ShapeError("concat_rows: no inputs");
        const std::size_t cols = value(parts[0]).cols();
        std::size_t rows = 0;
        for (auto p : parts) {
            if (value(p).cols() != cols) throw ShapeError("concat_rows: column counts differ");
            rows += value(p).rows();
        }
        Tensor out(rows, cols);
        std::size_t offset = 0;
        for (auto p : parts) {
            const auto& P = value(p);
            std::copy(P.data().begin(), P.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
            offset += P.rows();
        }
        return push(OpKind::concat_rows, std::move(parts), std::move(out));
    }

    NodeId slice(NodeId a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
        const auto& A = value(a);
        if (row0 + nrows > A.rows() || col0 + ncols > A.cols())
            throw ShapeError("slice: window out of range for " + A.shape_string());
        Tensor out(nrows, ncols);
        detail::view(out) = detail::view(A).block(static_cast<Eigen::Index>(row0), static_cast<Eigen::Index>(col0),
                                                   static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
        NodeId n = push(OpKind::slice, {a}, std::move(out));
        nodes_[n].aux = {row0, col0};
        return n;
    }

    NodeId transpose(NodeId a) {
        const auto& A = value(a);
        Tensor out(A.cols(), A.rows());
        detail::view(out) = detail::view(A).transpose();
        return push(OpKind::transpose, {a}, std::move(out));
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
        return push(OpKind::relu, {a}, std::move(out));
    }

    NodeId sigmoid(NodeId a) {
        Tensor out = value(a);
        for (auto& v : out.data()) v = stable_sigmoid(v);
        return push(OpKind::sigmoid, {a}, std::move(out));
    }

    NodeId softmax_rows(NodeId a) {
        Tensor out = value(a);
        auto m = detail::view(out);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            auto row = m.row(r);
            row.array() -= row.maxCoeff();
            row = row.array().exp().matrix();
            row /= row.sum();
        }
        return push(OpKind::softmax_rows, {a}, std::move(out));
    }

    /// Row-wise layer normalization with per-column gain and offset (1 x cols each).
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5) {
        const auto& X = value(x);
        const auto& G = value(gain);
        const auto& B = value(bias);
        if (G.rows() != 1 || B.rows() != 1 || G.cols() != X.cols() || B.cols() != X.cols())
            throw ShapeError("layer_norm: gain/bias must be 1 x " + std::to_string(X.cols()));
        const auto rows = static_cast<Eigen::Index>(X.rows());
        const auto cols = static_cast<Eigen::Index>(X.cols());
        Tensor normalized(X.rows(), X.cols());
        Tensor inv_std(X.rows(), 1);
        auto xm = detail::view(X);
        auto nm = detail::view(normalized);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const double mean = xm.row(r).mean();
            const double var = (xm.row(r).array() - mean).square().sum() / static_cast<double>(cols);
            const double istd = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(r)] = istd;
            nm.row(r) = (xm.row(r).array() - mean) * istd;
        }
        Tensor out(X.rows(), X.cols());
        auto om = detail::view(out);
        om = nm.array().rowwise() * detail::view(G).row(0).array();
        om.rowwise() += detail::view(B).row(0);
        NodeId n = push(OpKind::layer_norm, {x, gain, bias}, std::move(out));
        nodes_[n].saved = {std::move(normalized), std::move(inv_std)};
        return n;
    }

    NodeId scale(NodeId a, double factor) {
        Tensor out = value(a);
        detail::view(out) *= factor;
        NodeId n = push(OpKind::scale, {a}, std::move(out));
        nodes_[n].scalar = factor;
        return n;
    }

    NodeId sum(NodeId a) {
        return push(OpKind::sum, {a}, Tensor::scalar(detail::view(value(a)).sum()));
    }

    /// Mean over all elements of the squared difference.
    NodeId mse(NodeId a, NodeId b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("mse: " + A.shape_string() + " vs " + B.shape_string());
        if (A.size() == 0) throw ShapeError("mse: empty tensors");
        const double s = (detail::view(A) - detail::view(B)).squaredNorm() / static_cast<double>(A.size());
        return push(OpKind::mse, {a, b}, Tensor::scalar(s));
    }

    const Tensor& value(NodeId n) const { return nodes_.at(n).value; }

    /// Gradient of the last backward() loss with respect to node `n`.
    const Tensor& grad(NodeId n) const {
        if (!backward_done_) throw std::logic_error("Graph::grad: backward() has not run");
        return nodes_.at(n).grad;
    }

    OpKind kind(NodeId n) const { return nodes_.at(n).kind; }
    std::size_t node_count() const { return nodes_.size(); }

    void backward(NodeId loss) {
        if (backward_done_) throw std::logic_error("Graph::backward: graph already consumed");
        if (value(loss).size() != 1) throw ShapeError("Graph::backward: loss must be a scalar");
        for (std::size_t i = 0; i < param_ids_.size(); ++i) {
            if ((*params_)[param_ids_[i]].version != nodes_[param_nodes_[i]].version)
                throw std::logic_error("Graph::backward: parameter '" + (*params_)[param_ids_[i]].name +
                                       "' changed after it was recorded");
        }
        backward_done_ = true;
        for (auto& node : nodes_) node.grad = Tensor(node.value.rows(), node.value.cols());
        nodes_[loss].grad[0] = 1.0;
        for (std::size_t i = loss + 1; i-- > 0;) propagate(i);
        for (std::size_t i = 0; i < param_ids_.size(); ++i) {
            auto& p = (*params_)[param_ids_[i]];
            detail::view(p.grad) += detail::view(nodes_[param_nodes_[i]].grad);
        }
    }

    static double stable_sigmoid(double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    }

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;
        std::vector<Tensor> saved;
        std::vector<std::size_t> aux;
        double scalar = 0.0;
        ParamId param = 0;
        std::uint64_t version = 0;
    };

    NodeId push_leaf(OpKind kind, Tensor value, bool tracked) {
        check_mutable();
        if (!value.all_finite()) throw NumericError("Graph: non-finite leaf value");
        value.set_requires_grad(tracked);
        nodes_.push_back(Node{kind, {}, std::move(value), {}, {}, {}, 0.0, 0, 0});
        return nodes_.size() - 1;
    }

    NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value) {
        check_mutable();
        if (!value.all_finite()) throw NumericError("Graph: non-finite output from op");
        nodes_.push_back(Node{kind, std::move(inputs), std::move(value), {}, {}, {}, 0.0, 0, 0});
        return nodes_.size() - 1;
    }

    void check_mutable() const {
        if (backward_done_) throw std::logic_error("Graph: cannot record ops after backward()");
    }

    void propagate(std::size_t i) {
        using detail::view;
        Node& node = nodes_[i];
        const Tensor& g = node.grad;
        auto gm = view(g);
        auto in_grad = [&](std::size_t k) { return view(nodes_[node.inputs[k]].grad); };
        switch (node.kind) {
            case OpKind::constant:
            case OpKind::variable:
            case OpKind::param:
                break;
            case OpKind::matmul: {
                const auto& A = nodes_[node.inputs[0]].value;
                const auto& B = nodes_[node.inputs[1]].value;
                in_grad(0).noalias() += gm * view(B).transpose();
                in_grad(1).noalias() += view(A).transpose() * gm;
                break;
            }
            case OpKind::add:
            case OpKind::sub:
                in_grad(0) += gm;
                if (node.kind == OpKind::add) in_grad(1) += gm;
                else in_grad(1) -= gm;
                break;
            case OpKind::add_row:
                in_grad(0) += gm;
                in_grad(1) += gm.colwise().sum();
                break;
            case OpKind::mul: {
                const auto& A = nodes_[node.inputs[0]].value;
                const auto& B = nodes_[node.inputs[1]].value;
                in_grad(0).array() += gm.array() * view(B).array();
                in_grad(1).array() += gm.array() * view(A).array();
                break;
            }
            case OpKind::concat: {
                Eigen::Index offset = 0;
                for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                    auto ig = in_grad(k);
                    ig += gm.middleCols(offset, ig.cols());
                    offset += ig.cols();
                }
                break;
            }
            case OpKind::concat_rows: {
                Eigen::Index offset = 0;
                for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                    auto ig = in_grad(k);
                    ig += gm.middleRows(offset, ig.rows());
                    offset += ig.rows();
                }
                break;
            }
            case OpKind::slice:
                in_grad(0).block(static_cast<Eigen::Index>(node.aux[0]), static_cast<Eigen::Index>(node.aux[1]),
                                 gm.rows(), gm.cols()) += gm;
                break;
            case OpKind::transpose:
                in_grad(0) += gm.transpose();
                break;
            case OpKind::relu: {
                auto ig = in_grad(0);
                auto xv = view(nodes_[node.inputs[0]].value);
                ig.array() += (xv.array() > 0.0).select(gm.array(), 0.0);
                break;
            }
            case OpKind::sigmoid: {
                auto y = view(node.value);
                in_grad(0).array() += gm.array() * y.array() * (1.0 - y.array());
                break;
            }
            case OpKind::softmax_rows: {
                auto y = view(node.value);
                auto ig = in_grad(0);
                for (Eigen::Index r = 0; r < y.rows(); ++r) {
                    const double dot = gm.row(r).dot(y.row(r));
                    ig.row(r).array() += y.row(r).array() * (gm.row(r).array() - dot);
                }
                break;
            }
            case OpKind::layer_norm: {
                const Tensor& xhat = node.saved[0];
                const Tensor& inv_std = node.saved[1];
                auto xh = view(xhat);
                auto gain = view(nodes_[node.inputs[1]].value);
                in_grad(1) += (gm.array() * xh.array()).matrix().colwise().sum();
                in_grad(2) += gm.colwise().sum();
                auto ig = in_grad(0);
                const double cols = static_cast<double>(xh.cols());
                for (Eigen::Index r = 0; r < xh.rows(); ++r) {
                    Eigen::RowVectorXd dxhat = gm.row(r).array() * gain.row(0).array();
                    const double mean_d = dxhat.mean();
                    const double mean_dx = dxhat.dot(xh.row(r)) / cols;
                    ig.row(r).array() += inv_std[static_cast<std::size_t>(r)] *
                                         (dxhat.array() - mean_d - xh.row(r).array() * mean_dx);
                }
                break;
            }
            case OpKind::scale:
                in_grad(0) += node.scalar * gm;
                break;
            case OpKind::sum:
                in_grad(0).array() += g[0];
                break;
            case OpKind::mse: {
                auto A = view(nodes_[node.inputs[0]].value);
                auto B = view(nodes_[node.inputs[1]].value);
                const double f = 2.0 * g[0] / static_cast<double>(A.size());
                in_grad(0) += f * (A - B);
                in_grad(1) -= f * (A - B);
                break;
            }
        }
    }

    ParamStore* params_;
    std::vector<Node> nodes_;
    std::vector<ParamId> param_ids_;
    std::vector<NodeId> param_nodes_;
    bool backward_done_ = false;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;
};

inline AdamState make_adam_state(const ParamStore& params, AdamConfig config = {}) {
    if (!(config.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
    AdamState s{config, {}, {}, 0};
    for (const auto& p : params) {
        s.m.emplace_back(p.value.rows(), p.value.cols());
        s.v.emplace_back(p.value.rows(), p.value.cols());
    }
    return s;
}

/// One bias-corrected Adam update using the gradients stored in `params`.
/// Gradients are left untouched; callers zero them before the next pass.
inline void adam_step(ParamStore& params, AdamState& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: optimizer state does not match parameter count");
    if (!(state.config.lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    ParamId id = 0;
    for (auto& p : params) {
        auto& m = state.m[id];
        auto& v = state.v[id];
        if (!m.same_shape(p.value) || !v.same_shape(p.value) || !p.grad.same_shape(p.value))
            throw ShapeError("adam_step: shape mismatch for parameter '" + p.name + "'");
        auto w = p.value.data();
        auto g = p.grad.data();
        auto md = m.data();
        auto vd = v.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g[i];
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
        if (!p.value.all_finite()) throw NumericError("adam_step: parameter '" + p.name + "' became non-finite");
        ++p.version;
        ++id;
    }
}

/// Mean squared difference between two equal-shaped tensors (no graph).
inline double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mse: " + a.shape_string() + " vs " + b.shape_string());
    if (a.size() == 0) throw ShapeError("mse: empty tensors");
    return (detail::view(a) - detail::view(b)).squaredNorm() / static_cast<double>(a.size());
}

/// Epoch-level stopping rule: stop once the relative improvement of the epoch
/// mean loss stays below `tolerance` for `patience` consecutive epochs.
class ConvergenceMonitor {
public:
    ConvergenceMonitor(double tolerance = 1e-4, int patience = 5) : tolerance_(tolerance), patience_(patience) {}

    /// Records an epoch loss; returns true when training should stop.
    bool update(double loss) {
        if (has_prev_) {
            const double denom = std::max(std::abs(prev_), 1e-300);
            const double improvement = (prev_ - loss) / denom;
            stale_ = improvement < tolerance_ ? stale_ + 1 : 0;
        }
        prev_ = loss;
        has_prev_ = true;
        return stale_ >= patience_;
    }

private:
    double tolerance_;
    int patience_;
    double prev_ = 0.0;
    bool has_prev_ = false;
    int stale_ = 0;
};

}  // namespace catseq
