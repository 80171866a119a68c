#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "errors.hpp"

namespace cmvrp::ad {

// ---------------------------------------------------------------------------
// Array

/// Dense row-major array of doubles. Every array used by the tape is rank 2;
/// vectors are stored as 1 x n rows or n x 1 columns.
class Array {
public:
    Array() = default;

    Array(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Array(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) throw ContractViolation("array data length does not match shape");
    }

    static Array scalar(double v) { return Array(1, 1, v); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    bool same_shape(const Array& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    double item() const {
        if (data_.size() != 1) throw ContractViolation("item() on a non-scalar array");
        return data_[0];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Array&, const Array&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const Array& a) {
    return "(" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ")";
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap as_matrix(Array& a) {
    return MatrixMap(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}
inline ConstMatrixMap as_matrix(const Array& a) {
    return ConstMatrixMap(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

/// Named parameter arrays; iteration order is the lexicographic name order.
using ParameterSet = std::map<std::string, Array>;
using GradientMap = std::map<std::string, Array>;

inline double squared_norm(const GradientMap& grads) {
    double s = 0.0;
    for (const auto& [name, g] : grads)
        for (double v : g.values()) s += v * v;
    return s;
}

// Log-probability assigned to infeasible entries: finite, and exp() of it is exactly 0.
inline constexpr double kMaskedLogProb = -1e300;

// ---------------------------------------------------------------------------
// Tape

class Graph;

struct Var {
    Graph* graph = nullptr;
    int id = -1;
};

enum class Op {
    Constant,
    Parameter,
    MatMul,
    Add,
    AddRowBroadcast,
    Sub,
    Mul,
    Scale,
    Tanh,
    Sigmoid,
    Relu,
    Concat,
    SliceRows,
    Gather,
    Reshape,
    Sum,
    Mean,
    SegmentMean,
    MaskedLogSoftmax,
    Pick,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Parameter: return "parameter";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::AddRowBroadcast: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Relu: return "relu";
        case Op::Concat: return "concat";
        case Op::SliceRows: return "slice_rows";
        case Op::Gather: return "gather";
        case Op::Reshape: return "reshape";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::SegmentMean: return "segment_mean";
        case Op::MaskedLogSoftmax: return "masked_log_softmax";
        case Op::Pick: return "pick";
    }
    return "?";
}

struct Node {
    Op op = Op::Constant;
    Array value;
    const Array* external = nullptr;  // parameter leaves read their value in place
    std::string name;                 // parameter name
    std::vector<int> parents;
    std::vector<std::size_t> indices;  // gather rows, pick columns, concat sizes
    std::vector<unsigned char> mask;
    double scalar = 0.0;
    int axis = 0;
    bool requires_grad = false;

    const Array& val() const noexcept { return external ? *external : value; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order; backward walks it in reverse. Forward values are
/// computed eagerly and checked for NaN/Inf.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Array value) {
        Node n;
        n.op = Op::Constant;
        n.value = std::move(value);
        return push(std::move(n), "constant");
    }

    /// Leaf bound to a parameter array (read in place; the array must outlive
    /// the graph). Repeated requests for the same name return the same leaf.
    Var parameter(const std::string& name, const Array& value) {
        if (auto it = param_ids_.find(name); it != param_ids_.end()) return {this, it->second};
        Node n;
        n.op = Op::Parameter;
        n.external = &value;
        n.name = name;
        n.requires_grad = true;
        Var v = push(std::move(n), "parameter");
        param_ids_.emplace(name, v.id);
        return v;
    }

    Var parameter(const ParameterSet& params, const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractViolation("unknown parameter " + name);
        return parameter(name, it->second);
    }

    const Array& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].val(); }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

    /// Gradient of the last backward() target with respect to `v`; zeros if
    /// `v` does not influence it.
    Array grad(Var v) const {
        const auto& g = grads_.at(static_cast<std::size_t>(v.id));
        if (g.empty()) return Array(value(v).rows(), value(v).cols());
        return g;
    }

    /// Gradients of every parameter leaf, keyed by parameter name.
    GradientMap parameter_gradients() const {
        GradientMap out;
        for (const auto& [name, id] : param_ids_) out.emplace(name, grad({const_cast<Graph*>(this), id}));
        return out;
    }

    void backward(Var loss);

    // Forward operations -----------------------------------------------------
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var concat(std::span<const Var> parts, int axis);
    Var slice_rows(Var a, std::size_t begin, std::size_t end);
    Var gather(Var a, std::vector<std::size_t> rows);
    Var reshape(Var a, std::size_t rows, std::size_t cols);
    Var sum(Var a);
    Var mean(Var a);
    Var segment_mean(Var a, std::size_t group);
    Var masked_log_softmax(Var logits, std::vector<unsigned char> mask);
    Var pick(Var a, std::vector<std::size_t> cols);

private:
    Var push(Node n, const char* what) {
        for (int p : n.parents) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
        if (!n.val().all_finite()) throw NumericError(std::string("non-finite value produced by ") + what);
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    const Array& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val(); }

    Array& grad_slot(int id) {
        auto& g = grads_[static_cast<std::size_t>(id)];
        if (g.empty()) {
            const auto& v = val(id);
            g = Array(v.rows(), v.cols());
        }
        return g;
    }

    bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    void check_owner(Var v) const {
        if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractViolation("variable belongs to a different graph");
    }

    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<Array> grads_;
    std::map<std::string, int> param_ids_;
};

// ---------------------------------------------------------------------------
// Forward

inline Var Graph::matmul(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols() != B.rows()) throw ContractViolation("matmul shape mismatch " + shape_str(A) + " x " + shape_str(B));
    Node n;
    n.op = Op::MatMul;
    n.parents = {a.id, b.id};
    n.value = Array(A.rows(), B.cols());
    as_matrix(n.value).noalias() = as_matrix(A) * as_matrix(B);
    return push(std::move(n), "matmul");
}

/// Elementwise sum; `b` may also be a single row broadcast over the rows of `a`.
inline Var Graph::add(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const auto& A = value(a);
    const auto& B = value(b);
    Node n;
    n.parents = {a.id, b.id};
    n.value = A;
    if (A.same_shape(B)) {
        n.op = Op::Add;
        for (std::size_t i = 0; i < A.size(); ++i) n.value[i] += B[i];
    } else if (B.rows() == 1 && B.cols() == A.cols()) {
        n.op = Op::AddRowBroadcast;
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < A.cols(); ++c) n.value(r, c) += B[c];
    } else {
        throw ContractViolation("add shape mismatch " + shape_str(A) + " + " + shape_str(B));
    }
    return push(std::move(n), "add");
}

inline Var Graph::sub(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) throw ContractViolation("sub shape mismatch " + shape_str(A) + " - " + shape_str(B));
    Node n;
    n.op = Op::Sub;
    n.parents = {a.id, b.id};
    n.value = A;
    for (std::size_t i = 0; i < A.size(); ++i) n.value[i] -= B[i];
    return push(std::move(n), "sub");
}

inline Var Graph::mul(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) throw ContractViolation("mul shape mismatch " + shape_str(A) + " * " + shape_str(B));
    Node n;
    n.op = Op::Mul;
    n.parents = {a.id, b.id};
    n.value = A;
    for (std::size_t i = 0; i < A.size(); ++i) n.value[i] *= B[i];
    return push(std::move(n), "mul");
}

inline Var Graph::scale(Var a, double c) {
    check_owner(a);
    Node n;
    n.op = Op::Scale;
    n.parents = {a.id};
    n.scalar = c;
    n.value = value(a);
    for (auto& v : n.value.values()) v *= c;
    return push(std::move(n), "scale");
}

inline Var Graph::tanh(Var a) {
    check_owner(a);
    Node n;
    n.op = Op::Tanh;
    n.parents = {a.id};
    n.value = value(a);
    for (auto& v : n.value.values()) v = std::tanh(v);
    return push(std::move(n), "tanh");
}

inline Var Graph::sigmoid(Var a) {
    check_owner(a);
    Node n;
    n.op = Op::Sigmoid;
    n.parents = {a.id};
    n.value = value(a);
    for (auto& v : n.value.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return push(std::move(n), "sigmoid");
}

inline Var Graph::relu(Var a) {
    check_owner(a);
    Node n;
    n.op = Op::Relu;
    n.parents = {a.id};
    n.value = value(a);
    for (auto& v : n.value.values()) v = v > 0.0 ? v : 0.0;
    return push(std::move(n), "relu");
}

/// axis 0 stacks rows, axis 1 stacks columns.
inline Var Graph::concat(std::span<const Var> parts, int axis) {
    if (parts.empty()) throw ContractViolation("concat of nothing");
    if (axis != 0 && axis != 1) throw ContractViolation("concat axis must be 0 or 1");
    Node n;
    n.op = Op::Concat;
    n.axis = axis;
    std::size_t rows = 0, cols = 0;
    for (const auto& p : parts) {
        check_owner(p);
        const auto& v = value(p);
        if (axis == 0) {
            if (cols == 0 && rows == 0) cols = v.cols();
            if (v.cols() != cols) throw ContractViolation("concat(axis 0) column mismatch");
            rows += v.rows();
            n.indices.push_back(v.rows());
        } else {
            if (cols == 0 && rows == 0) rows = v.rows();
            if (v.rows() != rows) throw ContractViolation("concat(axis 1) row mismatch");
            cols += v.cols();
            n.indices.push_back(v.cols());
        }
        n.parents.push_back(p.id);
    }
    n.value = Array(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto& v = value(p);
        for (std::size_t r = 0; r < v.rows(); ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) {
                if (axis == 0)
                    n.value(offset + r, c) = v(r, c);
                else
                    n.value(r, offset + c) = v(r, c);
            }
        offset += axis == 0 ? v.rows() : v.cols();
    }
    return push(std::move(n), "concat");
}

inline Var Graph::slice_rows(Var a, std::size_t begin, std::size_t end) {
    check_owner(a);
    const auto& A = value(a);
    if (begin > end || end > A.rows()) throw ContractViolation("slice_rows out of range");
    Node n;
    n.op = Op::SliceRows;
    n.parents = {a.id};
    n.indices = {begin, end};
    n.value = Array(end - begin, A.cols(),
                    std::vector<double>(A.data() + begin * A.cols(), A.data() + end * A.cols()));
    return push(std::move(n), "slice_rows");
}

/// Row selection: out[k] = a[rows[k]]. Rows may repeat.
inline Var Graph::gather(Var a, std::vector<std::size_t> rows) {
    check_owner(a);
    const auto& A = value(a);
    Node n;
    n.op = Op::Gather;
    n.parents = {a.id};
    n.value = Array(rows.size(), A.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= A.rows()) throw ContractViolation("gather row out of range");
        std::copy_n(A.data() + rows[k] * A.cols(), A.cols(), n.value.data() + k * A.cols());
    }
    n.indices = std::move(rows);
    return push(std::move(n), "gather");
}

inline Var Graph::reshape(Var a, std::size_t rows, std::size_t cols) {
    check_owner(a);
    const auto& A = value(a);
    if (rows * cols != A.size()) throw ContractViolation("reshape size mismatch");
    Node n;
    n.op = Op::Reshape;
    n.parents = {a.id};
    n.value = Array(rows, cols, std::vector<double>(A.data(), A.data() + A.size()));
    return push(std::move(n), "reshape");
}

inline Var Graph::sum(Var a) {
    check_owner(a);
    const auto& A = value(a);
    Node n;
    n.op = Op::Sum;
    n.parents = {a.id};
    double s = 0.0;
    for (double v : A.values()) s += v;
    n.value = Array::scalar(s);
    return push(std::move(n), "sum");
}

inline Var Graph::mean(Var a) {
    check_owner(a);
    const auto& A = value(a);
    if (A.size() == 0) throw ContractViolation("mean of an empty array");
    Node n;
    n.op = Op::Mean;
    n.parents = {a.id};
    double s = 0.0;
    for (double v : A.values()) s += v;
    n.value = Array::scalar(s / static_cast<double>(A.size()));
    return push(std::move(n), "mean");
}

/// Mean over consecutive blocks of `group` rows: (G*group x C) -> (G x C).
inline Var Graph::segment_mean(Var a, std::size_t group) {
    check_owner(a);
    const auto& A = value(a);
    if (group == 0 || A.rows() % group != 0) throw ContractViolation("segment_mean group does not divide rows");
    Node n;
    n.op = Op::SegmentMean;
    n.parents = {a.id};
    n.indices = {group};
    const std::size_t groups = A.rows() / group;
    n.value = Array(groups, A.cols());
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t r = 0; r < group; ++r)
            for (std::size_t c = 0; c < A.cols(); ++c) n.value(g, c) += A(g * group + r, c);
    for (auto& v : n.value.values()) v /= static_cast<double>(group);
    return push(std::move(n), "segment_mean");
}

/// Row-wise log-softmax over the entries whose mask is set. Masked entries
/// are excluded from normalization and receive kMaskedLogProb.
inline Var Graph::masked_log_softmax(Var logits, std::vector<unsigned char> mask) {
    check_owner(logits);
    const auto& X = value(logits);
    if (mask.size() != X.size()) throw ContractViolation("mask size does not match logits");
    Node n;
    n.op = Op::MaskedLogSoftmax;
    n.parents = {logits.id};
    n.value = Array(X.rows(), X.cols(), kMaskedLogProb);
    for (std::size_t r = 0; r < X.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < X.cols(); ++c)
            if (mask[r * X.cols() + c]) mx = std::max(mx, X(r, c));
        if (mx == -std::numeric_limits<double>::infinity())
            throw ContractViolation("masked_log_softmax: every entry of row " + std::to_string(r) + " is masked");
        double z = 0.0;
        for (std::size_t c = 0; c < X.cols(); ++c)
            if (mask[r * X.cols() + c]) z += std::exp(X(r, c) - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < X.cols(); ++c)
            if (mask[r * X.cols() + c]) n.value(r, c) = X(r, c) - lse;
    }
    n.mask = std::move(mask);
    return push(std::move(n), "masked_log_softmax");
}

/// Element selection per row: out[r] = a[r, cols[r]], shape (R x 1).
inline Var Graph::pick(Var a, std::vector<std::size_t> cols) {
    check_owner(a);
    const auto& A = value(a);
    if (cols.size() != A.rows()) throw ContractViolation("pick needs one column per row");
    Node n;
    n.op = Op::Pick;
    n.parents = {a.id};
    n.value = Array(A.rows(), 1);
    for (std::size_t r = 0; r < A.rows(); ++r) {
        if (cols[r] >= A.cols()) throw ContractViolation("pick column out of range");
        n.value[r] = A(r, cols[r]);
    }
    n.indices = std::move(cols);
    return push(std::move(n), "pick");
}

// ---------------------------------------------------------------------------
// Backward

inline void Graph::backward(Var loss) {
    check_owner(loss);
    if (value(loss).size() != 1) throw ContractViolation("backward needs a scalar loss, got " + shape_str(value(loss)));
    grads_.assign(nodes_.size(), Array());
    grad_slot(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        if (grads_[static_cast<std::size_t>(id)].empty() || !needs(id)) continue;
        backward_node(id);
    }
}

inline void Graph::backward_node(int id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Array& g = grads_[static_cast<std::size_t>(id)];
    const auto& y = n.val();
    auto parent = [&](std::size_t k) { return n.parents[k]; };

    switch (n.op) {
        case Op::Constant:
        case Op::Parameter:
            break;
        case Op::MatMul: {
            const int a = parent(0), b = parent(1);
            if (needs(a)) as_matrix(grad_slot(a)).noalias() += as_matrix(g) * as_matrix(val(b)).transpose();
            if (needs(b)) as_matrix(grad_slot(b)).noalias() += as_matrix(val(a)).transpose() * as_matrix(g);
            break;
        }
        case Op::Add:
        case Op::Sub: {
            const double sign = n.op == Op::Sub ? -1.0 : 1.0;
            if (needs(parent(0))) {
                auto& ga = grad_slot(parent(0));
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (needs(parent(1))) {
                auto& gb = grad_slot(parent(1));
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
            }
            break;
        }
        case Op::AddRowBroadcast: {
            if (needs(parent(0))) {
                auto& ga = grad_slot(parent(0));
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (needs(parent(1))) {
                auto& gb = grad_slot(parent(1));
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
            }
            break;
        }
        case Op::Mul: {
            const int a = parent(0), b = parent(1);
            if (needs(a)) {
                auto& ga = grad_slot(a);
                const auto& B = val(b);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
            }
            if (needs(b)) {
                auto& gb = grad_slot(b);
                const auto& A = val(a);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
            }
            break;
        }
        case Op::Scale: {
            auto& ga = grad_slot(parent(0));
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
            break;
        }
        case Op::Tanh: {
            auto& ga = grad_slot(parent(0));
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
            break;
        }
        case Op::Sigmoid: {
            auto& ga = grad_slot(parent(0));
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
            break;
        }
        case Op::Relu: {
            auto& ga = grad_slot(parent(0));
            const auto& x = val(parent(0));
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > 0.0) ga[i] += g[i];
            break;
        }
        case Op::Concat: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                const int p = parent(k);
                const std::size_t extent = n.indices[k];
                if (needs(p)) {
                    auto& gp = grad_slot(p);
                    for (std::size_t r = 0; r < gp.rows(); ++r)
                        for (std::size_t c = 0; c < gp.cols(); ++c)
                            gp(r, c) += n.axis == 0 ? g(offset + r, c) : g(r, offset + c);
                }
                offset += extent;
            }
            break;
        }
        case Op::SliceRows: {
            auto& ga = grad_slot(parent(0));
            const std::size_t begin = n.indices[0];
            for (std::size_t i = 0; i < g.size(); ++i) ga[begin * g.cols() + i] += g[i];
            break;
        }
        case Op::Gather: {
            auto& ga = grad_slot(parent(0));
            for (std::size_t k = 0; k < n.indices.size(); ++k)
                for (std::size_t c = 0; c < g.cols(); ++c) ga(n.indices[k], c) += g(k, c);
            break;
        }
        case Op::Reshape: {
            auto& ga = grad_slot(parent(0));
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            break;
        }
        case Op::Sum: {
            auto& ga = grad_slot(parent(0));
            for (auto& v : ga.values()) v += g[0];
            break;
        }
        case Op::Mean: {
            auto& ga = grad_slot(parent(0));
            const double s = g[0] / static_cast<double>(ga.size());
            for (auto& v : ga.values()) v += s;
            break;
        }
        case Op::SegmentMean: {
            auto& ga = grad_slot(parent(0));
            const std::size_t group = n.indices[0];
            const double inv = 1.0 / static_cast<double>(group);
            for (std::size_t r = 0; r < ga.rows(); ++r)
                for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r / group, c) * inv;
            break;
        }
        case Op::MaskedLogSoftmax: {
            auto& ga = grad_slot(parent(0));
            const std::size_t cols = y.cols();
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double gsum = 0.0;
                for (std::size_t c = 0; c < cols; ++c)
                    if (n.mask[r * cols + c]) gsum += g(r, c);
                for (std::size_t c = 0; c < cols; ++c)
                    if (n.mask[r * cols + c]) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
            }
            break;
        }
        case Op::Pick: {
            auto& ga = grad_slot(parent(0));
            for (std::size_t r = 0; r < n.indices.size(); ++r) ga(r, n.indices[r]) += g[r];
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Free-function spelling

inline Var matmul(Var a, Var b) { return a.graph->matmul(a, b); }
inline Var add(Var a, Var b) { return a.graph->add(a, b); }
inline Var sub(Var a, Var b) { return a.graph->sub(a, b); }
inline Var mul(Var a, Var b) { return a.graph->mul(a, b); }
inline Var scale(Var a, double c) { return a.graph->scale(a, c); }
inline Var tanh(Var a) { return a.graph->tanh(a); }
inline Var sigmoid(Var a) { return a.graph->sigmoid(a); }
inline Var relu(Var a) { return a.graph->relu(a); }
inline Var concat(std::initializer_list<Var> parts, int axis) {
    return parts.begin()->graph->concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) { return a.graph->slice_rows(a, begin, end); }
inline Var gather(Var a, std::vector<std::size_t> rows) { return a.graph->gather(a, std::move(rows)); }
inline Var reshape(Var a, std::size_t rows, std::size_t cols) { return a.graph->reshape(a, rows, cols); }
inline Var sum(Var a) { return a.graph->sum(a); }
inline Var mean(Var a) { return a.graph->mean(a); }
inline Var segment_mean(Var a, std::size_t group) { return a.graph->segment_mean(a, group); }
inline Var masked_log_softmax(Var logits, std::vector<unsigned char> mask) {
    return logits.graph->masked_log_softmax(logits, std::move(mask));
}
inline Var pick(Var a, std::vector<std::size_t> cols) { return a.graph->pick(a, std::move(cols)); }

inline Var linear(Graph& g, const ParameterSet& params, const std::string& prefix, Var x) {
    return add(matmul(x, g.parameter(params, prefix + ".W")), g.parameter(params, prefix + ".b"));
}

// ---------------------------------------------------------------------------
// Recurrent cell

/// Gated recurrent update over a batch of rows:
///   z  = sigmoid(x Wz + h Uz + bz)
///   r  = sigmoid(x Wr + h Ur + br)
///   h~ = tanh(x Wn + (r * h) Un + bn)
///   h' = (1 - z) * h + z * h~
/// Parameters are read from `params` under `prefix`.
inline Var gru_cell(Graph& g, const ParameterSet& params, const std::string& prefix, Var x, Var h) {
    auto p = [&](const char* leaf) { return g.parameter(params, prefix + "." + leaf); };
    Var z = sigmoid(add(add(matmul(x, p("W_z")), matmul(h, p("U_z"))), p("b_z")));
    Var r = sigmoid(add(add(matmul(x, p("W_r")), matmul(h, p("U_r"))), p("b_r")));
    Var cand = tanh(add(add(matmul(x, p("W_n")), matmul(mul(r, h), p("U_n"))), p("b_n")));
    return add(h, mul(z, sub(cand, h)));
}

inline void add_gru_params(ParameterSet& params, const std::string& prefix, std::size_t input, std::size_t hidden) {
    for (const char* gate : {"z", "r", "n"}) {
        params[prefix + ".W_" + gate] = Array(input, hidden);
        params[prefix + ".U_" + gate] = Array(hidden, hidden);
        params[prefix + ".b_" + gate] = Array(1, hidden);
    }
}

}  // namespace cmvrp::ad
