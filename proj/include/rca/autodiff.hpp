#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records nodes eagerly: every op computes its value when it is
// appended, so building a loss is also evaluating it. The recorded graph can
// then be replayed on new leaf values with Tape::forward, which never mutates
// the tape. Node inputs always reference earlier nodes, so the node order is
// a topological order.

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rca/tensor.hpp"

namespace rca::ad {

/// Lower bound applied to every probability before a log.
inline constexpr double kLogFloor = 1e-12;

enum class OpKind {
    Input,
    Parameter,
    Constant,
    MatMul,
    AddRow,
    Add,
    Sub,
    Mul,
    Scale,
    LeakyRelu,
    Softmax,
    LogSoftmax,
    LogClamped,
    Sum,
    Mean,
    RowSum,
    Dropout,
    StopGradient,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    std::size_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class ShapeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Node values from a replay of the tape.
struct Evaluation {
    std::vector<Tensor> values;
    std::map<std::string, Tensor> outputs;

    const Tensor& operator[](const std::string& name) const { return outputs.at(name); }
};

struct ForwardOptions {
    // Hold every stop-gradient node at its recorded value. Finite-difference
    // checks need this so they differentiate the same function backward does.
    bool freeze_stop_gradients = false;
};

/// Gradient of a scalar with respect to every leaf (input or parameter) node.
class Gradients {
public:
    const Tensor& wrt(Var leaf) const;
    const Tensor& wrt(const std::string& leaf_name) const;

private:
    friend class Tape;
    std::vector<Tensor> by_node_;
    std::map<std::string, std::size_t> names_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Named leaf fed at replay time. With requires_grad=false the leaf is a
    /// stop-gradient leaf: backward reports an all-zero gradient for it.
    Var input(const std::string& name, Tensor value, bool requires_grad = false);
    /// Named trainable leaf; replay keeps the recorded value unless overridden.
    Var parameter(const std::string& name, Tensor value);
    Var constant(Tensor value);

    Var matmul(Var a, Var b);
    /// a[rows x cols] + bias broadcast over rows; bias has cols elements.
    Var add_row(Var a, Var bias);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    Var leaky_relu(Var a, double slope);
    Var softmax(Var logits);
    /// Row-wise log-softmax with outputs clamped below at log(kLogFloor).
    Var log_softmax(Var logits);
    /// Elementwise log(max(a, kLogFloor)).
    Var log_clamped(Var a);
    Var sum(Var a);
    Var mean(Var a);
    Var row_sum(Var a);
    /// Multiplies by a recorded mask; replays reuse the same mask.
    Var dropout(Var a, Tensor mask);
    Var stop_gradient(Var a);

    void mark_output(const std::string& name, Var v);

    Evaluation forward(const std::map<std::string, Tensor>& inputs,
                       ForwardOptions options = {}) const;

    /// Gradients using the values recorded when the tape was built.
    Gradients backward(Var output) const;
    /// Gradients using the values of a replay.
    Gradients backward(Var output, const Evaluation& eval) const;

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(std::size_t id) const { return nodes_.at(id).op; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::vector<Var> leaves() const;
    Var find_leaf(const std::string& name) const;
    const std::string& leaf_name(std::size_t id) const;

    /// Smallest |x| over every leaky-ReLU input, or +inf if there is none.
    double min_abs_preactivation() const;

private:
    struct Node {
        OpKind op;
        std::size_t in0 = 0;
        std::size_t in1 = 0;
        int arity = 0;
        double attr = 0.0;
        std::string name;
        Tensor value;
        Tensor aux;  // dropout mask
        bool requires_grad = false;
    };

    Var push(Node node);
    void check_owned(Var v) const;
    Tensor compute(const Node& node, std::size_t id, const std::vector<Tensor>& values) const;
    Gradients backward_impl(Var output, const std::vector<Tensor>* replay) const;

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> leaf_names_;
    std::map<std::string, std::size_t> outputs_;
};

// Free-function spellings so losses read as math.
inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape()->scale(a, s); }
inline Var matmul(Var a, Var b) { return a.tape()->matmul(a, b); }

/// Max over the selected leaf coordinates of
/// |analytic - central difference| / max(1, |analytic|).
///
/// The tape is replayed with each coordinate nudged by +-step; stop-gradient
/// nodes are frozen during the replays. An empty selection checks every leaf
/// that requires a gradient.
double grad_check(const Tape& tape, Var output, const std::map<std::string, Tensor>& inputs,
                  double step, std::span<const Var> leaves = {});

}  // namespace rca::ad
