#include "rca/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rca::ad {

namespace {

const Tensor kEmpty;

bool same_matrix(const Tensor& a, const Tensor& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
}

Tensor matmul_kernel(const Tensor& a, const Tensor& b) {
    const auto n = a.rows(), m = a.cols(), p = b.cols();
    Tensor out({n, p});
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = o.data() + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = av[i * m + k];
            if (aik == 0.0) continue;
            const double* brow = bv.data() + k * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

void softmax_row(std::span<const double> in, std::span<double> out) {
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = std::exp(in[j] - mx);
        total += out[j];
    }
    for (auto& v : out) v /= total;
}

void log_softmax_row(std::span<const double> in, std::span<double> out) {
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    const double floor = std::log(kLogFloor);
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = std::max(in[j] - lse, floor);
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Parameter: return "parameter";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::AddRow: return "add_row";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Softmax: return "softmax";
        case OpKind::LogSoftmax: return "log_softmax";
        case OpKind::LogClamped: return "log_clamped";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::RowSum: return "row_sum";
        case OpKind::Dropout: return "dropout";
        case OpKind::StopGradient: return "stop_gradient";
    }
    return "?";
}

const Tensor& Var::value() const {
    if (!tape_) throw std::logic_error("unbound Var");
    return tape_->value(id_);
}

const Tensor& Gradients::wrt(Var leaf) const {
    if (leaf.id() >= by_node_.size() || by_node_[leaf.id()].empty())
        throw std::invalid_argument("no gradient recorded for node " + std::to_string(leaf.id()));
    return by_node_[leaf.id()];
}

const Tensor& Gradients::wrt(const std::string& leaf_name) const {
    auto it = names_.find(leaf_name);
    if (it == names_.end()) throw std::invalid_argument("unknown leaf '" + leaf_name + "'");
    return by_node_[it->second];
}

void Tape::check_owned(Var v) const {
    if (v.tape() != this || v.id() >= nodes_.size())
        throw std::invalid_argument("Var does not belong to this tape");
}

Var Tape::push(Node node) {
    const std::size_t id = nodes_.size();
    if (node.arity >= 1) check_owned(Var(const_cast<Tape*>(this), node.in0));
    if (node.arity >= 2) check_owned(Var(const_cast<Tape*>(this), node.in1));
    if (node.op != OpKind::Input && node.op != OpKind::Parameter && node.op != OpKind::Constant) {
        node.value = compute(node, id, {});
        if (node.op == OpKind::StopGradient)
            node.requires_grad = false;
        else
            node.requires_grad = (node.arity >= 1 && nodes_[node.in0].requires_grad) ||
                                 (node.arity >= 2 && nodes_[node.in1].requires_grad);
    }
    nodes_.push_back(std::move(node));
    return Var(this, id);
}

Var Tape::input(const std::string& name, Tensor value, bool requires_grad) {
    if (name.empty()) throw std::invalid_argument("input leaves need a name");
    if (!leaf_names_.emplace(name, nodes_.size()).second)
        throw std::invalid_argument("duplicate leaf name '" + name + "'");
    if (!value.all_finite()) throw NumericError("non-finite value for input '" + name + "'");
    Node n{OpKind::Input};
    n.name = name;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Var Tape::parameter(const std::string& name, Tensor value) {
    if (name.empty()) throw std::invalid_argument("parameter leaves need a name");
    if (!leaf_names_.emplace(name, nodes_.size()).second)
        throw std::invalid_argument("duplicate leaf name '" + name + "'");
    if (!value.all_finite()) throw NumericError("non-finite value for parameter '" + name + "'");
    Node n{OpKind::Parameter};
    n.name = name;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite constant");
    Node n{OpKind::Constant};
    n.value = std::move(value);
    return push(std::move(n));
}

#define RCA_UNARY(fn, kind)            \
    Var Tape::fn(Var a) {              \
        check_owned(a);                \
        Node n{OpKind::kind};          \
        n.in0 = a.id();                \
        n.arity = 1;                   \
        return push(std::move(n));     \
    }
#define RCA_BINARY(fn, kind)           \
    Var Tape::fn(Var a, Var b) {       \
        check_owned(a);                \
        check_owned(b);                \
        Node n{OpKind::kind};          \
        n.in0 = a.id();                \
        n.in1 = b.id();                \
        n.arity = 2;                   \
        return push(std::move(n));     \
    }

RCA_BINARY(matmul, MatMul)
RCA_BINARY(add_row, AddRow)
RCA_BINARY(add, Add)
RCA_BINARY(sub, Sub)
RCA_BINARY(mul, Mul)
RCA_UNARY(softmax, Softmax)
RCA_UNARY(log_softmax, LogSoftmax)
RCA_UNARY(log_clamped, LogClamped)
RCA_UNARY(sum, Sum)
RCA_UNARY(mean, Mean)
RCA_UNARY(row_sum, RowSum)
RCA_UNARY(stop_gradient, StopGradient)

#undef RCA_UNARY
#undef RCA_BINARY

Var Tape::scale(Var a, double factor) {
    check_owned(a);
    Node n{OpKind::Scale};
    n.in0 = a.id();
    n.arity = 1;
    n.attr = factor;
    return push(std::move(n));
}

Var Tape::leaky_relu(Var a, double slope) {
    check_owned(a);
    Node n{OpKind::LeakyRelu};
    n.in0 = a.id();
    n.arity = 1;
    n.attr = slope;
    return push(std::move(n));
}

Var Tape::dropout(Var a, Tensor mask) {
    check_owned(a);
    if (mask.size() != a.value().size())
        throw ShapeError("dropout mask " + shape_string(mask.shape()) + " does not match input " +
                         shape_string(a.shape()));
    Node n{OpKind::Dropout};
    n.in0 = a.id();
    n.arity = 1;
    n.aux = std::move(mask);
    return push(std::move(n));
}

void Tape::mark_output(const std::string& name, Var v) {
    check_owned(v);
    outputs_[name] = v.id();
}

std::vector<Var> Tape::leaves() const {
    std::vector<Var> out;
    for (const auto& [name, id] : leaf_names_) out.emplace_back(const_cast<Tape*>(this), id);
    std::sort(out.begin(), out.end(), [](Var a, Var b) { return a.id() < b.id(); });
    return out;
}

const std::string& Tape::leaf_name(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.op != OpKind::Input && n.op != OpKind::Parameter)
        throw std::invalid_argument("node " + std::to_string(id) + " is not a leaf");
    return n.name;
}

Var Tape::find_leaf(const std::string& name) const {
    auto it = leaf_names_.find(name);
    if (it == leaf_names_.end()) throw std::invalid_argument("unknown leaf '" + name + "'");
    return Var(const_cast<Tape*>(this), it->second);
}

double Tape::min_abs_preactivation() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
        if (n.op != OpKind::LeakyRelu) continue;
        for (double v : nodes_[n.in0].value.data()) best = std::min(best, std::abs(v));
    }
    return best;
}

// When `values` is empty the inputs are read from the recorded nodes.
Tensor Tape::compute(const Node& node, std::size_t id, const std::vector<Tensor>& values) const {
    auto in = [&](std::size_t which) -> const Tensor& {
        return values.empty() ? nodes_[which].value : values[which];
    };
    const Tensor& a = node.arity >= 1 ? in(node.in0) : kEmpty;
    const Tensor& b = node.arity >= 2 ? in(node.in1) : kEmpty;
    auto fail_shape = [&](const std::string& what) {
        throw ShapeError(std::string(op_name(node.op)) + " (node " + std::to_string(id) + "): " + what +
                         " lhs " + shape_string(a.shape()) +
                         (node.arity >= 2 ? " rhs " + shape_string(b.shape()) : std::string{}));
    };

    Tensor out;
    switch (node.op) {
        case OpKind::Input:
        case OpKind::Parameter:
        case OpKind::Constant:
            return node.value;
        case OpKind::MatMul:
            if (a.cols() != b.rows()) fail_shape("inner dimensions differ");
            out = matmul_kernel(a, b);
            break;
        case OpKind::AddRow: {
            if (b.size() != a.cols()) fail_shape("bias length differs from column count");
            out = a;
            const auto c = a.cols();
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
            break;
        }
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul: {
            if (a.size() != b.size() || !same_matrix(a, b)) fail_shape("operand shapes differ");
            out = a;
            if (node.op == OpKind::Add)
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
            else if (node.op == OpKind::Sub)
                for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
            else
                for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
            break;
        }
        case OpKind::Scale:
            out = a;
            for (auto& v : out.data()) v *= node.attr;
            break;
        case OpKind::LeakyRelu:
            out = a;
            for (auto& v : out.data())
                if (!(v > 0.0)) v *= node.attr;
            break;
        case OpKind::Softmax:
            out = Tensor(a.shape());
            for (std::size_t r = 0; r < a.rows(); ++r) softmax_row(a.row(r), out.row(r));
            break;
        case OpKind::LogSoftmax:
            out = Tensor(a.shape());
            for (std::size_t r = 0; r < a.rows(); ++r) log_softmax_row(a.row(r), out.row(r));
            break;
        case OpKind::LogClamped:
            out = a;
            for (auto& v : out.data()) v = std::log(std::max(v, kLogFloor));
            break;
        case OpKind::Sum:
        case OpKind::Mean: {
            double total = 0.0;
            for (double v : a.data()) total += v;
            if (node.op == OpKind::Mean) total /= static_cast<double>(a.size());
            out = Tensor::scalar(total);
            break;
        }
        case OpKind::RowSum:
            out = Tensor({a.rows(), 1});
            for (std::size_t r = 0; r < a.rows(); ++r) {
                double total = 0.0;
                for (double v : a.row(r)) total += v;
                out[r] = total;
            }
            break;
        case OpKind::Dropout:
            if (node.aux.size() != a.size()) fail_shape("dropout mask size differs");
            out = a;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= node.aux[i];
            break;
        case OpKind::StopGradient:
            out = a;
            break;
    }
    if (!out.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + op_name(node.op) + " (node " +
                           std::to_string(id) + ")");
    return out;
}

Evaluation Tape::forward(const std::map<std::string, Tensor>& inputs, ForwardOptions options) const {
    for (const auto& [name, value] : inputs)
        if (!leaf_names_.count(name)) throw std::invalid_argument("tape has no leaf named '" + name + "'");

    Evaluation eval;
    eval.values.reserve(nodes_.size());
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& node = nodes_[id];
        if (node.op == OpKind::Input || node.op == OpKind::Parameter) {
            auto it = inputs.find(node.name);
            if (it == inputs.end()) {
                if (node.op == OpKind::Input)
                    throw std::invalid_argument("missing value for input '" + node.name + "'");
                eval.values.push_back(node.value);
                continue;
            }
            if (it->second.shape() != node.value.shape())
                throw ShapeError("input '" + node.name + "' expects shape " + shape_string(node.value.shape()) +
                                 ", got " + shape_string(it->second.shape()));
            if (!it->second.all_finite()) throw NumericError("non-finite value for leaf '" + node.name + "'");
            eval.values.push_back(it->second);
        } else if (node.op == OpKind::StopGradient && options.freeze_stop_gradients) {
            eval.values.push_back(node.value);
        } else {
            eval.values.push_back(compute(node, id, eval.values));
        }
    }
    for (const auto& [name, id] : outputs_) eval.outputs[name] = eval.values[id];
    return eval;
}

Gradients Tape::backward(Var output) const {
    check_owned(output);
    return backward_impl(output, nullptr);
}

Gradients Tape::backward(Var output, const Evaluation& eval) const {
    check_owned(output);
    if (eval.values.size() != nodes_.size()) throw std::invalid_argument("evaluation does not match tape");
    return backward_impl(output, &eval.values);
}

Gradients Tape::backward_impl(Var output, const std::vector<Tensor>* replay) const {
    auto value_of = [&](std::size_t id) -> const Tensor& { return replay ? (*replay)[id] : nodes_[id].value; };
    const Tensor& out_value = value_of(output.id());
    if (out_value.size() != 1)
        throw ShapeError("backward needs a scalar output, got shape " + shape_string(out_value.shape()));

    std::vector<Tensor> grad(nodes_.size());
    auto accumulate = [&](std::size_t id, const Tensor& g) {
        if (!nodes_[id].requires_grad) return;
        if (grad[id].empty()) {
            grad[id] = g;
        } else {
            auto dst = grad[id].data();
            auto src = g.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    };

    if (nodes_[output.id()].requires_grad) grad[output.id()] = Tensor(out_value.shape(), 1.0);

    for (std::size_t id = output.id() + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (grad[id].empty() || node.arity == 0) continue;
        const Tensor& g = grad[id];
        const Tensor& a = value_of(node.in0);
        const bool need_a = nodes_[node.in0].requires_grad;
        const bool need_b = node.arity >= 2 && nodes_[node.in1].requires_grad;

        switch (node.op) {
            case OpKind::MatMul: {
                const Tensor& b = value_of(node.in1);
                const auto n = a.rows(), m = a.cols(), p = b.cols();
                if (need_a) {
                    Tensor ga(a.shape());
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t k = 0; k < m; ++k) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * b[k * p + j];
                            ga[i * m + k] = acc;
                        }
                    accumulate(node.in0, ga);
                }
                if (need_b) {
                    Tensor gb(b.shape());
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t k = 0; k < m; ++k) {
                            const double aik = a[i * m + k];
                            if (aik == 0.0) continue;
                            for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * g[i * p + j];
                        }
                    accumulate(node.in1, gb);
                }
                break;
            }
            case OpKind::AddRow: {
                if (need_a) accumulate(node.in0, g);
                if (need_b) {
                    Tensor gb(value_of(node.in1).shape());
                    const auto c = a.cols();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
                    accumulate(node.in1, gb);
                }
                break;
            }
            case OpKind::Add:
                if (need_a) accumulate(node.in0, Tensor(a.shape(), std::vector<double>(g.data().begin(), g.data().end())));
                if (need_b) accumulate(node.in1, Tensor(value_of(node.in1).shape(), std::vector<double>(g.data().begin(), g.data().end())));
                break;
            case OpKind::Sub:
                if (need_a) accumulate(node.in0, Tensor(a.shape(), std::vector<double>(g.data().begin(), g.data().end())));
                if (need_b) {
                    Tensor gb(value_of(node.in1).shape());
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
                    accumulate(node.in1, gb);
                }
                break;
            case OpKind::Mul: {
                const Tensor& b = value_of(node.in1);
                if (need_a) {
                    Tensor ga(a.shape());
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b[i];
                    accumulate(node.in0, ga);
                }
                if (need_b) {
                    Tensor gb(b.shape());
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a[i];
                    accumulate(node.in1, gb);
                }
                break;
            }
            case OpKind::Scale: {
                Tensor ga(a.shape());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * node.attr;
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::LeakyRelu: {
                Tensor ga(a.shape());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = a[i] > 0.0 ? g[i] : g[i] * node.attr;
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::Softmax: {
                const Tensor& s = value_of(id);
                Tensor ga(a.shape());
                const auto c = a.cols();
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * s[r * c + j];
                    for (std::size_t j = 0; j < c; ++j) ga[r * c + j] = s[r * c + j] * (g[r * c + j] - dot);
                }
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::LogSoftmax: {
                const Tensor& ls = value_of(id);
                const double floor = std::log(kLogFloor);
                Tensor ga(a.shape());
                const auto c = a.cols();
                std::vector<double> s(c);
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    softmax_row(a.row(r), s);
                    double total = 0.0;
                    for (std::size_t j = 0; j < c; ++j)
                        if (ls[r * c + j] > floor) total += g[r * c + j];
                    for (std::size_t j = 0; j < c; ++j) {
                        const double own = ls[r * c + j] > floor ? g[r * c + j] : 0.0;
                        ga[r * c + j] = own - s[j] * total;
                    }
                }
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::LogClamped: {
                Tensor ga(a.shape());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = a[i] > kLogFloor ? g[i] / a[i] : 0.0;
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::Sum:
            case OpKind::Mean: {
                const double scale = node.op == OpKind::Mean ? 1.0 / static_cast<double>(a.size()) : 1.0;
                accumulate(node.in0, Tensor(a.shape(), g.item() * scale));
                break;
            }
            case OpKind::RowSum: {
                Tensor ga(a.shape());
                const auto c = a.cols();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i / c];
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::Dropout: {
                Tensor ga(a.shape());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * node.aux[i];
                accumulate(node.in0, ga);
                break;
            }
            case OpKind::StopGradient:
            case OpKind::Input:
            case OpKind::Parameter:
            case OpKind::Constant:
                break;
        }
        if (node.op != OpKind::Input && node.op != OpKind::Parameter) grad[id] = Tensor();
    }

    Gradients result;
    result.by_node_.resize(nodes_.size());
    for (const auto& [name, id] : leaf_names_) {
        result.by_node_[id] = grad[id].empty() ? Tensor(nodes_[id].value.shape()) : std::move(grad[id]);
        result.names_[name] = id;
    }
    return result;
}

double grad_check(const Tape& tape, Var output, const std::map<std::string, Tensor>& inputs, double step,
                  std::span<const Var> leaves) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check step must be positive");
    const ForwardOptions frozen{.freeze_stop_gradients = true};
    const Evaluation base = tape.forward(inputs, frozen);
    const Gradients grads = tape.backward(output, base);

    std::vector<Var> selected(leaves.begin(), leaves.end());
    if (selected.empty())
        for (Var leaf : tape.leaves())
            if (tape.requires_grad(leaf.id())) selected.push_back(leaf);

    double worst = 0.0;
    std::map<std::string, Tensor> probe = inputs;
    for (Var leaf : selected) {
        const std::string& name = tape.leaf_name(leaf.id());
        const Tensor& analytic = grads.wrt(leaf);
        Tensor original = base.values[leaf.id()];
        for (std::size_t i = 0; i < original.size(); ++i) {
            Tensor nudged = original;
            nudged[i] = original[i] + step;
            probe[name] = nudged;
            const double up = tape.forward(probe, frozen).values[output.id()].item();
            nudged[i] = original[i] - step;
            probe[name] = nudged;
            const double down = tape.forward(probe, frozen).values[output.id()].item();
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
            worst = std::max(worst, err);
        }
        probe[name] = original;
    }
    return worst;
}

}  // namespace rca::ad
