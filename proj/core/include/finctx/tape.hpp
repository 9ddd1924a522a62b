#pragma once

#include <functional>
#include <string>
#include <vector>

#include "finctx/tensor.hpp"

namespace finctx {

// A named model weight. Frozen parameters (trainable=false) still take part
// in forward passes and pass gradients through to their consumers' other
// inputs, but never accumulate gradient themselves.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())), trainable(train) {}

    void zero_grad() { grad.zero(); }
};

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over an op-by-op execution record. Ops append nodes
// in execution order, which is a valid topological order, so backward() is a
// single reverse sweep. One Tape serves one forward/backward pass at a time;
// call reset() before reusing it.
class Tape {
public:
    Tape() = default;

    // ---- graph entry points ----
    Var constant(Tensor value);
    Var leaf(Parameter& p);

    // ---- primitives (each registers its backward rule) ----
    Var add(Var a, Var b);  // same shape, or b broadcast as a row over a's rows
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise, same shape
    Var scale(Var a, double c);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var softmax_rows(Var a);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var gelu(Var x);
    Var tanh_act(Var x);
    Var sigmoid(Var x);
    Var gather_rows(Var table, std::vector<int> ids);
    Var concat_rows(const std::vector<Var>& xs);
    Var concat_cols(const std::vector<Var>& xs);
    Var slice_rows(Var x, int begin, int end);
    Var slice_cols(Var x, int begin, int end);
    Var mean_rows(Var x);  // [n,d] -> [1,d]
    Var sum_all(Var x);    // scalar
    Var mean_all(Var x);   // scalar
    // Rotary position rotation: row i is rotated by angle(position[i]) per
    // frequency pair. cols must be even.
    Var rope(Var x, std::vector<int> positions, double base);
    Var cross_entropy_logits(Var logits, std::vector<int> targets);  // scalar mean NLL
    Var bce(Var prob, double target);                                // scalar, prob in (0,1)
    Var bce_with_logits(Var logit, double target);                   // scalar, stable form

    // ---- execution ----
    void backward(Var loss);
    void reset();

    const Tensor& value(Var v) const;
    // Gradient of the last backward() target w.r.t. node v. Zero tensor if
    // the node did not require grad.
    Tensor grad(Var v) const;

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad_buf;       // allocated lazily during backward
        bool requires_grad = false;
        bool grad_alloc = false;
        Parameter* bound = nullptr;
        std::function<void(Tape&)> back;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
    int cursor_id_ = -1;  // node whose backward rule is currently running

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back, const char* opname);
    Node& node(Var v);
    const Node& node(Var v) const;
    // Returns grad accumulation buffer for node id, or nullptr if that node
    // does not require grad.
    Tensor* grad_ptr(int id);
    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    void check_var(Var v, const char* who) const;
};

}  // namespace finctx
