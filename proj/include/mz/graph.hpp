#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mz/tensor.hpp"

namespace mz {

enum class Op {
    Input,
    Param,
    Const,
    Add,
    Sub,
    Mul,
    MatMul,
    Concat,
    Reshape,
    Slice,
    Gather,
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
    Softmax,
    ReduceSum,
    ReduceMax,
    ReduceMean,
    Conv2d,
    MaxPool2d,
    GridPool,
    Transpose,
};

struct Node {
    Op op;
    std::vector<int> args;
    Shape shape;
    int axis = 0;                // softmax / reduce / concat; -1 on reduce = all axes
    std::vector<int64_t> attrs;  // slice bounds, pool window, grid size
    std::string name;            // input / parameter name
    Tensor value;                // constants only
};

// Named trainable tensor plus its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

class ParameterStore {
public:
    Parameter& create(const std::string& name, Tensor init);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    void zero_grads();

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    size_t size() const { return params_.size(); }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, size_t> index_;
};

// DAG of tensor ops, topologically ordered by construction. Shapes are
// fixed at build time; values flow only through forward().
class Graph {
public:
    int input(const std::string& name, Shape shape);
    int param(const std::string& name, Shape shape);
    int constant(Tensor value);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int matmul(int a, int b);
    int concat(const std::vector<int>& parts, int axis);
    int reshape(int a, Shape shape);
    int slice(int a, const std::vector<int64_t>& starts, const std::vector<int64_t>& ends);
    int gather(int table, int indices);
    int sigmoid(int a);
    int tanh(int a);
    int relu(int a);
    int exp(int a);
    int log(int a);
    int softmax(int a, int axis);
    int reduce_sum(int a, int axis);  // axis -1 reduces all axes to a scalar
    int reduce_max(int a, int axis);
    int reduce_mean(int a, int axis);
    int transpose(int a);  // rank 2 only
    int conv2d(int input, int kernel);  // [Cin,H,W] * [Cout,Cin,kh,kw], valid, stride 1
    int maxpool2d(int a, int64_t ph, int64_t pw);
    int grid_pool(int a, int64_t p1, int64_t p2);

    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const std::vector<Node>& nodes() const { return nodes_; }

private:
    int push(Node n);
    const Shape& shape_of(int id) const { return nodes_[static_cast<size_t>(id)].shape; }

    std::vector<Node> nodes_;
};

using Bindings = std::map<std::string, Tensor>;

// Values of every node, indexed by node id.
std::vector<Tensor> forward(const Graph& g, const ParameterStore& params, const Bindings& bindings);

// Gradient of the scalar loss node with respect to every parameter in the
// store; parameters not reachable from the loss get zero gradients.
std::map<std::string, Tensor> backward(const Graph& g, int loss_node,
                                       const std::vector<Tensor>& values,
                                       const ParameterStore& params);

struct GradCheckEntry {
    std::string name;
    double max_rel_err;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool pass = true;
    double worst = 0.0;
};

GradCheckReport grad_check(const Graph& g, int loss_node, ParameterStore& params,
                           const Bindings& bindings, double step, double tolerance);

// True when any relu input is within `margin` of zero or any max-reduction
// region has its top two values within `margin`. Finite differences are
// invalid there; gradient-check harnesses resample such instances.
bool near_nondifferentiable(const Graph& g, const std::vector<Tensor>& values, double margin);

}  // namespace mz
