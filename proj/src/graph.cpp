#include "mz/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mz {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_broadcast(const Shape& a, const Shape& b, const char* opname) {
    if (a == b) return;
    if (shape_numel(a) == 1 || shape_numel(b) == 1) return;
    // row vector against matrix rows
    if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return;
    if (b.size() == 2 && a.size() == 1 && b[1] == a[0]) return;
    fail(std::string(opname) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
         " are not broadcast-compatible");
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    if (shape_numel(a) == 1 && shape_numel(b) != 1) return b;
    if (shape_numel(b) == 1) return a;
    return a.size() >= b.size() ? a : b;
}

// value of t broadcast to `out` at flat index
double bval(const Tensor& t, size_t flat, const Shape& out) {
    if (t.shape == out) return t.data[flat];
    if (t.numel() == 1) return t.data[0];
    // row vector over matrix
    size_t n = static_cast<size_t>(t.shape[0]);
    return t.data[flat % n];
}

// sum g down to the shape of a broadcast operand
Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    if (g.shape == target) return g;
    if (shape_numel(target) == 1) {
        double s = 0;
        for (double v : g.data) s += v;
        Tensor out = Tensor::zeros(target);
        out.data[0] = s;
        return out;
    }
    // g is [m,n], target [n]
    Tensor out = Tensor::zeros(target);
    size_t n = static_cast<size_t>(target[0]);
    for (size_t i = 0; i < g.data.size(); ++i) out.data[i % n] += g.data[i];
    return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

struct AxisView {
    int64_t outer, len, inner;
};

AxisView axis_view(const Shape& s, int axis) {
    AxisView v{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (size_t i = 0; i < s.size(); ++i)
        if (static_cast<int>(i) != axis) out.push_back(s[i]);
    return out;
}

constexpr double kLogClamp = 1e-12;

}  // namespace

Parameter& ParameterStore::create(const std::string& name, Tensor init) {
    if (index_.count(name)) fail("parameter '" + name + "' registered twice");
    index_[name] = params_.size();
    params_.push_back(Parameter{name, init, Tensor::zeros(init.shape)});
    return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail("unknown parameter '" + name + "'");
    return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("unknown parameter '" + name + "'");
    return params_[it->second];
}

void ParameterStore::zero_grads() {
    for (auto& p : params_)
        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(const std::string& name, Shape shape) {
    Node n;
    n.op = Op::Input;
    n.name = name;
    n.shape = std::move(shape);
    return push(std::move(n));
}

int Graph::param(const std::string& name, Shape shape) {
    Node n;
    n.op = Op::Param;
    n.name = name;
    n.shape = std::move(shape);
    return push(std::move(n));
}

int Graph::constant(Tensor value) {
    Node n;
    n.op = Op::Const;
    n.shape = value.shape;
    n.value = std::move(value);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    check_broadcast(shape_of(a), shape_of(b), "add");
    Node n;
    n.op = Op::Add;
    n.args = {a, b};
    n.shape = broadcast_shape(shape_of(a), shape_of(b));
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    check_broadcast(shape_of(a), shape_of(b), "sub");
    Node n;
    n.op = Op::Sub;
    n.args = {a, b};
    n.shape = broadcast_shape(shape_of(a), shape_of(b));
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    check_broadcast(shape_of(a), shape_of(b), "mul");
    Node n;
    n.op = Op::Mul;
    n.args = {a, b};
    n.shape = broadcast_shape(shape_of(a), shape_of(b));
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    Shape out;
    if (sa.size() == 2 && sb.size() == 2) {
        if (sa[1] != sb[0]) fail("matmul: inner dims " + shape_str(sa) + " x " + shape_str(sb));
        out = {sa[0], sb[1]};
    } else if (sa.size() == 2 && sb.size() == 1) {
        if (sa[1] != sb[0]) fail("matmul: inner dims " + shape_str(sa) + " x " + shape_str(sb));
        out = {sa[0]};
    } else if (sa.size() == 1 && sb.size() == 2) {
        if (sa[0] != sb[0]) fail("matmul: inner dims " + shape_str(sa) + " x " + shape_str(sb));
        out = {sb[1]};
    } else {
        fail("matmul: unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
    }
    Node n;
    n.op = Op::MatMul;
    n.args = {a, b};
    n.shape = out;
    return push(std::move(n));
}

int Graph::concat(const std::vector<int>& parts, int axis) {
    if (parts.empty()) fail("concat: no inputs");
    Shape out = shape_of(parts[0]);
    if (axis < 0 || axis >= static_cast<int>(out.size())) fail("concat: bad axis");
    for (size_t i = 1; i < parts.size(); ++i) {
        const Shape& s = shape_of(parts[i]);
        if (s.size() != out.size()) fail("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis && s[d] != out[d])
                fail("concat: shape mismatch " + shape_str(out) + " vs " + shape_str(s));
        out[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
    }
    Node n;
    n.op = Op::Concat;
    n.args = parts;
    n.shape = out;
    n.axis = axis;
    return push(std::move(n));
}

int Graph::reshape(int a, Shape shape) {
    if (shape_numel(shape) != shape_numel(shape_of(a)))
        fail("reshape: numel mismatch " + shape_str(shape_of(a)) + " -> " + shape_str(shape));
    Node n;
    n.op = Op::Reshape;
    n.args = {a};
    n.shape = std::move(shape);
    return push(std::move(n));
}

int Graph::slice(int a, const std::vector<int64_t>& starts, const std::vector<int64_t>& ends) {
    const Shape& s = shape_of(a);
    if (starts.size() != s.size() || ends.size() != s.size()) fail("slice: bounds rank mismatch");
    Shape out;
    for (size_t d = 0; d < s.size(); ++d) {
        if (starts[d] < 0 || ends[d] > s[d] || starts[d] >= ends[d])
            fail("slice: bad bounds on dim " + std::to_string(d) + " of " + shape_str(s));
        out.push_back(ends[d] - starts[d]);
    }
    Node n;
    n.op = Op::Slice;
    n.args = {a};
    n.shape = std::move(out);
    for (size_t d = 0; d < s.size(); ++d) {
        n.attrs.push_back(starts[d]);
        n.attrs.push_back(ends[d]);
    }
    return push(std::move(n));
}

int Graph::gather(int table, int indices) {
    const Shape& st = shape_of(table);
    if (st.size() != 2) fail("gather: table must be rank 2, got " + shape_str(st));
    Shape out = shape_of(indices);
    out.push_back(st[1]);
    Node n;
    n.op = Op::Gather;
    n.args = {table, indices};
    n.shape = std::move(out);
    return push(std::move(n));
}

#define MZ_UNARY(method, opkind)                   \
    int Graph::method(int a) {                     \
        Node n;                                    \
        n.op = Op::opkind;                         \
        n.args = {a};                              \
        n.shape = shape_of(a);                     \
        return push(std::move(n));                 \
    }

MZ_UNARY(sigmoid, Sigmoid)
MZ_UNARY(tanh, Tanh)
MZ_UNARY(relu, Relu)
MZ_UNARY(exp, Exp)
MZ_UNARY(log, Log)
#undef MZ_UNARY

int Graph::softmax(int a, int axis) {
    const Shape& s = shape_of(a);
    if (axis < 0 || axis >= static_cast<int>(s.size())) fail("softmax: bad axis");
    Node n;
    n.op = Op::Softmax;
    n.args = {a};
    n.shape = s;
    n.axis = axis;
    return push(std::move(n));
}

static void check_reduce_axis(const Shape& s, int axis, const char* opname) {
    if (axis == -1) return;
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        fail(std::string(opname) + ": bad axis for " + shape_str(s));
}

int Graph::reduce_sum(int a, int axis) {
    check_reduce_axis(shape_of(a), axis, "reduce_sum");
    Node n;
    n.op = Op::ReduceSum;
    n.args = {a};
    n.axis = axis;
    n.shape = axis == -1 ? Shape{} : drop_axis(shape_of(a), axis);
    return push(std::move(n));
}

int Graph::reduce_max(int a, int axis) {
    check_reduce_axis(shape_of(a), axis, "reduce_max");
    Node n;
    n.op = Op::ReduceMax;
    n.args = {a};
    n.axis = axis;
    n.shape = axis == -1 ? Shape{} : drop_axis(shape_of(a), axis);
    return push(std::move(n));
}

int Graph::reduce_mean(int a, int axis) {
    check_reduce_axis(shape_of(a), axis, "reduce_mean");
    Node n;
    n.op = Op::ReduceMean;
    n.args = {a};
    n.axis = axis;
    n.shape = axis == -1 ? Shape{} : drop_axis(shape_of(a), axis);
    return push(std::move(n));
}

int Graph::transpose(int a) {
    const Shape& s = shape_of(a);
    if (s.size() != 2) fail("transpose: need rank 2, got " + shape_str(s));
    Node n;
    n.op = Op::Transpose;
    n.args = {a};
    n.shape = {s[1], s[0]};
    return push(std::move(n));
}

int Graph::conv2d(int input, int kernel) {
    const Shape& si = shape_of(input);
    const Shape& sk = shape_of(kernel);
    if (si.size() != 3 || sk.size() != 4)
        fail("conv2d: need input [Cin,H,W] and kernel [Cout,Cin,kh,kw], got " + shape_str(si) +
             " and " + shape_str(sk));
    if (si[0] != sk[1]) fail("conv2d: channel mismatch");
    if (sk[2] > si[1] || sk[3] > si[2]) fail("conv2d: kernel larger than input");
    Node n;
    n.op = Op::Conv2d;
    n.args = {input, kernel};
    n.shape = {sk[0], si[1] - sk[2] + 1, si[2] - sk[3] + 1};
    return push(std::move(n));
}

int Graph::maxpool2d(int a, int64_t ph, int64_t pw) {
    const Shape& s = shape_of(a);
    if (s.size() != 2 && s.size() != 3) fail("maxpool2d: need rank 2 or 3, got " + shape_str(s));
    int64_t h = s[s.size() - 2], w = s[s.size() - 1];
    if (ph < 1 || pw < 1 || ph > h || pw > w) fail("maxpool2d: bad window");
    Node n;
    n.op = Op::MaxPool2d;
    n.args = {a};
    n.attrs = {ph, pw};
    n.shape = s;
    n.shape[s.size() - 2] = h / ph;
    n.shape[s.size() - 1] = w / pw;
    return push(std::move(n));
}

int Graph::grid_pool(int a, int64_t p1, int64_t p2) {
    const Shape& s = shape_of(a);
    if (s.size() != 2 && s.size() != 3) fail("grid_pool: need rank 2 or 3, got " + shape_str(s));
    int64_t h = s[s.size() - 2], w = s[s.size() - 1];
    if (p1 < 1 || p2 < 1 || p1 > h || p2 > w)
        fail("grid_pool: grid " + std::to_string(p1) + "x" + std::to_string(p2) +
             " exceeds input " + shape_str(s));
    Node n;
    n.op = Op::GridPool;
    n.args = {a};
    n.attrs = {p1, p2};
    n.shape = s;
    n.shape[s.size() - 2] = p1;
    n.shape[s.size() - 1] = p2;
    return push(std::move(n));
}

namespace {

void matmul_kernel(const Tensor& a, const Tensor& b, Tensor& out) {
    // shapes pre-promoted to (m,k) x (k,n)
    int64_t m = a.shape[0], k = a.shape[1], nn = b.shape[1];
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < nn; ++j) {
            double s = 0;
            for (int64_t t = 0; t < k; ++t)
                s += a.data[static_cast<size_t>(i * k + t)] * b.data[static_cast<size_t>(t * nn + j)];
            out.data[static_cast<size_t>(i * nn + j)] = s;
        }
}

Tensor as_matrix(const Tensor& t, bool as_row) {
    if (t.ndim() == 2) return t;
    Tensor m = t;
    m.shape = as_row ? Shape{1, t.shape[0]} : Shape{t.shape[0], 1};
    return m;
}

// pooling region boundaries for grid_pool
inline int64_t grid_lo(int64_t a, int64_t n, int64_t p) { return a * n / p; }
inline int64_t grid_hi(int64_t a, int64_t n, int64_t p) { return (a + 1) * n / p; }

}  // namespace

std::vector<Tensor> forward(const Graph& g, const ParameterStore& params, const Bindings& bindings) {
    std::vector<Tensor> vals(static_cast<size_t>(g.size()));
    for (int id = 0; id < g.size(); ++id) {
        const Node& n = g.node(id);
        Tensor& out = vals[static_cast<size_t>(id)];
        auto arg = [&](int i) -> const Tensor& { return vals[static_cast<size_t>(n.args[static_cast<size_t>(i)])]; };
        switch (n.op) {
            case Op::Input: {
                auto it = bindings.find(n.name);
                if (it == bindings.end()) fail("forward: input '" + n.name + "' not bound");
                if (it->second.shape != n.shape)
                    fail("forward: input '" + n.name + "' expects shape " + shape_str(n.shape) +
                         ", got " + shape_str(it->second.shape));
                out = it->second;
                break;
            }
            case Op::Param:
                out = params.get(n.name).value;
                if (out.shape != n.shape)
                    fail("forward: parameter '" + n.name + "' expects shape " + shape_str(n.shape) +
                         ", got " + shape_str(out.shape));
                break;
            case Op::Const:
                out = n.value;
                break;
            case Op::Add:
            case Op::Sub:
            case Op::Mul: {
                const Tensor& a = arg(0);
                const Tensor& b = arg(1);
                out = Tensor::zeros(n.shape);
                for (size_t i = 0; i < out.data.size(); ++i) {
                    double x = bval(a, i, n.shape), y = bval(b, i, n.shape);
                    out.data[i] = n.op == Op::Add ? x + y : (n.op == Op::Sub ? x - y : x * y);
                }
                break;
            }
            case Op::MatMul: {
                Tensor a = as_matrix(arg(0), true);
                Tensor b = as_matrix(arg(1), false);
                Tensor c = Tensor::zeros({a.shape[0], b.shape[1]});
                matmul_kernel(a, b, c);
                c.shape = n.shape;
                out = std::move(c);
                break;
            }
            case Op::Concat: {
                out = Tensor::zeros(n.shape);
                auto view = axis_view(n.shape, n.axis);
                int64_t off = 0;
                for (size_t p = 0; p < n.args.size(); ++p) {
                    const Tensor& part = arg(static_cast<int>(p));
                    int64_t plen = part.shape[static_cast<size_t>(n.axis)];
                    for (int64_t o = 0; o < view.outer; ++o)
                        for (int64_t l = 0; l < plen; ++l)
                            for (int64_t in = 0; in < view.inner; ++in)
                                out.data[static_cast<size_t>((o * view.len + off + l) * view.inner + in)] =
                                    part.data[static_cast<size_t>((o * plen + l) * view.inner + in)];
                    off += plen;
                }
                break;
            }
            case Op::Reshape:
                out = arg(0);
                out.shape = n.shape;
                break;
            case Op::Slice: {
                const Tensor& a = arg(0);
                out = Tensor::zeros(n.shape);
                auto strides = row_major_strides(a.shape);
                size_t ndim = a.shape.size();
                std::vector<int64_t> idx(ndim, 0);
                for (size_t flat = 0; flat < out.data.size(); ++flat) {
                    size_t src = 0;
                    for (size_t d = 0; d < ndim; ++d)
                        src += static_cast<size_t>((idx[d] + n.attrs[2 * d]) * strides[d]);
                    out.data[flat] = a.data[src];
                    for (size_t d = ndim; d-- > 0;) {
                        if (++idx[d] < n.shape[d]) break;
                        idx[d] = 0;
                    }
                }
                break;
            }
            case Op::Gather: {
                const Tensor& table = arg(0);
                const Tensor& idx = arg(1);
                int64_t v = table.shape[0], d = table.shape[1];
                out = Tensor::zeros(n.shape);
                for (int64_t i = 0; i < idx.numel(); ++i) {
                    int64_t wid = static_cast<int64_t>(idx.data[static_cast<size_t>(i)]);
                    if (wid < 0 || wid >= v)
                        fail("gather: index " + std::to_string(wid) + " out of range [0," +
                             std::to_string(v) + ")");
                    std::copy(table.data.begin() + wid * d, table.data.begin() + (wid + 1) * d,
                              out.data.begin() + i * d);
                }
                break;
            }
            case Op::Sigmoid: {
                out = arg(0);
                for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
                break;
            }
            case Op::Tanh: {
                out = arg(0);
                for (double& v : out.data) v = std::tanh(v);
                break;
            }
            case Op::Relu: {
                out = arg(0);
                for (double& v : out.data) v = v > 0 ? v : 0.0;
                break;
            }
            case Op::Exp: {
                out = arg(0);
                for (double& v : out.data) v = std::exp(v);
                break;
            }
            case Op::Log: {
                out = arg(0);
                for (double& v : out.data) v = std::log(std::max(v, kLogClamp));
                break;
            }
            case Op::Softmax: {
                const Tensor& a = arg(0);
                out = Tensor::zeros(n.shape);
                auto view = axis_view(n.shape, n.axis);
                for (int64_t o = 0; o < view.outer; ++o)
                    for (int64_t in = 0; in < view.inner; ++in) {
                        double mx = -HUGE_VAL;
                        for (int64_t l = 0; l < view.len; ++l)
                            mx = std::max(mx, a.data[static_cast<size_t>((o * view.len + l) * view.inner + in)]);
                        double z = 0;
                        for (int64_t l = 0; l < view.len; ++l) {
                            size_t at = static_cast<size_t>((o * view.len + l) * view.inner + in);
                            out.data[at] = std::exp(a.data[at] - mx);
                            z += out.data[at];
                        }
                        for (int64_t l = 0; l < view.len; ++l)
                            out.data[static_cast<size_t>((o * view.len + l) * view.inner + in)] /= z;
                    }
                break;
            }
            case Op::ReduceSum:
            case Op::ReduceMax:
            case Op::ReduceMean: {
                const Tensor& a = arg(0);
                out = Tensor::zeros(n.shape);
                if (n.axis == -1) {
                    if (n.op == Op::ReduceMax) {
                        double mx = -HUGE_VAL;
                        for (double v : a.data) mx = std::max(mx, v);
                        out.data[0] = mx;
                    } else {
                        double s = 0;
                        for (double v : a.data) s += v;
                        out.data[0] = n.op == Op::ReduceMean ? s / static_cast<double>(a.numel()) : s;
                    }
                } else {
                    auto view = axis_view(a.shape, n.axis);
                    for (int64_t o = 0; o < view.outer; ++o)
                        for (int64_t in = 0; in < view.inner; ++in) {
                            double acc = n.op == Op::ReduceMax ? -HUGE_VAL : 0.0;
                            for (int64_t l = 0; l < view.len; ++l) {
                                double v = a.data[static_cast<size_t>((o * view.len + l) * view.inner + in)];
                                acc = n.op == Op::ReduceMax ? std::max(acc, v) : acc + v;
                            }
                            if (n.op == Op::ReduceMean) acc /= static_cast<double>(view.len);
                            out.data[static_cast<size_t>(o * view.inner + in)] = acc;
                        }
                }
                break;
            }
            case Op::Transpose: {
                const Tensor& a = arg(0);
                out = Tensor::zeros(n.shape);
                int64_t r = a.shape[0], c = a.shape[1];
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j)
                        out.data[static_cast<size_t>(j * r + i)] = a.data[static_cast<size_t>(i * c + j)];
                break;
            }
            case Op::Conv2d: {
                const Tensor& x = arg(0);
                const Tensor& k = arg(1);
                int64_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
                int64_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
                int64_t oh = h - kh + 1, ow = w - kw + 1;
                out = Tensor::zeros(n.shape);
                for (int64_t f = 0; f < co; ++f)
                    for (int64_t i = 0; i < oh; ++i)
                        for (int64_t j = 0; j < ow; ++j) {
                            double s = 0;
                            for (int64_t c = 0; c < ci; ++c)
                                for (int64_t u = 0; u < kh; ++u)
                                    for (int64_t v = 0; v < kw; ++v)
                                        s += x.data[static_cast<size_t>((c * h + i + u) * w + j + v)] *
                                             k.data[static_cast<size_t>(((f * ci + c) * kh + u) * kw + v)];
                            out.data[static_cast<size_t>((f * oh + i) * ow + j)] = s;
                        }
                break;
            }
            case Op::MaxPool2d:
            case Op::GridPool: {
                const Tensor& a = arg(0);
                size_t nd = a.shape.size();
                int64_t ch = nd == 3 ? a.shape[0] : 1;
                int64_t h = a.shape[nd - 2], w = a.shape[nd - 1];
                int64_t oh = n.shape[nd - 2], ow = n.shape[nd - 1];
                out = Tensor::zeros(n.shape);
                for (int64_t c = 0; c < ch; ++c)
                    for (int64_t i = 0; i < oh; ++i)
                        for (int64_t j = 0; j < ow; ++j) {
                            int64_t r0, r1, c0, c1;
                            if (n.op == Op::MaxPool2d) {
                                r0 = i * n.attrs[0]; r1 = r0 + n.attrs[0];
                                c0 = j * n.attrs[1]; c1 = c0 + n.attrs[1];
                            } else {
                                r0 = grid_lo(i, h, oh); r1 = grid_hi(i, h, oh);
                                c0 = grid_lo(j, w, ow); c1 = grid_hi(j, w, ow);
                            }
                            double mx = -HUGE_VAL;
                            for (int64_t r = r0; r < r1; ++r)
                                for (int64_t cc = c0; cc < c1; ++cc)
                                    mx = std::max(mx, a.data[static_cast<size_t>((c * h + r) * w + cc)]);
                            out.data[static_cast<size_t>((c * oh + i) * ow + j)] = mx;
                        }
                break;
            }
        }
    }
    return vals;
}

std::map<std::string, Tensor> backward(const Graph& g, int loss_node,
                                       const std::vector<Tensor>& values,
                                       const ParameterStore& params) {
    const Node& loss = g.node(loss_node);
    if (shape_numel(loss.shape) != 1)
        fail("backward: loss node must be scalar, got shape " + shape_str(loss.shape));

    std::vector<Tensor> adj(static_cast<size_t>(g.size()));
    std::vector<bool> has(static_cast<size_t>(g.size()), false);
    auto seed = [&](int id, Tensor t) {
        size_t i = static_cast<size_t>(id);
        if (!has[i]) {
            adj[i] = std::move(t);
            has[i] = true;
        } else {
            accumulate(adj[i], t);
        }
    };

    adj[static_cast<size_t>(loss_node)] = Tensor::full(loss.shape, 1.0);
    has[static_cast<size_t>(loss_node)] = true;

    for (int id = loss_node; id >= 0; --id) {
        if (!has[static_cast<size_t>(id)]) continue;
        const Node& n = g.node(id);
        const Tensor& gy = adj[static_cast<size_t>(id)];
        const Tensor& y = values[static_cast<size_t>(id)];
        auto val = [&](int i) -> const Tensor& { return values[static_cast<size_t>(n.args[static_cast<size_t>(i)])]; };
        switch (n.op) {
            case Op::Input:
            case Op::Param:
            case Op::Const:
                break;
            case Op::Add:
                seed(n.args[0], reduce_to_shape(gy, val(0).shape));
                seed(n.args[1], reduce_to_shape(gy, val(1).shape));
                break;
            case Op::Sub: {
                seed(n.args[0], reduce_to_shape(gy, val(0).shape));
                Tensor neg = gy;
                for (double& v : neg.data) v = -v;
                seed(n.args[1], reduce_to_shape(neg, val(1).shape));
                break;
            }
            case Op::Mul: {
                const Tensor& a = val(0);
                const Tensor& b = val(1);
                Tensor da = Tensor::zeros(n.shape), db = Tensor::zeros(n.shape);
                for (size_t i = 0; i < gy.data.size(); ++i) {
                    da.data[i] = gy.data[i] * bval(b, i, n.shape);
                    db.data[i] = gy.data[i] * bval(a, i, n.shape);
                }
                seed(n.args[0], reduce_to_shape(da, a.shape));
                seed(n.args[1], reduce_to_shape(db, b.shape));
                break;
            }
            case Op::MatMul: {
                Tensor a = as_matrix(val(0), true);
                Tensor b = as_matrix(val(1), false);
                Tensor gm = gy;
                gm.shape = {a.shape[0], b.shape[1]};
                // dA = g * B^T
                Tensor bt = Tensor::zeros({b.shape[1], b.shape[0]});
                for (int64_t i = 0; i < b.shape[0]; ++i)
                    for (int64_t j = 0; j < b.shape[1]; ++j)
                        bt.data[static_cast<size_t>(j * b.shape[0] + i)] =
                            b.data[static_cast<size_t>(i * b.shape[1] + j)];
                Tensor da = Tensor::zeros({a.shape[0], a.shape[1]});
                matmul_kernel(gm, bt, da);
                da.shape = val(0).shape;
                // dB = A^T * g
                Tensor at = Tensor::zeros({a.shape[1], a.shape[0]});
                for (int64_t i = 0; i < a.shape[0]; ++i)
                    for (int64_t j = 0; j < a.shape[1]; ++j)
                        at.data[static_cast<size_t>(j * a.shape[0] + i)] =
                            a.data[static_cast<size_t>(i * a.shape[1] + j)];
                Tensor db = Tensor::zeros({a.shape[1], b.shape[1]});
                matmul_kernel(at, gm, db);
                db.shape = val(1).shape;
                seed(n.args[0], std::move(da));
                seed(n.args[1], std::move(db));
                break;
            }
            case Op::Concat: {
                auto view = axis_view(n.shape, n.axis);
                int64_t off = 0;
                for (size_t p = 0; p < n.args.size(); ++p) {
                    const Tensor& part = val(static_cast<int>(p));
                    int64_t plen = part.shape[static_cast<size_t>(n.axis)];
                    Tensor dp = Tensor::zeros(part.shape);
                    for (int64_t o = 0; o < view.outer; ++o)
                        for (int64_t l = 0; l < plen; ++l)
                            for (int64_t in = 0; in < view.inner; ++in)
                                dp.data[static_cast<size_t>((o * plen + l) * view.inner + in)] =
                                    gy.data[static_cast<size_t>((o * view.len + off + l) * view.inner + in)];
                    off += plen;
                    seed(n.args[p], std::move(dp));
                }
                break;
            }
            case Op::Reshape: {
                Tensor dx = gy;
                dx.shape = val(0).shape;
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Slice: {
                const Tensor& a = val(0);
                Tensor dx = Tensor::zeros(a.shape);
                auto strides = row_major_strides(a.shape);
                size_t ndim = a.shape.size();
                std::vector<int64_t> idx(ndim, 0);
                for (size_t flat = 0; flat < gy.data.size(); ++flat) {
                    size_t src = 0;
                    for (size_t d = 0; d < ndim; ++d)
                        src += static_cast<size_t>((idx[d] + n.attrs[2 * d]) * strides[d]);
                    dx.data[src] = gy.data[flat];
                    for (size_t d = ndim; d-- > 0;) {
                        if (++idx[d] < n.shape[d]) break;
                        idx[d] = 0;
                    }
                }
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Gather: {
                const Tensor& table = val(0);
                const Tensor& idx = val(1);
                int64_t d = table.shape[1];
                Tensor dt = Tensor::zeros(table.shape);
                for (int64_t i = 0; i < idx.numel(); ++i) {
                    int64_t wid = static_cast<int64_t>(idx.data[static_cast<size_t>(i)]);
                    for (int64_t j = 0; j < d; ++j)
                        dt.data[static_cast<size_t>(wid * d + j)] += gy.data[static_cast<size_t>(i * d + j)];
                }
                seed(n.args[0], std::move(dt));
                break;
            }
            case Op::Sigmoid: {
                Tensor dx = gy;
                for (size_t i = 0; i < dx.data.size(); ++i)
                    dx.data[i] *= y.data[i] * (1.0 - y.data[i]);
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Tanh: {
                Tensor dx = gy;
                for (size_t i = 0; i < dx.data.size(); ++i)
                    dx.data[i] *= 1.0 - y.data[i] * y.data[i];
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Relu: {
                const Tensor& x = val(0);
                Tensor dx = gy;
                for (size_t i = 0; i < dx.data.size(); ++i)
                    if (x.data[i] <= 0) dx.data[i] = 0;
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Exp: {
                Tensor dx = gy;
                for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= y.data[i];
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Log: {
                const Tensor& x = val(0);
                Tensor dx = gy;
                for (size_t i = 0; i < dx.data.size(); ++i)
                    dx.data[i] = x.data[i] >= kLogClamp ? dx.data[i] / x.data[i] : 0.0;
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Softmax: {
                Tensor dx = Tensor::zeros(n.shape);
                auto view = axis_view(n.shape, n.axis);
                for (int64_t o = 0; o < view.outer; ++o)
                    for (int64_t in = 0; in < view.inner; ++in) {
                        double dot = 0;
                        for (int64_t l = 0; l < view.len; ++l) {
                            size_t at = static_cast<size_t>((o * view.len + l) * view.inner + in);
                            dot += gy.data[at] * y.data[at];
                        }
                        for (int64_t l = 0; l < view.len; ++l) {
                            size_t at = static_cast<size_t>((o * view.len + l) * view.inner + in);
                            dx.data[at] = y.data[at] * (gy.data[at] - dot);
                        }
                    }
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::ReduceSum:
            case Op::ReduceMean: {
                const Tensor& a = val(0);
                Tensor dx = Tensor::zeros(a.shape);
                if (n.axis == -1) {
                    double v = gy.data[0];
                    if (n.op == Op::ReduceMean) v /= static_cast<double>(a.numel());
                    std::fill(dx.data.begin(), dx.data.end(), v);
                } else {
                    auto view = axis_view(a.shape, n.axis);
                    for (int64_t o = 0; o < view.outer; ++o)
                        for (int64_t in = 0; in < view.inner; ++in) {
                            double v = gy.data[static_cast<size_t>(o * view.inner + in)];
                            if (n.op == Op::ReduceMean) v /= static_cast<double>(view.len);
                            for (int64_t l = 0; l < view.len; ++l)
                                dx.data[static_cast<size_t>((o * view.len + l) * view.inner + in)] = v;
                        }
                }
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::ReduceMax: {
                const Tensor& a = val(0);
                Tensor dx = Tensor::zeros(a.shape);
                if (n.axis == -1) {
                    size_t best = 0;
                    for (size_t i = 1; i < a.data.size(); ++i)
                        if (a.data[i] > a.data[best]) best = i;
                    dx.data[best] = gy.data[0];
                } else {
                    auto view = axis_view(a.shape, n.axis);
                    for (int64_t o = 0; o < view.outer; ++o)
                        for (int64_t in = 0; in < view.inner; ++in) {
                            int64_t best = 0;
                            double mx = -HUGE_VAL;
                            for (int64_t l = 0; l < view.len; ++l) {
                                double v = a.data[static_cast<size_t>((o * view.len + l) * view.inner + in)];
                                if (v > mx) { mx = v; best = l; }
                            }
                            dx.data[static_cast<size_t>((o * view.len + best) * view.inner + in)] =
                                gy.data[static_cast<size_t>(o * view.inner + in)];
                        }
                }
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Transpose: {
                const Tensor& a = val(0);
                Tensor dx = Tensor::zeros(a.shape);
                int64_t r = a.shape[0], c = a.shape[1];
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j)
                        dx.data[static_cast<size_t>(i * c + j)] = gy.data[static_cast<size_t>(j * r + i)];
                seed(n.args[0], std::move(dx));
                break;
            }
            case Op::Conv2d: {
                const Tensor& x = val(0);
                const Tensor& k = val(1);
                int64_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
                int64_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
                int64_t oh = n.shape[1], ow = n.shape[2];
                Tensor dx = Tensor::zeros(x.shape);
                Tensor dk = Tensor::zeros(k.shape);
                for (int64_t f = 0; f < co; ++f)
                    for (int64_t i = 0; i < oh; ++i)
                        for (int64_t j = 0; j < ow; ++j) {
                            double go = gy.data[static_cast<size_t>((f * oh + i) * ow + j)];
                            for (int64_t c = 0; c < ci; ++c)
                                for (int64_t u = 0; u < kh; ++u)
                                    for (int64_t v = 0; v < kw; ++v) {
                                        size_t xi = static_cast<size_t>((c * h + i + u) * w + j + v);
                                        size_t ki = static_cast<size_t>(((f * ci + c) * kh + u) * kw + v);
                                        dx.data[xi] += go * k.data[ki];
                                        dk.data[ki] += go * x.data[xi];
                                    }
                        }
                seed(n.args[0], std::move(dx));
                seed(n.args[1], std::move(dk));
                break;
            }
            case Op::MaxPool2d:
            case Op::GridPool: {
                const Tensor& a = val(0);
                size_t nd = a.shape.size();
                int64_t ch = nd == 3 ? a.shape[0] : 1;
                int64_t h = a.shape[nd - 2], w = a.shape[nd - 1];
                int64_t oh = n.shape[nd - 2], ow = n.shape[nd - 1];
                Tensor dx = Tensor::zeros(a.shape);
                for (int64_t c = 0; c < ch; ++c)
                    for (int64_t i = 0; i < oh; ++i)
                        for (int64_t j = 0; j < ow; ++j) {
                            int64_t r0, r1, c0, c1;
                            if (n.op == Op::MaxPool2d) {
                                r0 = i * n.attrs[0]; r1 = r0 + n.attrs[0];
                                c0 = j * n.attrs[1]; c1 = c0 + n.attrs[1];
                            } else {
                                r0 = grid_lo(i, h, oh); r1 = grid_hi(i, h, oh);
                                c0 = grid_lo(j, w, ow); c1 = grid_hi(j, w, ow);
                            }
                            // first maximum in row-major order takes the gradient
                            int64_t br = r0, bc = c0;
                            double mx = -HUGE_VAL;
                            for (int64_t r = r0; r < r1; ++r)
                                for (int64_t cc = c0; cc < c1; ++cc) {
                                    double v = a.data[static_cast<size_t>((c * h + r) * w + cc)];
                                    if (v > mx) { mx = v; br = r; bc = cc; }
                                }
                            dx.data[static_cast<size_t>((c * h + br) * w + bc)] +=
                                gy.data[static_cast<size_t>((c * oh + i) * ow + j)];
                        }
                seed(n.args[0], std::move(dx));
                break;
            }
        }
    }

    std::map<std::string, Tensor> grads;
    for (const auto& p : params.all()) grads[p.name] = Tensor::zeros(p.value.shape);
    for (int id = 0; id <= loss_node; ++id) {
        const Node& n = g.node(id);
        if (n.op == Op::Param && has[static_cast<size_t>(id)])
            accumulate(grads[n.name], adj[static_cast<size_t>(id)]);
    }
    return grads;
}

bool near_nondifferentiable(const Graph& g, const std::vector<Tensor>& values, double margin) {
    auto tight_gap = [&](const double* data, int64_t count, int64_t stride) {
        double best = -HUGE_VAL, second = -HUGE_VAL;
        for (int64_t i = 0; i < count; ++i) {
            double v = data[i * stride];
            if (v > best) { second = best; best = v; }
            else if (v > second) { second = v; }
        }
        return count > 1 && best - second < margin;
    };
    for (int id = 0; id < g.size(); ++id) {
        const Node& n = g.node(id);
        if (n.op == Op::Relu) {
            for (double v : values[static_cast<size_t>(n.args[0])].data)
                if (std::fabs(v) < margin) return true;
        } else if (n.op == Op::Log) {
            // the clamp region and the blow-up just above it
            for (double v : values[static_cast<size_t>(n.args[0])].data)
                if (v < margin) return true;
        } else if (n.op == Op::ReduceMax) {
            const Tensor& a = values[static_cast<size_t>(n.args[0])];
            if (n.axis == -1) {
                if (tight_gap(a.data.data(), a.numel(), 1)) return true;
            } else {
                auto view = axis_view(a.shape, n.axis);
                for (int64_t o = 0; o < view.outer; ++o)
                    for (int64_t in = 0; in < view.inner; ++in)
                        if (tight_gap(a.data.data() + o * view.len * view.inner + in, view.len,
                                      view.inner))
                            return true;
            }
        } else if (n.op == Op::MaxPool2d || n.op == Op::GridPool) {
            const Tensor& a = values[static_cast<size_t>(n.args[0])];
            size_t nd = a.shape.size();
            int64_t ch = nd == 3 ? a.shape[0] : 1;
            int64_t h = a.shape[nd - 2], w = a.shape[nd - 1];
            int64_t oh = n.shape[nd - 2], ow = n.shape[nd - 1];
            for (int64_t c = 0; c < ch; ++c)
                for (int64_t i = 0; i < oh; ++i)
                    for (int64_t j = 0; j < ow; ++j) {
                        int64_t r0, r1, c0, c1;
                        if (n.op == Op::MaxPool2d) {
                            r0 = i * n.attrs[0]; r1 = r0 + n.attrs[0];
                            c0 = j * n.attrs[1]; c1 = c0 + n.attrs[1];
                        } else {
                            r0 = grid_lo(i, h, oh); r1 = grid_hi(i, h, oh);
                            c0 = grid_lo(j, w, ow); c1 = grid_hi(j, w, ow);
                        }
                        double best = -HUGE_VAL, second = -HUGE_VAL;
                        for (int64_t r = r0; r < r1; ++r)
                            for (int64_t cc = c0; cc < c1; ++cc) {
                                double v = a.data[static_cast<size_t>((c * h + r) * w + cc)];
                                if (v > best) { second = best; best = v; }
                                else if (v > second) { second = v; }
                            }
                        if ((r1 - r0) * (c1 - c0) > 1 && best - second < margin) return true;
                    }
        }
    }
    return false;
}

GradCheckReport grad_check(const Graph& g, int loss_node, ParameterStore& params,
                           const Bindings& bindings, double step, double tolerance) {
    auto values = forward(g, params, bindings);
    auto analytic = backward(g, loss_node, values, params);

    GradCheckReport report;
    for (auto& p : params.all()) {
        const Tensor& ag = analytic[p.name];
        double worst = 0.0;
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            double orig = p.value.data[i];
            p.value.data[i] = orig + step;
            double lp = forward(g, params, bindings)[static_cast<size_t>(loss_node)].data[0];
            p.value.data[i] = orig - step;
            double lm = forward(g, params, bindings)[static_cast<size_t>(loss_node)].data[0];
            p.value.data[i] = orig;
            double numeric = (lp - lm) / (2.0 * step);
            double a = ag.data[i];
            double rel = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            worst = std::max(worst, rel);
        }
        report.entries.push_back({p.name, worst});
        report.worst = std::max(report.worst, worst);
        if (worst > tolerance) report.pass = false;
    }
    return report;
}

}  // namespace mz
