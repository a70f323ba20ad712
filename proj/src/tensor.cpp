#include "scenefit/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace scenefit {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream oss;
    oss << "[";
    for (size_t i = 0; i < s.size(); i++) {
        oss << s[i] << (i + 1 < s.size() ? "," : "");
    }
    oss << "]";
    return oss.str();
}

double Var::item() const {
    if (size() != 1) {
        throw std::runtime_error("Var::item on non-scalar " + shape_str(shape()));
    }
    return data()[0];
}

namespace {

void check(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::runtime_error("tensor: " + msg);
    }
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value,
                                std::vector<Var> parents, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->op = op;
    for (const auto& p : n->parents) {
        if (p.requires_grad()) {
            n->requires_grad = true;
        }
    }
    return n;
}

void same_shape(const Var& a, const Var& b, const char* op) {
    check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

}  // namespace

Var leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    check(static_cast<int64_t>(data.size()) == numel(shape),
          "leaf: data size does not match shape " + shape_str(shape));
    auto n = make_node(std::move(shape), std::move(data), {}, "leaf");
    n->requires_grad = requires_grad;
    return Var(n);
}

Var zeros(Shape shape, bool requires_grad) {
    const size_t n = static_cast<size_t>(numel(shape));
    return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Var full(Shape shape, double v) {
    std::vector<double> d(static_cast<size_t>(numel(shape)), v);
    return leaf(std::move(shape), std::move(d), false);
}

Var scalar(double v) { return leaf({1}, {v}, false); }

// ---------------------------------------------------------------------------
// autodiff driver
// ---------------------------------------------------------------------------

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                      Var grad_output) {
    check(output.defined(), "grad: undefined output");
    if (!grad_output.defined()) {
        grad_output = full(output.shape(), 1.0);
    }
    check(grad_output.shape() == output.shape(),
          "grad: grad_output shape mismatch");

    // Topological order over the requires_grad subgraph. Owning handles are
    // kept per node so grad-graph closures can reference them safely.
    std::vector<Node*> order;
    std::unordered_map<Node*, Var> handle;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    if (output.requires_grad()) {
        stack.push_back({output.node(), 0});
        visited.insert(output.node());
        handle[output.node()] = output;
    }
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            const Var& pv = node->parents[idx];
            Node* p = pv.node();
            idx++;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                handle[p] = pv;
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<Node*, Var> grads;
    grads[output.node()] = grad_output;

    // Reverse topological order: order is post-order, so iterate backwards.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto git = grads.find(node);
        if (git == grads.end() || !node->backward) {
            continue;
        }
        std::vector<Var> pgrads = node->backward(handle.at(node), git->second);
        check(pgrads.size() == node->parents.size(),
              std::string("backward arity mismatch for op ") + node->op);
        for (size_t i = 0; i < pgrads.size(); i++) {
            const Var& p = node->parents[i];
            if (!pgrads[i].defined() || !p.requires_grad()) {
                continue;
            }
            check(pgrads[i].shape() == p.shape(),
                  std::string("backward shape mismatch for op ") + node->op);
            auto pit = grads.find(p.node());
            if (pit == grads.end()) {
                grads[p.node()] = pgrads[i];
            } else {
                pit->second = add(pit->second, pgrads[i]);
            }
        }
    }

    std::vector<Var> result;
    result.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto it = grads.find(in.node());
        if (it == grads.end()) {
            result.push_back(zeros(in.shape()));
        } else {
            result.push_back(it->second);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    same_shape(a, b, "add");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = a.data()[i] + b.data()[i];
    }
    auto n = make_node(a.shape(), std::move(v), {a, b}, "add");
    n->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{g, g};
    };
    return Var(n);
}

Var sub(const Var& a, const Var& b) {
    same_shape(a, b, "sub");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = a.data()[i] - b.data()[i];
    }
    auto n = make_node(a.shape(), std::move(v), {a, b}, "sub");
    n->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{g, neg(g)};
    };
    return Var(n);
}

Var mul(const Var& a, const Var& b) {
    same_shape(a, b, "mul");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = a.data()[i] * b.data()[i];
    }
    auto n = make_node(a.shape(), std::move(v), {a, b}, "mul");
    n->backward = [a, b](const Var&, const Var& g) {
        return std::vector<Var>{mul(g, b), mul(g, a)};
    };
    return Var(n);
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = a.data()[i] * c;
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "scale");
    n->backward = [c](const Var&, const Var& g) {
        return std::vector<Var>{scale(g, c)};
    };
    return Var(n);
}

Var add_scalar(const Var& a, double c) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = a.data()[i] + c;
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "add_scalar");
    n->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{g};
    };
    return Var(n);
}

Var recip(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = 1.0 / a.data()[i];
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "recip");
    n->backward = [](const Var& self, const Var& g) {
        return std::vector<Var>{neg(mul(g, mul(self, self)))};
    };
    return Var(n);
}

Var exp(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = std::exp(a.data()[i]);
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "exp");
    n->backward = [](const Var& self, const Var& g) {
        return std::vector<Var>{mul(g, self)};
    };
    return Var(n);
}

Var log(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = std::log(a.data()[i]);
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "log");
    n->backward = [a](const Var&, const Var& g) {
        return std::vector<Var>{mul(g, recip(a))};
    };
    return Var(n);
}

Var sqrt(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = std::sqrt(a.data()[i]);
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "sqrt");
    n->backward = [](const Var& self, const Var& g) {
        return std::vector<Var>{mul(g, scale(recip(self), 0.5))};
    };
    return Var(n);
}

Var square(const Var& a) { return mul(a, a); }

Var tanh(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = std::tanh(a.data()[i]);
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "tanh");
    n->backward = [](const Var& self, const Var& g) {
        return std::vector<Var>{
            mul(g, add_scalar(neg(mul(self, self)), 1.0))};
    };
    return Var(n);
}

Var sigmoid(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        const double x = a.data()[i];
        v[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "sigmoid");
    n->backward = [](const Var& self, const Var& g) {
        return std::vector<Var>{
            mul(g, mul(self, add_scalar(neg(self), 1.0)))};
    };
    return Var(n);
}

Var softplus(const Var& a) {
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        const double x = a.data()[i];
        v[i] = x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0)));
    }
    auto n = make_node(a.shape(), std::move(v), {a}, "softplus");
    n->backward = [a](const Var&, const Var& g) {
        return std::vector<Var>{mul(g, sigmoid(a))};
    };
    return Var(n);
}

Var abs(const Var& a) {
    std::vector<double> v(a.data().size());
    std::vector<double> sign(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        v[i] = std::abs(a.data()[i]);
        sign[i] = a.data()[i] > 0 ? 1.0 : (a.data()[i] < 0 ? -1.0 : 0.0);
    }
    Var sign_var = leaf(a.shape(), std::move(sign));
    auto n = make_node(a.shape(), std::move(v), {a}, "abs");
    n->backward = [sign_var](const Var&, const Var& g) {
        return std::vector<Var>{mul(g, sign_var)};
    };
    return Var(n);
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var leaky_relu(const Var& a, double slope) {
    std::vector<double> v(a.data().size());
    std::vector<double> mask(a.data().size());
    for (size_t i = 0; i < v.size(); i++) {
        const bool pos = a.data()[i] > 0;
        mask[i] = pos ? 1.0 : slope;
        v[i] = a.data()[i] * mask[i];
    }
    Var mask_var = leaf(a.shape(), std::move(mask));
    auto n = make_node(a.shape(), std::move(v), {a}, "leaky_relu");
    n->backward = [mask_var](const Var&, const Var& g) {
        return std::vector<Var>{mul(g, mask_var)};
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2, "matmul: need 2-D");
    const int m = a.shape()[0], k = a.shape()[1];
    const int k2 = b.shape()[0], n_cols = b.shape()[1];
    check(k == k2, "matmul: inner dims " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    std::vector<double> v(static_cast<size_t>(m) * n_cols);
    ConstMapRM A(a.data().data(), m, k);
    ConstMapRM B(b.data().data(), k, n_cols);
    MapRM C(v.data(), m, n_cols);
    C.noalias() = A * B;
    auto n = make_node({m, n_cols}, std::move(v), {a, b}, "matmul");
    n->backward = [a, b](const Var&, const Var& g) {
        return std::vector<Var>{matmul(g, transpose(b)),
                                matmul(transpose(a), g)};
    };
    return Var(n);
}

Var transpose(const Var& a) {
    check(a.shape().size() == 2, "transpose: need 2-D");
    const int m = a.shape()[0], k = a.shape()[1];
    std::vector<double> v(a.data().size());
    for (int i = 0; i < m; i++) {
        for (int j = 0; j < k; j++) {
            v[static_cast<size_t>(j) * m + i] =
                a.data()[static_cast<size_t>(i) * k + j];
        }
    }
    auto n = make_node({k, m}, std::move(v), {a}, "transpose");
    n->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{transpose(g)};
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int n, c, h, w;       // input
    int o, kh, kw;        // kernel
    int ho, wo;           // output
    int stride, pad;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
    check(xs.size() == 4 && ws.size() == 4, "conv2d: need 4-D tensors");
    ConvDims d;
    d.n = xs[0];
    d.c = xs[1];
    d.h = xs[2];
    d.w = xs[3];
    d.o = ws[0];
    d.kh = ws[2];
    d.kw = ws[3];
    d.stride = stride;
    d.pad = pad;
    check(ws[1] == d.c, "conv2d: channel mismatch");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    check(d.ho > 0 && d.wo > 0, "conv2d: empty output");
    return d;
}

// col buffer layout: [C*kh*kw, Ho*Wo]
void im2col(const double* x, const ConvDims& d, double* col) {
    const int64_t hw = static_cast<int64_t>(d.h) * d.w;
    for (int c = 0; c < d.c; c++) {
        for (int ki = 0; ki < d.kh; ki++) {
            for (int kj = 0; kj < d.kw; kj++) {
                double* dst = col + (static_cast<int64_t>(c) * d.kh * d.kw +
                                     ki * d.kw + kj) *
                                        d.ho * d.wo;
                for (int oi = 0; oi < d.ho; oi++) {
                    const int ii = oi * d.stride - d.pad + ki;
                    for (int oj = 0; oj < d.wo; oj++) {
                        const int jj = oj * d.stride - d.pad + kj;
                        if (ii >= 0 && ii < d.h && jj >= 0 && jj < d.w) {
                            dst[oi * d.wo + oj] =
                                x[c * hw + static_cast<int64_t>(ii) * d.w + jj];
                        } else {
                            dst[oi * d.wo + oj] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

// scatter-add of a col buffer back to input layout
void col2im(const double* col, const ConvDims& d, double* x) {
    const int64_t hw = static_cast<int64_t>(d.h) * d.w;
    for (int c = 0; c < d.c; c++) {
        for (int ki = 0; ki < d.kh; ki++) {
            for (int kj = 0; kj < d.kw; kj++) {
                const double* src =
                    col + (static_cast<int64_t>(c) * d.kh * d.kw + ki * d.kw +
                           kj) *
                              d.ho * d.wo;
                for (int oi = 0; oi < d.ho; oi++) {
                    const int ii = oi * d.stride - d.pad + ki;
                    if (ii < 0 || ii >= d.h) {
                        continue;
                    }
                    for (int oj = 0; oj < d.wo; oj++) {
                        const int jj = oj * d.stride - d.pad + kj;
                        if (jj >= 0 && jj < d.w) {
                            x[c * hw + static_cast<int64_t>(ii) * d.w + jj] +=
                                src[oi * d.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, int stride, int pad) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
    std::vector<double> out(static_cast<size_t>(d.n) * d.o * d.ho * d.wo);
    const int ck = d.c * d.kh * d.kw;
    std::vector<double> col(static_cast<size_t>(ck) * d.ho * d.wo);
    ConstMapRM W(w.data().data(), d.o, ck);
    for (int nn = 0; nn < d.n; nn++) {
        im2col(x.data().data() + static_cast<int64_t>(nn) * d.c * d.h * d.w, d,
               col.data());
        ConstMapRM Col(col.data(), ck, d.ho * d.wo);
        MapRM Out(out.data() + static_cast<int64_t>(nn) * d.o * d.ho * d.wo,
                  d.o, d.ho * d.wo);
        Out.noalias() = W * Col;
    }
    auto n =
        make_node({d.n, d.o, d.ho, d.wo}, std::move(out), {x, w}, "conv2d");
    const int in_h = d.h, in_w = d.w, kh = d.kh, kw = d.kw;
    n->backward = [x, w, stride, pad, in_h, in_w, kh, kw](const Var&,
                                                          const Var& g) {
        return std::vector<Var>{
            conv2d_input_grad(g, w, stride, pad, in_h, in_w),
            conv2d_weight_grad(x, g, stride, pad, kh, kw)};
    };
    return Var(n);
}

Var conv2d_input_grad(const Var& g, const Var& w, int stride, int pad,
                      int in_h, int in_w) {
    // adjoint of conv2d in x: given g with output shape, produce dx
    const Shape& gs = g.shape();
    const Shape& ws = w.shape();
    check(gs.size() == 4 && ws.size() == 4, "conv2d_input_grad: need 4-D");
    ConvDims d;
    d.n = gs[0];
    d.o = ws[0];
    d.c = ws[1];
    d.kh = ws[2];
    d.kw = ws[3];
    d.h = in_h;
    d.w = in_w;
    d.ho = gs[2];
    d.wo = gs[3];
    d.stride = stride;
    d.pad = pad;
    check(gs[1] == d.o, "conv2d_input_grad: channel mismatch");
    const int ck = d.c * d.kh * d.kw;
    std::vector<double> out(static_cast<size_t>(d.n) * d.c * d.h * d.w, 0.0);
    std::vector<double> col(static_cast<size_t>(ck) * d.ho * d.wo);
    ConstMapRM W(w.data().data(), d.o, ck);
    for (int nn = 0; nn < d.n; nn++) {
        ConstMapRM G(g.data().data() + static_cast<int64_t>(nn) * d.o * d.ho *
                         d.wo,
                     d.o, d.ho * d.wo);
        MapRM Col(col.data(), ck, d.ho * d.wo);
        Col.noalias() = W.transpose() * G;
        col2im(col.data(), d,
               out.data() + static_cast<int64_t>(nn) * d.c * d.h * d.w);
    }
    auto n = make_node({d.n, d.c, d.h, d.w}, std::move(out), {g, w},
                       "conv2d_input_grad");
    n->backward = [g, w, stride, pad](const Var&, const Var& gg) {
        const int kh = w.shape()[2], kw = w.shape()[3];
        return std::vector<Var>{conv2d(gg, w, stride, pad),
                                conv2d_weight_grad(gg, g, stride, pad, kh, kw)};
    };
    return Var(n);
}

Var conv2d_weight_grad(const Var& x, const Var& g, int stride, int pad,
                       int kh, int kw) {
    const Shape& xs = x.shape();
    const Shape& gs = g.shape();
    check(xs.size() == 4 && gs.size() == 4, "conv2d_weight_grad: need 4-D");
    ConvDims d;
    d.n = xs[0];
    d.c = xs[1];
    d.h = xs[2];
    d.w = xs[3];
    d.o = gs[1];
    d.kh = kh;
    d.kw = kw;
    d.ho = gs[2];
    d.wo = gs[3];
    d.stride = stride;
    d.pad = pad;
    check(gs[0] == d.n, "conv2d_weight_grad: batch mismatch");
    const int ck = d.c * d.kh * d.kw;
    std::vector<double> out(static_cast<size_t>(d.o) * ck, 0.0);
    std::vector<double> col(static_cast<size_t>(ck) * d.ho * d.wo);
    MapRM DW(out.data(), d.o, ck);
    for (int nn = 0; nn < d.n; nn++) {
        im2col(x.data().data() + static_cast<int64_t>(nn) * d.c * d.h * d.w, d,
               col.data());
        ConstMapRM Col(col.data(), ck, d.ho * d.wo);
        ConstMapRM G(g.data().data() + static_cast<int64_t>(nn) * d.o * d.ho *
                         d.wo,
                     d.o, d.ho * d.wo);
        DW.noalias() += G * Col.transpose();
    }
    auto n =
        make_node({d.o, d.c, d.kh, d.kw}, std::move(out), {x, g},
                  "conv2d_weight_grad");
    const int in_h = d.h, in_w = d.w;
    n->backward = [x, g, stride, pad, in_h, in_w](const Var&, const Var& gw) {
        return std::vector<Var>{
            conv2d_input_grad(g, gw, stride, pad, in_h, in_w),
            conv2d(x, gw, stride, pad)};
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// broadcast / reduce pairs
// ---------------------------------------------------------------------------

Var broadcast_c(const Var& b, int n, int h, int w) {
    check(b.shape().size() == 1, "broadcast_c: need 1-D");
    const int c = b.shape()[0];
    std::vector<double> v(static_cast<size_t>(n) * c * h * w);
    for (int nn = 0; nn < n; nn++) {
        for (int cc = 0; cc < c; cc++) {
            const double val = b.data()[cc];
            double* dst = v.data() + (static_cast<int64_t>(nn) * c + cc) * h * w;
            std::fill(dst, dst + static_cast<int64_t>(h) * w, val);
        }
    }
    auto node = make_node({n, c, h, w}, std::move(v), {b}, "broadcast_c");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sum_nhw(g)};
    };
    return Var(node);
}

Var sum_nhw(const Var& x) {
    check(x.shape().size() == 4, "sum_nhw: need 4-D");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3];
    std::vector<double> v(c, 0.0);
    for (int nn = 0; nn < n; nn++) {
        for (int cc = 0; cc < c; cc++) {
            const double* src =
                x.data().data() + (static_cast<int64_t>(nn) * c + cc) * h * w;
            double s = 0.0;
            for (int64_t i = 0; i < static_cast<int64_t>(h) * w; i++) {
                s += src[i];
            }
            v[cc] += s;
        }
    }
    auto node = make_node({c}, std::move(v), {x}, "sum_nhw");
    node->backward = [n, h, w](const Var&, const Var& g) {
        return std::vector<Var>{broadcast_c(g, n, h, w)};
    };
    return Var(node);
}

Var broadcast_rows(const Var& b, int n) {
    check(b.shape().size() == 1, "broadcast_rows: need 1-D");
    const int f = b.shape()[0];
    std::vector<double> v(static_cast<size_t>(n) * f);
    for (int i = 0; i < n; i++) {
        std::copy(b.data().begin(), b.data().end(),
                  v.begin() + static_cast<int64_t>(i) * f);
    }
    auto node = make_node({n, f}, std::move(v), {b}, "broadcast_rows");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sum_rows(g)};
    };
    return Var(node);
}

Var sum_rows(const Var& x) {
    check(x.shape().size() == 2, "sum_rows: need 2-D");
    const int n = x.shape()[0], f = x.shape()[1];
    std::vector<double> v(f, 0.0);
    for (int i = 0; i < n; i++) {
        for (int j = 0; j < f; j++) {
            v[j] += x.data()[static_cast<int64_t>(i) * f + j];
        }
    }
    auto node = make_node({f}, std::move(v), {x}, "sum_rows");
    node->backward = [n](const Var&, const Var& g) {
        return std::vector<Var>{broadcast_rows(g, n)};
    };
    return Var(node);
}

Var broadcast_cols(const Var& b, int f) {
    check(b.shape().size() == 1, "broadcast_cols: need 1-D");
    const int n = b.shape()[0];
    std::vector<double> v(static_cast<size_t>(n) * f);
    for (int i = 0; i < n; i++) {
        std::fill(v.begin() + static_cast<int64_t>(i) * f,
                  v.begin() + static_cast<int64_t>(i + 1) * f, b.data()[i]);
    }
    auto node = make_node({n, f}, std::move(v), {b}, "broadcast_cols");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sum_cols(g)};
    };
    return Var(node);
}

Var sum_cols(const Var& x) {
    check(x.shape().size() == 2, "sum_cols: need 2-D");
    const int n = x.shape()[0], f = x.shape()[1];
    std::vector<double> v(n, 0.0);
    for (int i = 0; i < n; i++) {
        double s = 0.0;
        for (int j = 0; j < f; j++) {
            s += x.data()[static_cast<int64_t>(i) * f + j];
        }
        v[i] = s;
    }
    auto node = make_node({n}, std::move(v), {x}, "sum_cols");
    node->backward = [f](const Var&, const Var& g) {
        return std::vector<Var>{broadcast_cols(g, f)};
    };
    return Var(node);
}

Var broadcast_nc(const Var& s, int h, int w) {
    check(s.shape().size() == 2, "broadcast_nc: need 2-D");
    const int n = s.shape()[0], c = s.shape()[1];
    std::vector<double> v(static_cast<size_t>(n) * c * h * w);
    for (int i = 0; i < n * c; i++) {
        double* dst = v.data() + static_cast<int64_t>(i) * h * w;
        std::fill(dst, dst + static_cast<int64_t>(h) * w, s.data()[i]);
    }
    auto node = make_node({n, c, h, w}, std::move(v), {s}, "broadcast_nc");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sum_hw(g)};
    };
    return Var(node);
}

Var sum_hw(const Var& x) {
    check(x.shape().size() == 4, "sum_hw: need 4-D");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3];
    std::vector<double> v(static_cast<size_t>(n) * c, 0.0);
    for (int i = 0; i < n * c; i++) {
        const double* src = x.data().data() + static_cast<int64_t>(i) * h * w;
        double s = 0.0;
        for (int64_t k = 0; k < static_cast<int64_t>(h) * w; k++) {
            s += src[k];
        }
        v[i] = s;
    }
    auto node = make_node({n, c}, std::move(v), {x}, "sum_hw");
    node->backward = [h, w](const Var&, const Var& g) {
        return std::vector<Var>{broadcast_nc(g, h, w)};
    };
    return Var(node);
}

Var broadcast_chan(const Var& x, int c) {
    check(x.shape().size() == 4 && x.shape()[1] == 1,
          "broadcast_chan: need [N,1,H,W]");
    const int n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> v(static_cast<size_t>(n) * c * hw);
    for (int nn = 0; nn < n; nn++) {
        const double* src = x.data().data() + nn * hw;
        for (int cc = 0; cc < c; cc++) {
            std::copy(src, src + hw,
                      v.begin() + (static_cast<int64_t>(nn) * c + cc) * hw);
        }
    }
    auto node = make_node({n, c, h, w}, std::move(v), {x}, "broadcast_chan");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sum_chan(g)};
    };
    return Var(node);
}

Var sum_chan(const Var& x) {
    check(x.shape().size() == 4, "sum_chan: need 4-D");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3];
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> v(static_cast<size_t>(n) * hw, 0.0);
    for (int nn = 0; nn < n; nn++) {
        for (int cc = 0; cc < c; cc++) {
            const double* src =
                x.data().data() + (static_cast<int64_t>(nn) * c + cc) * hw;
            double* dst = v.data() + nn * hw;
            for (int64_t i = 0; i < hw; i++) {
                dst[i] += src[i];
            }
        }
    }
    auto node = make_node({n, 1, h, w}, std::move(v), {x}, "sum_chan");
    node->backward = [c](const Var&, const Var& g) {
        return std::vector<Var>{broadcast_chan(g, c)};
    };
    return Var(node);
}

Var broadcast_all(const Var& s, Shape shape) {
    check(s.size() == 1, "broadcast_all: need scalar");
    std::vector<double> v(static_cast<size_t>(numel(shape)), s.data()[0]);
    auto node = make_node(std::move(shape), std::move(v), {s}, "broadcast_all");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sum_all(g)};
    };
    return Var(node);
}

Var sum_all(const Var& x) {
    double s = 0.0;
    for (double v : x.data()) {
        s += v;
    }
    auto node = make_node({1}, {s}, {x}, "sum_all");
    const Shape xs = x.shape();
    node->backward = [xs](const Var&, const Var& g) {
        return std::vector<Var>{broadcast_all(g, xs)};
    };
    return Var(node);
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Var reshape(const Var& x, Shape shape) {
    check(numel(shape) == x.size(), "reshape: element count mismatch");
    auto node = make_node(shape, x.data(), {x}, "reshape");
    const Shape xs = x.shape();
    node->backward = [xs](const Var&, const Var& g) {
        return std::vector<Var>{reshape(g, xs)};
    };
    return Var(node);
}

Var concat_c(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat_c: empty input");
    const Shape& s0 = xs[0].shape();
    check(s0.size() == 4, "concat_c: need 4-D");
    int total_c = 0;
    for (const auto& x : xs) {
        check(x.shape().size() == 4 && x.shape()[0] == s0[0] &&
                  x.shape()[2] == s0[2] && x.shape()[3] == s0[3],
              "concat_c: incompatible shapes");
        total_c += x.shape()[1];
    }
    const int n = s0[0], h = s0[2], w = s0[3];
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> v(static_cast<size_t>(n) * total_c * hw);
    for (int nn = 0; nn < n; nn++) {
        int64_t coff = 0;
        for (const auto& x : xs) {
            const int c = x.shape()[1];
            std::copy(
                x.data().begin() + static_cast<int64_t>(nn) * c * hw,
                x.data().begin() + static_cast<int64_t>(nn + 1) * c * hw,
                v.begin() + (static_cast<int64_t>(nn) * total_c + coff) * hw);
            coff += c;
        }
    }
    auto node = make_node({n, total_c, h, w}, std::move(v), xs, "concat_c");
    std::vector<int> channels;
    for (const auto& x : xs) {
        channels.push_back(x.shape()[1]);
    }
    node->backward = [channels](const Var&, const Var& g) {
        std::vector<Var> gs;
        int from = 0;
        for (int c : channels) {
            gs.push_back(slice_c(g, from, c));
            from += c;
        }
        return gs;
    };
    return Var(node);
}

Var slice_c(const Var& x, int from, int count) {
    check(x.shape().size() == 4, "slice_c: need 4-D");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3];
    check(from >= 0 && count > 0 && from + count <= c, "slice_c: range");
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> v(static_cast<size_t>(n) * count * hw);
    for (int nn = 0; nn < n; nn++) {
        std::copy(x.data().begin() + (static_cast<int64_t>(nn) * c + from) * hw,
                  x.data().begin() +
                      (static_cast<int64_t>(nn) * c + from + count) * hw,
                  v.begin() + static_cast<int64_t>(nn) * count * hw);
    }
    auto node = make_node({n, count, h, w}, std::move(v), {x}, "slice_c");
    node->backward = [from, count, c, n, h, w](const Var&, const Var& g) {
        std::vector<Var> pieces;
        if (from > 0) {
            pieces.push_back(zeros({n, from, h, w}));
        }
        pieces.push_back(g);
        if (from + count < c) {
            pieces.push_back(zeros({n, c - from - count, h, w}));
        }
        return std::vector<Var>{pieces.size() == 1 ? pieces[0]
                                                   : concat_c(pieces)};
    };
    return Var(node);
}

Var upsample2x(const Var& x) {
    check(x.shape().size() == 4, "upsample2x: need 4-D");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3];
    std::vector<double> v(static_cast<size_t>(n) * c * 4 * h * w);
    for (int i = 0; i < n * c; i++) {
        const double* src = x.data().data() + static_cast<int64_t>(i) * h * w;
        double* dst = v.data() + static_cast<int64_t>(i) * 4 * h * w;
        for (int r = 0; r < h; r++) {
            for (int col = 0; col < w; col++) {
                const double val = src[r * w + col];
                dst[(2 * r) * 2 * w + 2 * col] = val;
                dst[(2 * r) * 2 * w + 2 * col + 1] = val;
                dst[(2 * r + 1) * 2 * w + 2 * col] = val;
                dst[(2 * r + 1) * 2 * w + 2 * col + 1] = val;
            }
        }
    }
    auto node = make_node({n, c, 2 * h, 2 * w}, std::move(v), {x}, "upsample2x");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{sumpool2x(g)};
    };
    return Var(node);
}

Var sumpool2x(const Var& x) {
    check(x.shape().size() == 4, "sumpool2x: need 4-D");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3];
    check(h % 2 == 0 && w % 2 == 0, "sumpool2x: odd spatial dims");
    const int ho = h / 2, wo = w / 2;
    std::vector<double> v(static_cast<size_t>(n) * c * ho * wo);
    for (int i = 0; i < n * c; i++) {
        const double* src = x.data().data() + static_cast<int64_t>(i) * h * w;
        double* dst = v.data() + static_cast<int64_t>(i) * ho * wo;
        for (int r = 0; r < ho; r++) {
            for (int col = 0; col < wo; col++) {
                dst[r * wo + col] = src[(2 * r) * w + 2 * col] +
                                    src[(2 * r) * w + 2 * col + 1] +
                                    src[(2 * r + 1) * w + 2 * col] +
                                    src[(2 * r + 1) * w + 2 * col + 1];
            }
        }
    }
    auto node = make_node({n, c, ho, wo}, std::move(v), {x}, "sumpool2x");
    node->backward = [](const Var&, const Var& g) {
        return std::vector<Var>{upsample2x(g)};
    };
    return Var(node);
}

Var avgpool2x(const Var& x) { return scale(sumpool2x(x), 0.25); }

Var detach(const Var& x) {
    return leaf(x.shape(), x.data(), false);
}

Var mse_sum_per_sample(const Var& a, const Var& b) {
    same_shape(a, b, "mse_sum_per_sample");
    check(!a.shape().empty(), "mse_sum_per_sample: scalar input");
    const int n = a.shape()[0];
    Var d = sub(a, b);
    Var sq = square(d);
    return scale(sum_all(sq), 1.0 / static_cast<double>(n));
}

double rel_grad_error(const std::function<Var()>& loss_fn, Var& param,
                      double eps) {
    Var loss = loss_fn();
    std::vector<Var> g = grad(loss, {param});
    const std::vector<double> analytic = g[0].data();
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < param.data().size(); i++) {
        const double orig = param.data()[i];
        param.data()[i] = orig + eps;
        const double lp = loss_fn().item();
        param.data()[i] = orig - eps;
        const double lm = loss_fn().item();
        param.data()[i] = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        num += (analytic[i] - numeric) * (analytic[i] - numeric);
        den += numeric * numeric + 1e-12;
    }
    return std::sqrt(num / den);
}

}  // namespace scenefit
