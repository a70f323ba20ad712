#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenefit {

// Dense double-precision tensors with reverse-mode autodiff. Backward passes
// are built out of the same ops as forward passes, so gradients are themselves
// differentiable (needed for R1 and path-length penalties).

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Var;

struct Node {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<Var> parents;
    // Given this node and the gradient flowing into it, produce one gradient
    // Var per parent (an undefined Var means "no gradient").
    std::function<std::vector<Var>(const Var& self, const Var& grad)> backward;
    const char* op = "leaf";
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int64_t size() const { return static_cast<int64_t>(n_->value.size()); }
    const std::vector<double>& data() const { return n_->value; }
    std::vector<double>& data() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    double item() const;
    Node* node() const { return n_.get(); }

private:
    std::shared_ptr<Node> n_;
};

// -------- construction --------
Var leaf(Shape shape, std::vector<double> data, bool requires_grad = false);
Var zeros(Shape shape, bool requires_grad = false);
Var full(Shape shape, double v);
Var scalar(double v);

// grads of `output` w.r.t. each input; the returned Vars stay differentiable.
// grad_output defaults to ones(output.shape).
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                      Var grad_output = Var());

// -------- elementwise --------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var recip(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var abs(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);

// -------- linear algebra (2-D) --------
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// -------- convolution ([N,C,H,W] activations, [O,C,kh,kw] weights) --------
Var conv2d(const Var& x, const Var& w, int stride, int pad);
Var conv2d_input_grad(const Var& g, const Var& w, int stride, int pad,
                      int in_h, int in_w);
Var conv2d_weight_grad(const Var& x, const Var& g, int stride, int pad,
                       int kh, int kw);

// -------- broadcast / reduce pairs --------
Var broadcast_c(const Var& b, int n, int h, int w);       // [C] -> [N,C,H,W]
Var sum_nhw(const Var& x);                                // [N,C,H,W] -> [C]
Var broadcast_rows(const Var& b, int n);                  // [F] -> [N,F]
Var sum_rows(const Var& x);                               // [N,F] -> [F]
Var broadcast_cols(const Var& b, int f);                  // [N] -> [N,F]
Var sum_cols(const Var& x);                               // [N,F] -> [N]
Var broadcast_nc(const Var& s, int h, int w);             // [N,C] -> [N,C,H,W]
Var sum_hw(const Var& x);                                 // [N,C,H,W] -> [N,C]
Var broadcast_chan(const Var& x, int c);                  // [N,1,H,W] -> [N,C,H,W]
Var sum_chan(const Var& x);                               // [N,C,H,W] -> [N,1,H,W]
Var broadcast_all(const Var& s, Shape shape);             // scalar -> shape
Var sum_all(const Var& x);
Var mean_all(const Var& x);

// -------- shape --------
Var reshape(const Var& x, Shape shape);
Var concat_c(const std::vector<Var>& xs);                 // along channel dim
Var slice_c(const Var& x, int from, int count);
Var upsample2x(const Var& x);                             // nearest neighbour
Var sumpool2x(const Var& x);
Var avgpool2x(const Var& x);

Var detach(const Var& x);

// convenience: mean over batch of per-sample squared L2 norms
Var mse_sum_per_sample(const Var& a, const Var& b);

// numeric gradient checking helper (central differences on a leaf)
double rel_grad_error(const std::function<Var()>& loss_fn, Var& param,
                      double eps);

}  // namespace scenefit
