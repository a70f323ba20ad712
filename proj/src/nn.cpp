#include "scenefit/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace scenefit {

Var he_init(Shape shape, int fan_in, Rng& rng, double gain) {
    const double std = gain / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> d(static_cast<size_t>(numel(shape)));
    for (auto& x : d) {
        x = rng.normal() * std;
    }
    return leaf(std::move(shape), std::move(d), true);
}

Dense::Dense(int in, int out, Rng& rng, double gain) {
    w = he_init({in, out}, in, rng, gain);
    b = zeros({out}, true);
}

Var Dense::forward(const Var& x) const {
    return add(matmul(x, w), broadcast_rows(b, x.shape()[0]));
}

void Dense::collect(const std::string& prefix, ParamSet& ps) const {
    ps.add(prefix + ".w", w);
    ps.add(prefix + ".b", b);
}

Conv2D::Conv2D(int cin, int cout, int k, int stride_, int pad_, Rng& rng,
               double gain)
    : stride(stride_), pad(pad_) {
    w = he_init({cout, cin, k, k}, cin * k * k, rng, gain);
    b = zeros({cout}, true);
}

Var Conv2D::forward(const Var& x) const {
    Var y = conv2d(x, w, stride, pad);
    return add(y, broadcast_c(b, y.shape()[0], y.shape()[2], y.shape()[3]));
}

void Conv2D::collect(const std::string& prefix, ParamSet& ps) const {
    ps.add(prefix + ".w", w);
    ps.add(prefix + ".b", b);
}

Var pixel_norm(const Var& x, double eps) {
    const int f = x.shape()[1];
    Var ms = scale(sum_cols(square(x)), 1.0 / f);
    Var inv = recip(sqrt(add_scalar(ms, eps)));
    return mul(x, broadcast_cols(inv, f));
}

Var channel_unit_norm(const Var& x, double eps) {
    const int c = x.shape()[1];
    Var nrm = sqrt(add_scalar(sum_chan(square(x)), eps));
    return mul(x, broadcast_chan(recip(nrm), c));
}

Var per_sample_scale(const Var& x, const std::vector<double>& k) {
    const Shape& s = x.shape();
    if (static_cast<int>(k.size()) != s[0]) {
        throw std::runtime_error("per_sample_scale: coefficient count");
    }
    const int64_t per = numel(s) / s[0];
    std::vector<double> d(x.data().size());
    for (int n = 0; n < s[0]; n++) {
        std::fill(d.begin() + n * per, d.begin() + (n + 1) * per, k[n]);
    }
    return mul(x, leaf(s, std::move(d)));
}

Var masked_l1(const Var& a, const Var& b, const Var& mask01) {
    const Shape& s = a.shape();
    const int c = s[1];
    double mass = 0.0;
    for (double m : mask01.data()) {
        mass += m;
    }
    if (mass <= 0.0) {
        return scalar(0.0);
    }
    Var mask_full = mask01.shape()[1] == c
                        ? detach(mask01)
                        : broadcast_chan(detach(mask01), c);
    Var weighted = mul(abs(sub(a, b)), mask_full);
    return scale(sum_all(weighted), 1.0 / (mass * c));
}

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.data().size(), 0.0);
        v_.emplace_back(p.data().size(), 0.0);
    }
}

void Adam::step(const std::vector<Var>& grads) {
    if (grads.size() != params_.size()) {
        throw std::runtime_error("Adam::step: gradient count mismatch");
    }
    t_++;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); i++) {
        auto& p = params_[i].data();
        const auto& g = grads[i].data();
        if (g.size() != p.size()) {
            throw std::runtime_error("Adam::step: gradient shape mismatch");
        }
        for (size_t j = 0; j < p.size(); j++) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double mh = m_[i][j] / bc1;
            const double vh = v_[i][j] / bc2;
            p[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

void Adam::restore_state(int64_t t, std::vector<std::vector<double>> m,
                         std::vector<std::vector<double>> v) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
        throw std::runtime_error("Adam::restore_state: size mismatch");
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace scenefit
