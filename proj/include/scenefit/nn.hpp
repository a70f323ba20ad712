#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scenefit/rng.hpp"
#include "scenefit/tensor.hpp"

namespace scenefit {

// Named parameter registry; names stay stable across runs so checkpoints and
// hashes are reproducible.
struct ParamSet {
    std::vector<std::pair<std::string, Var>> items;

    void add(const std::string& name, const Var& v) { items.push_back({name, v}); }
    std::vector<Var> vars() const {
        std::vector<Var> out;
        out.reserve(items.size());
        for (const auto& [_, v] : items) {
            out.push_back(v);
        }
        return out;
    }
};

Var he_init(Shape shape, int fan_in, Rng& rng, double gain = 1.0);

struct Dense {
    Var w;  // [in, out]
    Var b;  // [out]

    Dense() = default;
    Dense(int in, int out, Rng& rng, double gain = 1.0);
    Var forward(const Var& x) const;  // [N,in] -> [N,out]
    void collect(const std::string& prefix, ParamSet& ps) const;
};

struct Conv2D {
    Var w;  // [out, in, k, k]
    Var b;  // [out]
    int stride = 1;
    int pad = 0;

    Conv2D() = default;
    Conv2D(int cin, int cout, int k, int stride, int pad, Rng& rng,
           double gain = 1.0);
    Var forward(const Var& x) const;
    void collect(const std::string& prefix, ParamSet& ps) const;
};

inline Var silu(const Var& x) { return mul(x, sigmoid(x)); }

// per-row L2 normalization of [N,F] to unit RMS (StyleGAN pixel norm)
Var pixel_norm(const Var& x, double eps = 1e-8);

// spatial channel-unit-normalization of [N,C,H,W] feature maps
Var channel_unit_norm(const Var& x, double eps = 1e-8);

// x * k[n] per sample, k constant (no gradient through k)
Var per_sample_scale(const Var& x, const std::vector<double>& k);

// mean of |a-b| weighted by a constant per-pixel mask broadcast over channels;
// normalized by the mask mass (0 when the mask is empty)
Var masked_l1(const Var& a, const Var& b, const Var& mask01);

class Adam {
public:
    Adam(std::vector<Var> params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8);

    void step(const std::vector<Var>& grads);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    // state access for checkpoint resume
    int64_t steps_taken() const { return t_; }
    const std::vector<std::vector<double>>& m() const { return m_; }
    const std::vector<std::vector<double>>& v() const { return v_; }
    void restore_state(int64_t t, std::vector<std::vector<double>> m,
                       std::vector<std::vector<double>> v);

private:
    std::vector<Var> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace scenefit
