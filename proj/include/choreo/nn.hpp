#pragma once

#include <cstring>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "choreo/rng.hpp"
#include "choreo/tensor.hpp"

namespace choreo::nn {

using ag::Tensor;

// Owns named trainable tensors in registration order. Registration order is
// the optimizer's parameter order, so it must be deterministic.
class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        params_.emplace_back(name, t);
        return t;
    }

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(params_.size());
        for (const auto& [_, t] : params_) out.push_back(t);
        return out;
    }

    const std::vector<std::pair<std::string, Tensor>>& named() const { return params_; }

    Tensor find(const std::string& name) const {
        for (const auto& [n, t] : params_)
            if (n == name) return t;
        throw Error("ParamStore: no parameter named " + name);
    }

    void zero_grads() {
        for (auto& [_, t] : params_) t.zero_grad();
    }

    size_t count_scalars() const {
        size_t n = 0;
        for (const auto& [_, t] : params_) n += t.size();
        return n;
    }

    void save(std::ostream& os) const {
        write_u32(os, static_cast<uint32_t>(params_.size()));
        for (const auto& [name, t] : params_) {
            write_u32(os, static_cast<uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u32(os, static_cast<uint32_t>(t.rows()));
            write_u32(os, static_cast<uint32_t>(t.cols()));
            os.write(reinterpret_cast<const char*>(t.values().data()),
                     static_cast<std::streamsize>(t.size() * sizeof(double)));
        }
    }

    // Loads values into already-registered parameters; names and shapes must match.
    void load(std::istream& is) {
        const uint32_t n = read_u32(is);
        if (n != params_.size()) throw Truncated("parameter count mismatch");
        for (auto& [name, t] : params_) {
            const uint32_t len = read_u32(is);
            std::string got(len, '\0');
            is.read(got.data(), len);
            if (got != name) throw Truncated("parameter name mismatch: " + got + " vs " + name);
            const uint32_t r = read_u32(is), c = read_u32(is);
            if (static_cast<int>(r) != t.rows() || static_cast<int>(c) != t.cols())
                throw Truncated("parameter shape mismatch for " + name);
            is.read(reinterpret_cast<char*>(t.values().data()),
                    static_cast<std::streamsize>(t.size() * sizeof(double)));
            if (!is) throw Truncated("checkpoint ended early in " + name);
        }
    }

private:
    static void write_u32(std::ostream& os, uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    static uint32_t read_u32(std::istream& is) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw Truncated("checkpoint ended early");
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }

    std::vector<std::pair<std::string, Tensor>> params_;
};

inline Tensor xavier_init(int in, int out, PhiloxRng& rng, double gain = 1.0) {
    Tensor t = Tensor::zeros(in, out);
    const double bound = gain * std::sqrt(6.0 / (in + out));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, int in, int out, PhiloxRng& rng,
           double gain = 1.0) {
        w = store.add(name + ".w", xavier_init(in, out, rng, gain));
        b = store.add(name + ".b", Tensor::zeros(1, out));
    }

    Tensor operator()(const Tensor& x) const { return ag::add_rowvec(ag::matmul(x, w), b); }
};

struct LayerNorm {
    Tensor gain, bias;
    double eps = 1e-5;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, int dim) {
        gain = store.add(name + ".gain", Tensor::full(1, dim, 1.0));
        bias = store.add(name + ".bias", Tensor::zeros(1, dim));
    }

    Tensor operator()(const Tensor& x) const {
        return ag::add_rowvec(ag::mul_rowvec(ag::layer_norm_rows(x, eps), gain), bias);
    }
};

enum class Act { relu, gelu, tanh, none };

inline Tensor activate(const Tensor& x, Act act) {
    switch (act) {
        case Act::relu: return ag::relu(x);
        case Act::gelu: return ag::gelu(x);
        case Act::tanh: return ag::tanh(x);
        case Act::none: return x;
    }
    return x;
}

struct Mlp {
    Linear l1, l2;
    Act act = Act::gelu;

    Mlp() = default;
    Mlp(ParamStore& store, const std::string& name, int in, int hidden, int out, PhiloxRng& rng,
        Act act_ = Act::gelu)
        : l1(store, name + ".l1", in, hidden, rng),
          l2(store, name + ".l2", hidden, out, rng),
          act(act_) {}

    Tensor operator()(const Tensor& x) const { return l2(activate(l1(x), act)); }
};

// Multi-head attention with learned projections. Query rows come from q_in,
// keys and values from kv_in (pass q_in twice for self-attention).
struct MultiheadAttention {
    Linear wq, wk, wv, wo;
    int heads = 1;

    MultiheadAttention() = default;
    MultiheadAttention(ParamStore& store, const std::string& name, int dim, int heads_,
                       PhiloxRng& rng)
        : wq(store, name + ".q", dim, dim, rng),
          wk(store, name + ".k", dim, dim, rng),
          wv(store, name + ".v", dim, dim, rng),
          wo(store, name + ".o", dim, dim, rng),
          heads(heads_) {}

    Tensor operator()(const Tensor& q_in, const Tensor& kv_in) const {
        return wo(ag::attention(wq(q_in), wk(kv_in), wv(kv_in), heads));
    }
};

// Feature-wise linear modulation: y = gamma(cond) * x + delta(cond).
// gamma's projection starts at weights 0 / bias 1, so a fresh layer is the
// identity map.
struct Film {
    Linear gamma_proj, delta_proj;

    Film() = default;
    Film(ParamStore& store, const std::string& name, int x_dim, int cond_dim) {
        gamma_proj.w = store.add(name + ".gw", Tensor::zeros(cond_dim, x_dim));
        gamma_proj.b = store.add(name + ".gb", Tensor::full(1, x_dim, 1.0));
        delta_proj.w = store.add(name + ".dw", Tensor::zeros(cond_dim, x_dim));
        delta_proj.b = store.add(name + ".db", Tensor::zeros(1, x_dim));
    }

    // cond: [1, cond_dim]
    Tensor operator()(const Tensor& x, const Tensor& cond) const {
        return ag::film_apply(x, gamma_proj(cond), delta_proj(cond));
    }
};

// Adaptive-moment optimizer. step() applies one update from the accumulated
// gradients and then clears them.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    int64_t step_count = 0;
    std::vector<std::vector<double>> m, v;

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    void step(const std::vector<Tensor>& params) {
        if (m.empty()) {
            m.resize(params.size());
            v.resize(params.size());
            for (size_t p = 0; p < params.size(); ++p) {
                m[p].assign(params[p].size(), 0.0);
                v[p].assign(params[p].size(), 0.0);
            }
        }
        if (m.size() != params.size()) throw ShapeMismatch("optimizer state size mismatch");
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor t = params[p];
            if (t.size() != m[p].size()) throw ShapeMismatch("optimizer param shape changed");
            auto& g = t.grads();
            auto& val = t.values();
            for (size_t i = 0; i < val.size(); ++i) {
                m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g[i];
                v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = m[p][i] / bc1;
                const double vhat = v[p][i] / bc2;
                val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
                g[i] = 0.0;
            }
        }
    }
};

}  // namespace choreo::nn
