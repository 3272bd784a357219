#pragma once

// Reference implementations used only by tests: plain scalar loops in long
// double, no Eigen products, so they share no code path with the library.

#include <cmath>
#include <vector>

#include "metaaug/nn.hpp"

namespace oracle {

using metaaug::Index;
using LD = long double;

struct DenseLayer {
    std::vector<std::vector<LD>> w;  // out x in
    std::vector<LD> b;
    metaaug::Activation act;
};

inline std::vector<DenseLayer> layers_of(const metaaug::TaskNetwork<double>& net) {
    std::vector<DenseLayer> out;
    for (std::size_t l = 0; l < net.params.size(); ++l) {
        const auto& p = net.params[l];
        DenseLayer d;
        d.act = net.activations[l];
        d.w.assign(static_cast<std::size_t>(p.weights.rows()), std::vector<LD>(static_cast<std::size_t>(p.weights.cols())));
        for (Index r = 0; r < p.weights.rows(); ++r)
            for (Index c = 0; c < p.weights.cols(); ++c) d.w[r][c] = p.weights(r, c);
        for (Index r = 0; r < p.bias.size(); ++r) d.b.push_back(p.bias(r));
        out.push_back(std::move(d));
    }
    return out;
}

inline LD act(LD z, metaaug::Activation a) {
    switch (a) {
        case metaaug::Activation::Relu: return z > 0 ? z : 0;
        case metaaug::Activation::Sigmoid: return 1 / (1 + std::exp(-z));
        case metaaug::Activation::Identity: break;
    }
    return z;
}

inline LD act_grad(LD z, metaaug::Activation a) {
    switch (a) {
        case metaaug::Activation::Relu: return z > 0 ? 1 : 0;
        case metaaug::Activation::Sigmoid: {
            const LD s = 1 / (1 + std::exp(-z));
            return s * (1 - s);
        }
        case metaaug::Activation::Identity: break;
    }
    return 1;
}

/// Softmax cross-entropy by the textbook formula.
inline LD cross_entropy(const std::vector<LD>& logits, int label) {
    LD m = logits[0];
    for (LD v : logits) m = std::max(m, v);
    LD s = 0;
    for (LD v : logits) s += std::exp(v - m);
    return m + std::log(s) - logits[static_cast<std::size_t>(label)];
}

/// Loss and flattened parameter gradient (weights row-major, then bias, layer
/// by layer) of one sample.
inline std::vector<LD> sample_gradient(const std::vector<DenseLayer>& layers, const std::vector<LD>& x, int label,
                                       LD* loss = nullptr) {
    std::vector<std::vector<LD>> a{x}, z;
    for (const auto& L : layers) {
        std::vector<LD> zz(L.b.size()), out(L.b.size());
        for (std::size_t r = 0; r < L.b.size(); ++r) {
            LD s = L.b[r];
            for (std::size_t c = 0; c < a.back().size(); ++c) s += L.w[r][c] * a.back()[c];
            zz[r] = s;
            out[r] = act(s, L.act);
        }
        z.push_back(zz);
        a.push_back(out);
    }
    const auto& logits = a.back();
    if (loss) *loss = cross_entropy(logits, label);
    LD m = logits[0];
    for (LD v : logits) m = std::max(m, v);
    LD s = 0;
    for (LD v : logits) s += std::exp(v - m);
    std::vector<LD> delta(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
        delta[k] = (std::exp(logits[k] - m) / s - (static_cast<int>(k) == label ? 1 : 0)) *
                   act_grad(z.back()[k], layers.back().act);

    std::vector<std::vector<LD>> grads(layers.size());
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& L = layers[l];
        const auto& in = a[l];
        auto& g = grads[l];
        for (std::size_t r = 0; r < L.b.size(); ++r)
            for (std::size_t c = 0; c < in.size(); ++c) g.push_back(delta[r] * in[c]);
        for (std::size_t r = 0; r < L.b.size(); ++r) g.push_back(delta[r]);
        if (l == 0) break;
        std::vector<LD> prev(in.size(), 0);
        for (std::size_t c = 0; c < in.size(); ++c) {
            LD acc = 0;
            for (std::size_t r = 0; r < L.b.size(); ++r) acc += L.w[r][c] * delta[r];
            prev[c] = acc * act_grad(z[l - 1][c], layers[l - 1].act);
        }
        delta = prev;
    }
    std::vector<LD> flat;
    for (const auto& g : grads) flat.insert(flat.end(), g.begin(), g.end());
    return flat;
}

inline std::vector<LD> row(const metaaug::MatrixXd& m, Index r) {
    std::vector<LD> out(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(r, c);
    return out;
}

/// (1/n) sum_i weights_i grad_i by scalar loops.
inline std::vector<LD> weighted_gradient(const metaaug::TaskNetwork<double>& net, const metaaug::MatrixXd& x,
                                         const std::vector<int>& labels, const std::vector<LD>& weights) {
    const auto layers = layers_of(net);
    std::vector<LD> sum;
    for (Index i = 0; i < x.rows(); ++i) {
        const auto g = sample_gradient(layers, row(x, i), labels[static_cast<std::size_t>(i)]);
        if (sum.empty()) sum.assign(g.size(), 0);
        for (std::size_t k = 0; k < g.size(); ++k) sum[k] += weights[static_cast<std::size_t>(i)] * g[k];
    }
    for (auto& v : sum) v /= static_cast<LD>(x.rows());
    return sum;
}

inline LD sigmoid(LD z) { return 1 / (1 + std::exp(-z)); }

}  // namespace oracle
