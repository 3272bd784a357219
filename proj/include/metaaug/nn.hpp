#pragma once

// Dense feed-forward engine with per-sample losses and gradients.
//
// A batch is a row-major matrix with one sample per row. Per-sample gradients
// of a dense layer are rank-one (delta_i * input_i^T), so they are kept in
// factored form and only materialized on request.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "metaaug/rng.hpp"
#include "metaaug/types.hpp"

namespace metaaug {

enum class Activation { Identity, Relu, Sigmoid };

template <typename Scalar>
struct LayerParams {
    Matrix<Scalar> weights;  // out x in
    Vector<Scalar> bias;     // out

    [[nodiscard]] Index in_size() const { return weights.cols(); }
    [[nodiscard]] Index out_size() const { return weights.rows(); }
};

/// Parameters (or gradients, or velocities) of a stack of dense layers.
template <typename Scalar>
using Params = std::vector<LayerParams<Scalar>>;

template <typename Scalar>
struct TaskNetwork {
    Params<Scalar> params;
    std::vector<Activation> activations;
    /// Layer whose post-activation output is the deep feature.
    Index feature_index = 0;

    [[nodiscard]] Index num_layers() const { return static_cast<Index>(params.size()); }
    [[nodiscard]] Index input_size() const { return params.front().in_size(); }
    [[nodiscard]] Index feature_size() const { return params[static_cast<std::size_t>(feature_index)].out_size(); }
    [[nodiscard]] Index num_classes() const { return params.back().out_size(); }
};

// ---------------------------------------------------------------------------
// Parameter arithmetic

template <typename Scalar>
Params<Scalar> zeros_like(const Params<Scalar>& p) {
    Params<Scalar> out(p.size());
    for (std::size_t l = 0; l < p.size(); ++l) {
        out[l].weights = Matrix<Scalar>::Zero(p[l].weights.rows(), p[l].weights.cols());
        out[l].bias = Vector<Scalar>::Zero(p[l].bias.size());
    }
    return out;
}

template <typename Scalar>
bool same_shape(const Params<Scalar>& a, const Params<Scalar>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (a[l].weights.rows() != b[l].weights.rows() || a[l].weights.cols() != b[l].weights.cols() ||
            a[l].bias.size() != b[l].bias.size())
            return false;
    }
    return true;
}

/// y += a * x
template <typename Scalar>
void axpy(Scalar a, const Params<Scalar>& x, Params<Scalar>& y) {
    require_dims(same_shape(x, y), "axpy: parameter shapes differ");
    for (std::size_t l = 0; l < x.size(); ++l) {
        y[l].weights += a * x[l].weights;
        y[l].bias += a * x[l].bias;
    }
}

template <typename Scalar>
Scalar dot(const Params<Scalar>& a, const Params<Scalar>& b) {
    require_dims(same_shape(a, b), "dot: parameter shapes differ");
    Scalar s = 0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        s += a[l].weights.cwiseProduct(b[l].weights).sum();
        s += a[l].bias.dot(b[l].bias);
    }
    return s;
}

template <typename Scalar>
Scalar squared_norm(const Params<Scalar>& a) {
    return dot(a, a);
}

template <typename Scalar>
Index num_parameters(const Params<Scalar>& p) {
    Index n = 0;
    for (const auto& layer : p) n += layer.weights.size() + layer.bias.size();
    return n;
}

/// Flattens layer by layer: weights (row-major) then bias.
template <typename Scalar>
Vector<Scalar> flatten(const Params<Scalar>& p) {
    Vector<Scalar> out(num_parameters(p));
    Index k = 0;
    for (const auto& layer : p) {
        out.segment(k, layer.weights.size()) = layer.weights.template reshaped<Eigen::RowMajor>();
        k += layer.weights.size();
        out.segment(k, layer.bias.size()) = layer.bias;
        k += layer.bias.size();
    }
    return out;
}

template <typename Scalar>
void unflatten(const Vector<Scalar>& flat, Params<Scalar>& p) {
    require_dims(flat.size() == num_parameters(p), "unflatten: length mismatch");
    Index k = 0;
    for (auto& layer : p) {
        layer.weights.template reshaped<Eigen::RowMajor>() = flat.segment(k, layer.weights.size());
        k += layer.weights.size();
        layer.bias = flat.segment(k, layer.bias.size());
        k += layer.bias.size();
    }
}

template <typename To, typename From>
Params<To> cast_params(const Params<From>& p) {
    Params<To> out(p.size());
    for (std::size_t l = 0; l < p.size(); ++l) {
        out[l].weights = p[l].weights.template cast<To>();
        out[l].bias = p[l].bias.template cast<To>();
    }
    return out;
}

template <typename To, typename From>
TaskNetwork<To> cast_network(const TaskNetwork<From>& net) {
    return {cast_params<To>(net.params), net.activations, net.feature_index};
}

// ---------------------------------------------------------------------------
// Activations

template <typename Scalar>
Scalar sigmoid(Scalar z) {
    using std::exp;
    if (z >= 0) return Scalar(1) / (Scalar(1) + exp(-z));
    const Scalar e = exp(z);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Matrix<Scalar> activate(const Matrix<Scalar>& z, Activation act) {
    switch (act) {
        case Activation::Relu: return z.cwiseMax(Scalar(0));
        case Activation::Sigmoid: return z.unaryExpr([](Scalar v) { return sigmoid(v); });
        case Activation::Identity: break;
    }
    return z;
}

/// Derivative of the activation expressed through its pre-activation z.
template <typename Scalar>
Matrix<Scalar> activation_derivative(const Matrix<Scalar>& z, Activation act) {
    switch (act) {
        case Activation::Relu: return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
        case Activation::Sigmoid:
            return z.unaryExpr([](Scalar v) {
                const Scalar s = sigmoid(v);
                return s * (Scalar(1) - s);
            });
        case Activation::Identity: break;
    }
    return Matrix<Scalar>::Ones(z.rows(), z.cols());
}

/// Z = A W^T + 1 b^T
template <typename Scalar>
Matrix<Scalar> affine(const Matrix<Scalar>& input, const LayerParams<Scalar>& layer) {
    require_dims(input.cols() == layer.in_size(),
                 "dense layer expects " + std::to_string(layer.in_size()) + " inputs, got " +
                     std::to_string(input.cols()));
    Matrix<Scalar> z(input.rows(), layer.out_size());
    z.noalias() = input * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename Scalar>
struct ForwardCache {
    /// inputs[l] is the input of layer l; inputs[0] is the batch.
    std::vector<Matrix<Scalar>> inputs;
    std::vector<Matrix<Scalar>> pre_activations;
    Matrix<Scalar> logits;

    /// Post-activation output of layer `feature_index`; empty for a bare logit layer.
    [[nodiscard]] Matrix<Scalar> features(Index feature_index) const {
        const auto f = static_cast<std::size_t>(feature_index + 1);
        return f < inputs.size() ? inputs[f] : Matrix<Scalar>{};
    }
};

template <typename Scalar>
ForwardCache<Scalar> forward_cached(const TaskNetwork<Scalar>& net, const Matrix<Scalar>& batch) {
    ForwardCache<Scalar> cache;
    const auto layers = net.params.size();
    if (layers == 0 || net.activations.size() != layers) throw ContractError("forward: malformed network");
    cache.inputs.reserve(layers);
    cache.pre_activations.reserve(layers);
    cache.inputs.push_back(batch);
    for (std::size_t l = 0; l < layers; ++l) {
        cache.pre_activations.push_back(affine(cache.inputs.back(), net.params[l]));
        Matrix<Scalar> a = activate(cache.pre_activations.back(), net.activations[l]);
        if (l + 1 == layers)
            cache.logits = std::move(a);
        else
            cache.inputs.push_back(std::move(a));
    }
    if (!cache.logits.allFinite()) throw DomainError("forward: non-finite logits");
    return cache;
}

template <typename Scalar>
struct ForwardResult {
    Matrix<Scalar> features;
    Matrix<Scalar> logits;
};

template <typename Scalar>
ForwardResult<Scalar> forward(const TaskNetwork<Scalar>& net, const Matrix<Scalar>& batch) {
    auto cache = forward_cached(net, batch);
    return {cache.features(net.feature_index), std::move(cache.logits)};
}

template <typename Scalar>
void check_labels(std::span<const int> labels, Index rows, Index classes) {
    require_dims(static_cast<Index>(labels.size()) == rows, "label count does not match batch size");
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
}

/// Softmax cross-entropy per row, via a max-shifted log-sum-exp.
template <typename Scalar>
Vector<Scalar> per_sample_loss(const Matrix<Scalar>& logits, std::span<const int> labels) {
    check_labels<Scalar>(labels, logits.rows(), logits.cols());
    Vector<Scalar> loss(logits.rows());
    for (Index i = 0; i < logits.rows(); ++i) {
        const Scalar m = logits.row(i).maxCoeff();
        const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
        loss(i) = lse - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    return loss;
}

/// d loss_i / d logits_i = softmax_i - onehot(y_i)
template <typename Scalar>
Matrix<Scalar> loss_logit_grad(const Matrix<Scalar>& logits, std::span<const int> labels) {
    check_labels<Scalar>(labels, logits.rows(), logits.cols());
    Matrix<Scalar> g(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const Scalar m = logits.row(i).maxCoeff();
        g.row(i) = (logits.row(i).array() - m).exp().matrix();
        g.row(i) /= g.row(i).sum();
        g(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
    }
    return g;
}

/// Factored per-sample gradients: layer l of sample i is
/// (deltas[l].row(i))^T * inputs[l].row(i) for the weights and deltas[l].row(i) for the bias.
template <typename Scalar>
class PerSampleGrads {
public:
    PerSampleGrads() = default;
    PerSampleGrads(std::vector<Matrix<Scalar>> inputs, std::vector<Matrix<Scalar>> deltas)
        : inputs_(std::move(inputs)), deltas_(std::move(deltas)) {
        require_dims(inputs_.size() == deltas_.size(), "per-sample grads: layer count mismatch");
    }

    [[nodiscard]] Index size() const { return deltas_.empty() ? 0 : deltas_.front().rows(); }
    [[nodiscard]] std::size_t num_layers() const { return deltas_.size(); }
    [[nodiscard]] const Matrix<Scalar>& inputs(std::size_t l) const { return inputs_[l]; }
    [[nodiscard]] const Matrix<Scalar>& deltas(std::size_t l) const { return deltas_[l]; }

    /// sum_i c_i * grad_i
    [[nodiscard]] Params<Scalar> weighted_sum(const Vector<Scalar>& c) const {
        require_dims(c.size() == size(), "weighted_sum: coefficient count does not match batch");
        Params<Scalar> out(num_layers());
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Matrix<Scalar> scaled = inputs_[l];
            scaled.array().colwise() *= c.array();
            out[l].weights.noalias() = deltas_[l].transpose() * scaled;
            out[l].bias.noalias() = deltas_[l].transpose() * c;
        }
        return out;
    }

    /// r_i = <grad_i, g> for every sample.
    [[nodiscard]] Vector<Scalar> dots(const Params<Scalar>& g) const {
        require_dims(g.size() == num_layers(), "dots: layer count mismatch");
        Vector<Scalar> r = Vector<Scalar>::Zero(size());
        for (std::size_t l = 0; l < num_layers(); ++l) {
            require_dims(g[l].weights.rows() == deltas_[l].cols() && g[l].weights.cols() == inputs_[l].cols(),
                         "dots: layer shape mismatch");
            Matrix<Scalar> projected(size(), g[l].weights.rows());
            projected.noalias() = inputs_[l] * g[l].weights.transpose();
            r += projected.cwiseProduct(deltas_[l]).rowwise().sum();
            r.noalias() += deltas_[l] * g[l].bias;
        }
        return r;
    }

    [[nodiscard]] Params<Scalar> sample(Index i) const {
        Params<Scalar> out(num_layers());
        for (std::size_t l = 0; l < num_layers(); ++l) {
            out[l].weights = deltas_[l].row(i).transpose() * inputs_[l].row(i);
            out[l].bias = deltas_[l].row(i).transpose();
        }
        return out;
    }

private:
    std::vector<Matrix<Scalar>> inputs_;
    std::vector<Matrix<Scalar>> deltas_;
};

template <typename Scalar>
struct BatchGradients {
    Matrix<Scalar> features;
    Matrix<Scalar> logits;
    Vector<Scalar> losses;
    PerSampleGrads<Scalar> grads;
};

template <typename Scalar>
BatchGradients<Scalar> batch_gradients(const TaskNetwork<Scalar>& net, const Matrix<Scalar>& batch,
                                       std::span<const int> labels) {
    require_dims(batch.rows() > 0, "batch must be nonempty");
    auto cache = forward_cached(net, batch);
    BatchGradients<Scalar> out;
    out.losses = per_sample_loss(cache.logits, labels);
    std::vector<Matrix<Scalar>> deltas(net.params.size());
    const auto last = net.params.size() - 1;
    deltas[last] = loss_logit_grad(cache.logits, labels).cwiseProduct(
        activation_derivative(cache.pre_activations[last], net.activations[last]));
    for (std::size_t l = last; l > 0; --l) {
        Matrix<Scalar> back(batch.rows(), net.params[l].in_size());
        back.noalias() = deltas[l] * net.params[l].weights;
        deltas[l - 1] = back.cwiseProduct(activation_derivative(cache.pre_activations[l - 1], net.activations[l - 1]));
    }
    out.features = cache.features(net.feature_index);
    out.logits = std::move(cache.logits);
    out.grads = PerSampleGrads<Scalar>(std::move(cache.inputs), std::move(deltas));
    return out;
}

/// Materialized per-sample parameter gradients.
template <typename Scalar>
std::vector<Params<Scalar>> per_sample_grad(const TaskNetwork<Scalar>& net, const Matrix<Scalar>& batch,
                                            std::span<const int> labels) {
    const auto bg = batch_gradients(net, batch, labels);
    std::vector<Params<Scalar>> out;
    out.reserve(static_cast<std::size_t>(batch.rows()));
    for (Index i = 0; i < batch.rows(); ++i) out.push_back(bg.grads.sample(i));
    return out;
}

/// Gradient of the mean loss over the batch.
template <typename Scalar>
Params<Scalar> mean_gradient(const TaskNetwork<Scalar>& net, const Matrix<Scalar>& batch,
                             std::span<const int> labels, Scalar* mean_loss = nullptr) {
    const auto bg = batch_gradients(net, batch, labels);
    const Index n = batch.rows();
    if (mean_loss) *mean_loss = bg.losses.mean();
    return bg.grads.weighted_sum(Vector<Scalar>::Constant(n, Scalar(1) / Scalar(n)));
}

// ---------------------------------------------------------------------------
// Construction

/// Dense stack: input -> hidden... (relu) -> classes (identity). The last
/// hidden layer is the feature layer.
template <typename Scalar>
TaskNetwork<Scalar> make_task_network(Index input_size, const std::vector<Index>& hidden, Index num_classes,
                                      Rng& rng) {
    if (hidden.empty()) throw ConfigError("task network needs at least one hidden layer");
    if (num_classes < 1) throw ConfigError("task network needs at least one class");
    TaskNetwork<Scalar> net;
    Index in = input_size;
    auto add = [&](Index out, Activation act, double bound) {
        LayerParams<Scalar> layer;
        layer.weights.resize(out, in);
        for (Index r = 0; r < out; ++r)
            for (Index c = 0; c < in; ++c) layer.weights(r, c) = Scalar(rng.uniform(-bound, bound));
        layer.bias = Vector<Scalar>::Zero(out);
        net.params.push_back(std::move(layer));
        net.activations.push_back(act);
        in = out;
    };
    for (Index h : hidden) add(h, Activation::Relu, std::sqrt(6.0 / static_cast<double>(in)));
    add(num_classes, Activation::Identity, 1.0 / std::sqrt(static_cast<double>(in)));
    net.feature_index = static_cast<Index>(hidden.size()) - 1;
    return net;
}

template <typename Scalar>
void validate(const TaskNetwork<Scalar>& net) {
    if (net.params.size() < 2) throw ContractError("task network needs a feature layer and a logit layer");
    if (net.activations.size() != net.params.size()) throw ContractError("one activation per layer required");
    if (net.feature_index < 0 || net.feature_index >= net.num_layers() - 1)
        throw ContractError("feature layer must precede the logit layer");
    if (net.activations.back() != Activation::Identity) throw ContractError("logit layer must be linear");
    for (std::size_t l = 0; l < net.params.size(); ++l) {
        if (net.params[l].bias.size() != net.params[l].out_size()) throw ContractError("bias size mismatch");
        if (l > 0 && net.params[l].in_size() != net.params[l - 1].out_size())
            throw ContractError("layer " + std::to_string(l) + " input size mismatch");
    }
}

// ---------------------------------------------------------------------------
// Optimization

template <typename Scalar>
struct SgdState {
    Params<Scalar> velocity;
    Scalar momentum = 0;
    Scalar weight_decay = 0;
    Scalar base_lr = 0;
};

template <typename Scalar>
SgdState<Scalar> make_sgd_state(const Params<Scalar>& like, Scalar momentum, Scalar weight_decay, Scalar base_lr) {
    return {zeros_like(like), momentum, weight_decay, base_lr};
}

/// g <- g + wd * p;  v <- mu * v + g;  p <- p - lr * v
template <typename Scalar>
void sgd_step(Params<Scalar>& params, const Params<Scalar>& grads, SgdState<Scalar>& state, Scalar lr) {
    require_dims(same_shape(params, grads) && same_shape(params, state.velocity), "sgd_step: shape mismatch");
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto& p = params[l];
        auto& v = state.velocity[l];
        v.weights = state.momentum * v.weights + grads[l].weights + state.weight_decay * p.weights;
        v.bias = state.momentum * v.bias + grads[l].bias + state.weight_decay * p.bias;
        p.weights -= lr * v.weights;
        p.bias -= lr * v.bias;
    }
}

inline double cosine_lr(double t, double total, double lr0) {
    if (t < 0 || t > total) throw DomainError("cosine_lr: iteration outside [0, T]");
    if (total == 0) return lr0;
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * t / total));
}

}  // namespace metaaug
