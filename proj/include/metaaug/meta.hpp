#pragma once

// The three updates of one meta-training iteration:
//   virtual step    w_hat = w - alpha/n sum_i Pn_i grad L_i(w)
//   policy step     (theta, log alpha) -= beta * grad of L_val(w_hat(theta, alpha))
//   real step       w' = w - gamma/n sum_i Pn_i(theta') grad L_i(w)   (momentum SGD)
// Pn is the batch-normalized policy weight; it is a constant with respect to w.

#include <cmath>
#include <span>

#include "metaaug/nn.hpp"
#include "metaaug/policy.hpp"

namespace metaaug {

/// Weighted mean of per-sample gradients, (1/n) sum_i weights_i grad_i.
template <typename Scalar>
Params<Scalar> weighted_mean_gradient(const PerSampleGrads<Scalar>& grads, const Vector<Scalar>& weights) {
    require_dims(weights.size() == grads.size(), "weighted gradient: weight count does not match batch");
    return grads.weighted_sum(weights / Scalar(grads.size()));
}

/// Virtual step. Plain gradient step, no momentum or weight decay.
template <typename Scalar>
Params<Scalar> inner_step(const Params<Scalar>& w, const PerSampleGrads<Scalar>& grads,
                          const Vector<Scalar>& weights, Scalar alpha) {
    Params<Scalar> w_hat = w;
    if (alpha == Scalar(0)) return w_hat;
    axpy(-alpha, weighted_mean_gradient(grads, weights), w_hat);
    return w_hat;
}

/// Policy inputs and per-sample task gradients of one augmented batch.
template <typename Scalar>
struct AugmentedBatchView {
    const PerSampleGrads<Scalar>& grads;  // grad_w L_i at w
    const Matrix<Scalar>& features;       // policy feature input (gradient to w is cut)
    const Matrix<Scalar>& embeddings;     // transform embeddings
};

template <typename Scalar>
struct MetaGradient {
    Params<Scalar> theta;
    Scalar log_alpha = 0;
    Params<Scalar> val_grad;    // g_val at w_hat
    Vector<Scalar> similarity;  // R_i = <grad L_i(w), g_val>
    Scalar val_loss = 0;        // mean validation loss at w_hat
};

/// Analytic gradient of L_val(w_hat(theta, alpha)) with respect to theta and
/// log alpha. `w_hat` must come from inner_step on the same batch.
template <typename Scalar>
MetaGradient<Scalar> meta_grad(const TaskNetwork<Scalar>& w_hat, const AugmentedBatchView<Scalar>& batch,
                               const Matrix<Scalar>& val_inputs, std::span<const int> val_labels,
                               const PolicyNetwork<Scalar>& policy, Scalar alpha) {
    const Index n = batch.grads.size();
    if (n == 0 || batch.features.rows() != n || batch.embeddings.rows() != n)
        throw ContractError("meta_grad: gradient, feature and embedding batches disagree");
    MetaGradient<Scalar> out;
    out.val_grad = mean_gradient(w_hat, val_inputs, val_labels, &out.val_loss);
    out.similarity = batch.grads.dots(out.val_grad);

    const auto cache = policy_forward(policy, batch.features, batch.embeddings);
    const Vector<Scalar> normalized = normalize_weights(cache.output);
    // dL_val / dPn_i = <g_val, -alpha/n grad_i> = -alpha R_i / n
    const Vector<Scalar> c = out.similarity * (-alpha / Scalar(n));
    out.theta = policy_vjp(policy, cache, batch.features, batch.embeddings, normalization_pullback(cache.output, c));
    // dL_val / dalpha = -(1/n) sum_i Pn_i R_i, times dalpha/dlog alpha = alpha
    out.log_alpha = -alpha * normalized.dot(out.similarity) / Scalar(n);
    return out;
}

template <typename Scalar>
struct PolicyOptimizer {
    SgdState<Scalar> theta_state;
    Scalar alpha_velocity = 0;
    /// When set, log alpha takes plain SGD steps without momentum or decay.
    bool exempt_alpha = false;
    bool learn_alpha = true;
};

template <typename Scalar>
PolicyOptimizer<Scalar> make_policy_optimizer(const PolicyNetwork<Scalar>& policy, Scalar momentum,
                                              Scalar weight_decay, bool exempt_alpha = false,
                                              bool learn_alpha = true) {
    return {make_sgd_state(policy.params, momentum, weight_decay, Scalar(0)), Scalar(0), exempt_alpha, learn_alpha};
}

/// Joint step on (theta, log alpha) with rate beta.
template <typename Scalar>
void outer_step_theta(PolicyNetwork<Scalar>& policy, Scalar& log_alpha, const MetaGradient<Scalar>& grad, Scalar beta,
                      PolicyOptimizer<Scalar>& opt) {
    sgd_step(policy.params, grad.theta, opt.theta_state, beta);
    if (!opt.learn_alpha) return;
    if (opt.exempt_alpha) {
        log_alpha -= beta * grad.log_alpha;
        return;
    }
    const auto& s = opt.theta_state;
    opt.alpha_velocity = s.momentum * opt.alpha_velocity + grad.log_alpha + s.weight_decay * log_alpha;
    log_alpha -= beta * opt.alpha_velocity;
}

/// Real task-network step on the reweighted loss with the updated policy weights.
template <typename Scalar>
Params<Scalar> outer_step_w(Params<Scalar>& w, const PerSampleGrads<Scalar>& grads,
                            const Vector<Scalar>& weights, Scalar gamma, SgdState<Scalar>& state) {
    Params<Scalar> g = weighted_mean_gradient(grads, weights);
    sgd_step(w, g, state, gamma);
    return g;
}

struct ScheduleConfig {
    enum class Mode { Constant, Cosine, Theorem1 };
    Mode mode = Mode::Cosine;
    double c = 1.0;
    double c_prime = 1.0;
    double c_double_prime = 1.0;
};

struct TheoremRates {
    double alpha;
    double beta;
    double gamma;
};

/// Constant rates alpha = c log T / T, beta = sqrt(c' log log T / T), gamma = c'' log T / T.
inline TheoremRates theorem_schedule(long long total_iterations, const ScheduleConfig& cfg) {
    if (total_iterations < 3) throw DomainError("theorem schedule needs T >= 3 so that log log T > 0");
    if (!(cfg.c > 0 && cfg.c_prime > 0 && cfg.c_double_prime > 0))
        throw DomainError("theorem schedule constants must be strictly positive");
    const double t = static_cast<double>(total_iterations);
    const double log_t = std::log(t);
    return {cfg.c * log_t / t, std::sqrt(cfg.c_prime * std::log(log_t) / t), cfg.c_double_prime * log_t / t};
}

}  // namespace metaaug
