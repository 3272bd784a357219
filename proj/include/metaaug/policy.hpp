#pragma once

// Augmentation policy network: a feature branch and an embedding branch, each
// dense + ReLU, concatenated into a single sigmoid unit.

#include <cmath>
#include <numeric>

#include "metaaug/nn.hpp"

namespace metaaug {

inline constexpr Index kEmbeddingSize = 28;
inline constexpr Index kDefaultPolicyHidden = 100;

template <typename Scalar>
struct PolicyNetwork {
    static constexpr std::size_t kFeatureBranch = 0;
    static constexpr std::size_t kEmbeddingBranch = 1;
    static constexpr std::size_t kHead = 2;

    /// {feature branch [hidden x feature_dim], embedding branch [hidden x 28], head [1 x 2*hidden]}
    Params<Scalar> params;

    [[nodiscard]] Index feature_size() const { return params[kFeatureBranch].in_size(); }
    [[nodiscard]] Index embedding_size() const { return params[kEmbeddingBranch].in_size(); }
    [[nodiscard]] Index hidden_size() const { return params[kFeatureBranch].out_size(); }
};

/// Branches get U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the head starts at zero
/// so that every initial weight is exactly 0.5.
template <typename Scalar>
PolicyNetwork<Scalar> make_policy(Index feature_dim, Index hidden, Rng& rng, Index embedding_dim = kEmbeddingSize) {
    if (feature_dim < 1 || hidden < 1) throw ConfigError("policy dimensions must be positive");
    PolicyNetwork<Scalar> policy;
    policy.params.resize(3);
    auto branch = [&](LayerParams<Scalar>& layer, Index in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        layer.weights.resize(hidden, in);
        for (Index r = 0; r < hidden; ++r)
            for (Index c = 0; c < in; ++c) layer.weights(r, c) = Scalar(rng.uniform(-bound, bound));
        layer.bias.resize(hidden);
        for (Index r = 0; r < hidden; ++r) layer.bias(r) = Scalar(rng.uniform(-bound, bound));
    };
    branch(policy.params[0], feature_dim);
    branch(policy.params[1], embedding_dim);
    policy.params[2].weights = Matrix<Scalar>::Zero(1, 2 * hidden);
    policy.params[2].bias = Vector<Scalar>::Zero(1);
    return policy;
}

template <typename Scalar>
struct PolicyCache {
    Matrix<Scalar> feature_pre;    // n x hidden
    Matrix<Scalar> embedding_pre;  // n x hidden
    Matrix<Scalar> hidden;         // n x 2*hidden, relu outputs concatenated
    Vector<Scalar> output;         // sigmoid outputs
};

template <typename Scalar>
PolicyCache<Scalar> policy_forward(const PolicyNetwork<Scalar>& policy, const Matrix<Scalar>& features,
                                   const Matrix<Scalar>& embeddings) {
    require_dims(features.rows() == embeddings.rows(), "policy: feature and embedding batch sizes differ");
    require_dims(features.cols() == policy.feature_size(),
                 "policy expects feature dim " + std::to_string(policy.feature_size()) + ", got " +
                     std::to_string(features.cols()));
    require_dims(embeddings.cols() == policy.embedding_size(), "policy: embedding dimension mismatch");
    PolicyCache<Scalar> cache;
    const Index h = policy.hidden_size();
    cache.feature_pre = affine(features, policy.params[PolicyNetwork<Scalar>::kFeatureBranch]);
    cache.embedding_pre = affine(embeddings, policy.params[PolicyNetwork<Scalar>::kEmbeddingBranch]);
    cache.hidden.resize(features.rows(), 2 * h);
    cache.hidden.leftCols(h) = cache.feature_pre.cwiseMax(Scalar(0));
    cache.hidden.rightCols(h) = cache.embedding_pre.cwiseMax(Scalar(0));
    const Matrix<Scalar> z = affine(cache.hidden, policy.params[PolicyNetwork<Scalar>::kHead]);
    cache.output = z.col(0).unaryExpr([](Scalar v) { return sigmoid(v); });
    return cache;
}

/// Raw sigmoid weights for a batch.
template <typename Scalar>
Vector<Scalar> policy_weights(const PolicyNetwork<Scalar>& policy, const Matrix<Scalar>& features,
                              const Matrix<Scalar>& embeddings) {
    return policy_forward(policy, features, embeddings).output;
}

template <typename Scalar>
Scalar policy_weight(const PolicyNetwork<Scalar>& policy, const Vector<Scalar>& feature,
                     const Vector<Scalar>& embedding) {
    return policy_weights<Scalar>(policy, feature.transpose(), embedding.transpose())(0);
}

/// sum_k coeffs_k * grad_theta P_k, by one batched backward pass.
template <typename Scalar>
Params<Scalar> policy_vjp(const PolicyNetwork<Scalar>& policy, const PolicyCache<Scalar>& cache,
                          const Matrix<Scalar>& features, const Matrix<Scalar>& embeddings,
                          const Vector<Scalar>& coeffs) {
    require_dims(coeffs.size() == cache.output.size(), "policy_vjp: coefficient count mismatch");
    const Index h = policy.hidden_size();
    // dz_k = coeff_k * sigma'(z_k)
    const Vector<Scalar> dz = coeffs.cwiseProduct(
        cache.output.cwiseProduct((Vector<Scalar>::Ones(cache.output.size()) - cache.output)));
    Params<Scalar> grad(3);
    auto& head = grad[PolicyNetwork<Scalar>::kHead];
    head.weights = dz.transpose() * cache.hidden;
    head.bias = Vector<Scalar>::Constant(1, dz.sum());

    const auto& head_w = policy.params[PolicyNetwork<Scalar>::kHead].weights;
    const Matrix<Scalar> d_hidden = dz * head_w;  // n x 2h
    const Matrix<Scalar> d_feat =
        d_hidden.leftCols(h).cwiseProduct((cache.feature_pre.array() > Scalar(0)).template cast<Scalar>().matrix());
    const Matrix<Scalar> d_emb =
        d_hidden.rightCols(h).cwiseProduct((cache.embedding_pre.array() > Scalar(0)).template cast<Scalar>().matrix());
    grad[PolicyNetwork<Scalar>::kFeatureBranch].weights = d_feat.transpose() * features;
    grad[PolicyNetwork<Scalar>::kFeatureBranch].bias = d_feat.colwise().sum().transpose();
    grad[PolicyNetwork<Scalar>::kEmbeddingBranch].weights = d_emb.transpose() * embeddings;
    grad[PolicyNetwork<Scalar>::kEmbeddingBranch].bias = d_emb.colwise().sum().transpose();
    return grad;
}

/// Gradient of a single raw weight with respect to every policy parameter.
template <typename Scalar>
Params<Scalar> grad_theta(const PolicyNetwork<Scalar>& policy, const Vector<Scalar>& feature,
                          const Vector<Scalar>& embedding) {
    const Matrix<Scalar> f = feature.transpose();
    const Matrix<Scalar> e = embedding.transpose();
    const auto cache = policy_forward(policy, f, e);
    return policy_vjp<Scalar>(policy, cache, f, e, Vector<Scalar>::Ones(1));
}

/// n * raw_i / sum(raw): the batch mean of the result is 1.
template <typename Scalar>
Vector<Scalar> normalize_weights(const Vector<Scalar>& raw) {
    if (raw.size() == 0) throw DomainError("normalize_weights: empty batch");
    const Scalar total = raw.sum();
    if (!(total > Scalar(0))) throw DomainError("normalize_weights: weights must be positive");
    // equal weights are exactly one, independent of summation rounding
    if ((raw.array() == raw(0)).all()) return Vector<Scalar>::Ones(raw.size());
    return raw * (Scalar(raw.size()) / total);
}

/// Coefficients d such that sum_i c_i grad(Pn_i) = sum_k d_k grad(P_k) with
/// Pn_i = n P_i / S (quotient rule through S = sum P).
template <typename Scalar>
Vector<Scalar> normalization_pullback(const Vector<Scalar>& raw, const Vector<Scalar>& c) {
    require_dims(raw.size() == c.size(), "normalization_pullback: size mismatch");
    const Scalar n = Scalar(raw.size());
    const Scalar total = raw.sum();
    const Scalar cross = c.dot(raw) / total;
    return (c.array() - cross).matrix() * (n / total);
}

/// sum_i c_i * grad_theta of the normalized weight of sample i.
template <typename Scalar>
Params<Scalar> normalized_weight_vjp(const PolicyNetwork<Scalar>& policy, const Matrix<Scalar>& features,
                                     const Matrix<Scalar>& embeddings, const Vector<Scalar>& c) {
    const auto cache = policy_forward(policy, features, embeddings);
    return policy_vjp(policy, cache, features, embeddings, normalization_pullback(cache.output, c));
}

}  // namespace metaaug
