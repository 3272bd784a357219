#include "metaaug/verification.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace metaaug {

namespace {

using LD = long double;

TransformSpec random_spec(Rng& rng) {
    TransformSpec s;
    s.first = function_from_index(static_cast<int>(rng.below(kNumFunctions)));
    s.second = function_from_index(static_cast<int>(rng.below(kNumFunctions)));
    s.m1 = rng.uniform(0.0, 10.0);
    s.m2 = rng.uniform(0.0, 10.0);
    return s;
}

MatrixXd random_inputs(Index rows, Index cols, Rng& rng) {
    MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform();
    return m;
}

std::vector<int> random_labels(Index n, Index classes, Rng& rng) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (auto& y : out) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return out;
}

// Everything of the instance that does not depend on (theta, alpha), in long double.
struct LdProblem {
    TaskNetwork<LD> task;
    PolicyNetwork<LD> policy;
    Matrix<LD> embeddings;
    Matrix<LD> val_inputs;
    std::vector<int> val_labels;
    BatchGradients<LD> train;

    explicit LdProblem(const MetaInstance& inst)
        : task(cast_network<LD>(inst.task)),
          policy{cast_params<LD>(inst.policy.params)},
          embeddings(inst.train_embeddings.cast<LD>()),
          val_inputs(inst.val_inputs.cast<LD>()),
          val_labels(inst.val_labels),
          train(batch_gradients(task, Matrix<LD>(inst.train_inputs.cast<LD>()), inst.train_labels)) {}

    LD objective(const Vector<LD>& theta_flat, LD log_alpha) {
        unflatten(theta_flat, policy.params);
        const Vector<LD> weights = normalize_weights(policy_weights(policy, train.features, embeddings));
        const TaskNetwork<LD> w_hat{inner_step(task.params, train.grads, weights, std::exp(log_alpha)),
                                    task.activations, task.feature_index};
        return per_sample_loss(forward(w_hat, val_inputs).logits, val_labels).mean();
    }
};

template <typename S>
MetaGradient<S> analytic_in(const MetaInstance& inst) {
    const TaskNetwork<S> task = cast_network<S>(inst.task);
    const PolicyNetwork<S> policy{cast_params<S>(inst.policy.params)};
    const Matrix<S> inputs = inst.train_inputs.cast<S>();
    const Matrix<S> embeddings = inst.train_embeddings.cast<S>();
    const Matrix<S> val_inputs = inst.val_inputs.cast<S>();
    const auto bg = batch_gradients(task, inputs, inst.train_labels);
    const S alpha = std::exp(S(inst.log_alpha));
    const Vector<S> weights = normalize_weights(policy_weights(policy, bg.features, embeddings));
    const TaskNetwork<S> w_hat{inner_step(task.params, bg.grads, weights, alpha), task.activations,
                               task.feature_index};
    const AugmentedBatchView<S> view{bg.grads, bg.features, embeddings};
    return meta_grad(w_hat, view, val_inputs, inst.val_labels, policy, alpha);
}

}  // namespace

MetaInstance make_meta_instance(std::uint64_t seed, std::uint64_t trial, const InstanceShape& shape, bool zero_head) {
    Rng rng = Rng(seed, Stream::Instance).substream(trial);
    MetaInstance inst;
    inst.task = make_task_network<double>(shape.input_size, {shape.feature_dim}, shape.num_classes, rng);
    inst.policy = make_policy<double>(shape.feature_dim, shape.policy_hidden, rng);
    if (!zero_head) {
        auto& head = inst.policy.params[PolicyNetwork<double>::kHead];
        for (Index c = 0; c < head.weights.cols(); ++c) head.weights(0, c) = rng.uniform(-1.0, 1.0);
        head.bias(0) = rng.uniform(-0.5, 0.5);
    }
    inst.log_alpha = std::log(rng.uniform(0.05, 0.5));
    inst.train_inputs = random_inputs(shape.n_train, shape.input_size, rng);
    inst.train_labels = random_labels(shape.n_train, shape.num_classes, rng);
    inst.train_embeddings.resize(shape.n_train, kEmbeddingSize);
    for (Index i = 0; i < shape.n_train; ++i) inst.train_embeddings.row(i) = embed(random_spec(rng)).transpose();
    inst.val_inputs = random_inputs(shape.n_val, shape.input_size, rng);
    inst.val_labels = random_labels(shape.n_val, shape.num_classes, rng);
    return inst;
}

MetaGradient<double> analytic_hypergrad(const MetaInstance& inst) { return analytic_in<double>(inst); }

MetaGradient<long double> analytic_hypergrad_ld(const MetaInstance& inst) { return analytic_in<LD>(inst); }

long double meta_objective(const MetaInstance& inst, const Vector<long double>& theta_flat, long double log_alpha) {
    LdProblem problem(inst);
    return problem.objective(theta_flat, log_alpha);
}

FdHypergrad fd_hypergrad(const MetaInstance& inst, double eps) {
    LdProblem problem(inst);
    const Vector<LD> theta = flatten(cast_params<LD>(inst.policy.params));
    const LD log_alpha = inst.log_alpha;
    const LD h = eps;
    FdHypergrad out;
    out.theta.resize(theta.size());
    Vector<LD> probe = theta;
    for (Index i = 0; i < theta.size(); ++i) {
        probe(i) = theta(i) + h;
        const LD up = problem.objective(probe, log_alpha);
        probe(i) = theta(i) - h;
        const LD down = problem.objective(probe, log_alpha);
        probe(i) = theta(i);
        out.theta(i) = (up - down) / (2 * h);
    }
    out.log_alpha =
        (problem.objective(theta, log_alpha + h) - problem.objective(theta, log_alpha - h)) / (2 * h);
    return out;
}

double relative_error(const Vector<long double>& analytic, const Vector<long double>& reference) {
    require_dims(analytic.size() == reference.size(), "relative_error: size mismatch");
    const LD scale = reference.size() ? reference.cwiseAbs().maxCoeff() : LD(0);
    const LD diff = reference.size() ? (analytic - reference).cwiseAbs().maxCoeff() : LD(0);
    if (scale == 0) return static_cast<double>(diff);
    return static_cast<double>(diff / scale);
}

double relative_error(long double analytic, long double reference) {
    const LD diff = std::fabs(analytic - reference);
    const LD scale = std::fabs(reference);
    return static_cast<double>(scale == 0 ? diff : diff / scale);
}

HypergradComparison compare_hypergrad(const MetaInstance& inst, double eps) {
    const auto analytic = analytic_hypergrad(inst);
    const auto fd = fd_hypergrad(inst, eps);
    return {relative_error(flatten(analytic.theta).cast<LD>().eval(), fd.theta),
            relative_error(LD(analytic.log_alpha), fd.log_alpha)};
}

// ---------------------------------------------------------------------------

PairList all_pairs() {
    PairList out;
    out.reserve(kNumFunctions * kNumFunctions);
    for (int j = 0; j < kNumFunctions; ++j)
        for (int k = 0; k < kNumFunctions; ++k) out.emplace_back(function_from_index(j), function_from_index(k));
    return out;
}

namespace {

// Raw weight times loss for a batch of augmented images.
VectorXd weighted_losses(const TaskNetwork<double>& net, const WeightModel& model, const MatrixXd& inputs,
                         const MatrixXd& embeddings, const std::vector<int>& labels) {
    const VectorXd loss = per_sample_loss(forward(net, inputs).logits, labels);
    const MatrixXd features = forward(model.feature_net, inputs).features;
    return policy_weights(model.policy, features, embeddings).cwiseProduct(loss);
}

}  // namespace

OracleEstimate weighted_loss_oracle(const TaskNetwork<double>& net, const WeightModel& model, const Dataset& data,
                                    const std::vector<std::size_t>& indices, std::size_t mc_samples,
                                    std::uint64_t seed, const MagnitudeRanges& ranges, const PairList& pairs) {
    if (mc_samples < 1) throw DomainError("weighted_loss_oracle needs at least one Monte Carlo sample");
    if (indices.empty() || pairs.empty()) throw DomainError("weighted_loss_oracle needs samples and pairs");
    const auto rows = static_cast<Index>(indices.size());
    const auto cells = indices.size() * pairs.size();
    // cell_sum[c] and cell_sq[c] over magnitude draws, cell = (pair, sample)
    std::vector<double> cell_sum(cells, 0.0), cell_sq(cells, 0.0);
    const Rng base(seed, Stream::Oracle);
    MatrixXd inputs(rows, static_cast<Index>(data.input_size()));
    MatrixXd embeddings(rows, kEmbeddingSize);
    std::vector<int> labels(indices.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [first, second] = pairs[p];
        const auto pair_id = static_cast<std::uint64_t>(static_cast<int>(first) * kNumFunctions + static_cast<int>(second));
        for (std::size_t s = 0; s < mc_samples; ++s) {
            // common random numbers across samples keep the estimate independent of dataset order
            Rng draw = base.substream(pair_id, s);
            const TransformSpec spec{first, second, draw.uniform(0.0, 10.0), draw.uniform(0.0, 10.0)};
            const std::uint64_t sign_seed = draw.next_u64();
            const VectorXd e = embed(spec);
            for (std::size_t i = 0; i < indices.size(); ++i) {
                Rng signs(sign_seed, 0);
                const auto& sample = data.samples[indices[i]];
                const ImageSample out = apply_transform(sample, spec, signs, ranges);
                inputs.row(static_cast<Index>(i)) =
                    Eigen::Map<const Eigen::RowVectorXd>(out.pixels.data(), inputs.cols());
                embeddings.row(static_cast<Index>(i)) = e.transpose();
                labels[i] = sample.label;
            }
            const VectorXd v = weighted_losses(net, model, inputs, embeddings, labels);
            for (std::size_t i = 0; i < indices.size(); ++i) {
                cell_sum[p * indices.size() + i] += v(static_cast<Index>(i));
                cell_sq[p * indices.size() + i] += v(static_cast<Index>(i)) * v(static_cast<Index>(i));
            }
        }
    }
    const double m = static_cast<double>(mc_samples);
    double total = 0, variance = 0, all_sq = 0;
    for (std::size_t c = 0; c < cells; ++c) {
        const double mean = cell_sum[c] / m;
        total += mean;
        all_sq += cell_sq[c];
        if (mc_samples > 1) variance += (cell_sq[c] - m * mean * mean) / (m - 1) / m;
    }
    const double n_cells = static_cast<double>(cells);
    OracleEstimate est;
    est.value = total / n_cells;
    est.evaluations = cells * mc_samples;
    if (mc_samples > 1) {
        est.std_error = std::sqrt(std::max(0.0, variance)) / n_cells;
    } else {
        const double n = static_cast<double>(est.evaluations);
        const double var = n > 1 ? std::max(0.0, (all_sq - n * est.value * est.value) / (n - 1)) : 0.0;
        est.std_error = std::sqrt(var / n);
    }
    return est;
}

double minibatch_weighted_loss(const TaskNetwork<double>& net, const WeightModel& model, const Dataset& data,
                               const std::vector<std::size_t>& indices, std::size_t batch, Rng& rng,
                               const MagnitudeRanges& ranges, const PairList& pairs) {
    if (batch < 1 || indices.empty() || pairs.empty()) throw DomainError("minibatch_weighted_loss: empty input");
    const auto rows = static_cast<Index>(batch);
    MatrixXd inputs(rows, static_cast<Index>(data.input_size()));
    MatrixXd embeddings(rows, kEmbeddingSize);
    std::vector<int> labels(batch);
    for (Index r = 0; r < rows; ++r) {
        const auto& sample = data.samples[indices[rng.below(indices.size())]];
        const auto [first, second] = pairs[rng.below(pairs.size())];
        TransformSpec spec{first, second, rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
        const ImageSample out = apply_transform(sample, spec, rng, ranges);
        inputs.row(r) = Eigen::Map<const Eigen::RowVectorXd>(out.pixels.data(), inputs.cols());
        embeddings.row(r) = embed(spec).transpose();
        labels[static_cast<std::size_t>(r)] = sample.label;
    }
    return weighted_losses(net, model, inputs, embeddings, labels).mean();
}

// ---------------------------------------------------------------------------

ConvergenceReport make_report(const std::vector<LogRow>& log, long total) {
    if (total < 10) throw ContractError("convergence report needs at least 10 iterations");
    if (static_cast<long>(log.size()) != total)
        throw ContractError("incomplete log: " + std::to_string(log.size()) + " rows, expected " +
                            std::to_string(total));
    ConvergenceReport rep;
    rep.series.reserve(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& r = log[i];
        if (r.t != static_cast<long>(i)) throw ContractError("log rows out of order at row " + std::to_string(i));
        rep.series.push_back({r.t, r.grad_theta_sq, r.grad_w_sq, r.train_loss_weighted, r.val_loss});
    }
    rep.window = log.size() / 10;
    auto means = [&](std::size_t begin) {
        DecileMeans d;
        for (std::size_t i = begin; i < begin + rep.window; ++i) {
            d.grad_theta_sq += rep.series[i].grad_theta_sq;
            d.grad_w_sq += rep.series[i].grad_w_sq;
            d.train_loss += rep.series[i].train_loss;
            d.val_loss += rep.series[i].val_loss;
        }
        const double w = static_cast<double>(rep.window);
        d.grad_theta_sq /= w;
        d.grad_w_sq /= w;
        d.train_loss /= w;
        d.val_loss /= w;
        return d;
    };
    rep.first = means(0);
    rep.last = means(log.size() - rep.window);
    return rep;
}

Verdicts convergence_check(const ConvergenceReport& report) {
    if (report.window == 0 || report.series.size() < 2 * report.window)
        throw ContractError("convergence_check: report has no complete deciles");
    Verdicts v;
    v.policy_gradient_decreasing = report.last.grad_theta_sq < report.first.grad_theta_sq;
    v.validation_decreasing = report.last.val_loss < report.first.val_loss;
    v.task_gradient_decreasing = report.last.grad_w_sq < report.first.grad_w_sq;
    v.task_gradient_plateau = report.last.grad_w_sq;
    return v;
}

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report) {
    out << "t,grad_theta_sq,grad_w_sq,train_loss,val_loss\n" << std::setprecision(17);
    for (const auto& p : report.series)
        out << p.t << ',' << p.grad_theta_sq << ',' << p.grad_w_sq << ',' << p.train_loss << ',' << p.val_loss
            << '\n';
}

FixtureReports own_extractor_fixture(const RunConfig& cfg, const Dataset& data) {
    RunConfig own_cfg = cfg;
    own_cfg.feature_mode = FeatureMode::Own;
    RunConfig shared_cfg = cfg;
    shared_cfg.feature_mode = FeatureMode::Shared;
    const MetaState init = initial_state(cfg, data);
    RunResult own = run_from(own_cfg, data, init, init.task);
    RunResult shared = run_from(shared_cfg, data, init, std::nullopt);
    return {make_report(own.log, cfg.iterations), make_report(shared.log, cfg.iterations), std::move(own),
            std::move(shared)};
}

}  // namespace metaaug
