#include "metaaug/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace metaaug {

namespace {

enum class Phase { Pretrain, Joint, Frozen };

Phase phase_at(const RunConfig& cfg, long t) {
    if (t < cfg.pretrain_iterations) return Phase::Pretrain;
    if (t >= cfg.iterations - cfg.frozen_iterations) return Phase::Frozen;
    return Phase::Joint;
}

double task_lr(const RunConfig& cfg, long t, const std::optional<TheoremRates>& rates) {
    switch (cfg.schedule.mode) {
        case ScheduleConfig::Mode::Constant: return cfg.lr;
        case ScheduleConfig::Mode::Cosine:
            return cosine_lr(static_cast<double>(t), static_cast<double>(cfg.iterations), cfg.lr);
        case ScheduleConfig::Mode::Theorem1: return rates->gamma;
    }
    return cfg.lr;
}

void fill_weight_stats(LogRow& row, const VectorXd& raw) {
    row.weight_mean = raw.mean();
    row.weight_std = raw.size() > 1 ? std::sqrt((raw.array() - row.weight_mean).square().sum() / double(raw.size())) : 0.0;
}

void require_splits(const Dataset& data, bool need_val) {
    validate(data);
    if (data.train.empty()) throw ConfigError("dataset has an empty training split");
    if (need_val && data.val.empty()) throw ConfigError("dataset has an empty validation split");
}

TransformSampler frozen_sampler(const PairGrid& distribution) {
    TransformSampler s(0.0, 1);
    s.set_probabilities(distribution);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
    out << kLogHeader << '\n' << std::setprecision(17);
    for (const auto& r : log)
        out << r.t << ',' << r.train_loss_weighted << ',' << r.val_loss << ',' << r.grad_theta_sq << ','
            << r.grad_w_sq << ',' << r.alpha << ',' << r.weight_mean << ',' << r.weight_std << '\n';
}

std::vector<LogRow> read_log_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kLogHeader) throw ParseError("log CSV header mismatch", 0);
    std::vector<LogRow> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        LogRow r;
        char comma;
        ss >> r.t >> comma >> r.train_loss_weighted >> comma >> r.val_loss >> comma >> r.grad_theta_sq >> comma >>
            r.grad_w_sq >> comma >> r.alpha >> comma >> r.weight_mean >> comma >> r.weight_std;
        if (!ss) throw ParseError("malformed log row " + std::to_string(out.size()), 0);
        out.push_back(r);
    }
    return out;
}

EpochCursor::EpochCursor(std::vector<std::size_t> indices, Rng rng)
    : order_(std::move(indices)), pos_(order_.size()), rng_(rng) {
    if (order_.empty()) throw ConfigError("cannot draw batches from an empty split");
}

std::vector<std::size_t> EpochCursor::next(std::size_t n) {
    std::vector<std::size_t> out;
    out.reserve(n);
    while (out.size() < n) {
        if (pos_ == order_.size()) {
            rng_.shuffle(std::span<std::size_t>(order_));
            pos_ = 0;
        }
        out.push_back(order_[pos_++]);
    }
    return out;
}

AugmentedBatch augment_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                             const TransformSampler& sampler, const RunConfig& cfg, long t) {
    const std::size_t mt = cfg.mt_factor;
    const auto rows = static_cast<Index>(indices.size() * mt);
    AugmentedBatch batch;
    batch.inputs.resize(rows, static_cast<Index>(data.input_size()));
    batch.embeddings.resize(rows, kEmbeddingSize);
    batch.labels.reserve(static_cast<std::size_t>(rows));
    batch.sample_indices.reserve(static_cast<std::size_t>(rows));
    batch.specs.reserve(static_cast<std::size_t>(rows));
    const Rng base(cfg.seed, Stream::Augment);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& sample = data.samples[indices[i]];
        for (std::size_t r = 0; r < mt; ++r) {
            const std::size_t slot = i * mt + r;
            Rng rng = base.substream(static_cast<std::uint64_t>(t), slot);
            const TransformSpec spec = sampler.sample(rng);
            const ImageSample out = apply_transform(sample, spec, rng, cfg.magnitudes);
            const auto row = static_cast<Index>(slot);
            batch.inputs.row(row) = Eigen::Map<const Eigen::RowVectorXd>(out.pixels.data(), batch.inputs.cols());
            batch.embeddings.row(row) = embed(spec).transpose();
            batch.labels.push_back(sample.label);
            batch.sample_indices.push_back(indices[i]);
            batch.specs.push_back(spec);
        }
    }
    return batch;
}

MetaState initial_state(const RunConfig& cfg, const Dataset& data) {
    MetaState s;
    Rng task_rng(cfg.seed, Stream::TaskInit);
    s.task = make_task_network<double>(static_cast<Index>(data.input_size()), cfg.task_hidden, data.num_classes, task_rng);
    Rng policy_rng(cfg.seed, Stream::PolicyInit);
    s.policy = make_policy<double>(s.task.feature_size(), cfg.policy_hidden, policy_rng);
    s.log_alpha = cfg.schedule.mode == ScheduleConfig::Mode::Theorem1
                      ? std::log(theorem_schedule(cfg.iterations, cfg.schedule).alpha)
                      : std::log(cfg.alpha_init);
    s.total = cfg.iterations;
    return s;
}

Checkpoint RunResult::checkpoint() const {
    return {state.policy, state.log_alpha, state.task, sampler.probabilities()};
}

RunResult run(const RunConfig& cfg, const Dataset& data, const IterationObserver& observer) {
    return run_from(cfg, data, initial_state(cfg, data), std::nullopt, observer);
}

RunResult run_from(const RunConfig& cfg, const Dataset& data, MetaState init,
                   const std::optional<TaskNetwork<double>>& own_extractor, const IterationObserver& observer) {
    cfg.validate();
    const bool use_policy = cfg.weighting == Weighting::Policy;
    require_splits(data, true);
    validate(init.task);
    if (static_cast<std::size_t>(init.task.input_size()) != data.input_size())
        throw ConfigError("task network input size does not match the dataset");
    if (use_policy && cfg.feature_mode == FeatureMode::Own && !own_extractor)
        throw ConfigError("own feature mode needs an extractor network");

    const std::size_t per_iteration = cfg.batch_size * cfg.mt_factor;
    const long window = cfg.window_iterations(data.train.size());
    const long refresh = cfg.refresh_period(data.train.size());

    RunResult result{init, std::move(init),
                     TransformSampler(cfg.epsilon, static_cast<std::size_t>(window) * per_iteration), {}};
    MetaState& st = result.state;
    st.total = cfg.iterations;
    TransformSampler& sampler = result.sampler;
    const TransformSampler uniform_sampler(1.0, 1);

    std::optional<TheoremRates> rates;
    if (cfg.schedule.mode == ScheduleConfig::Mode::Theorem1) rates = theorem_schedule(cfg.iterations, cfg.schedule);
    const double beta = rates ? rates->beta : cfg.policy_lr;

    auto task_opt = make_sgd_state(st.task.params, cfg.momentum, cfg.weight_decay, cfg.lr);
    // the convergence theorems hold alpha fixed
    auto policy_opt = make_policy_optimizer(st.policy, cfg.policy_momentum, cfg.policy_weight_decay, cfg.alpha_exempt,
                                            cfg.learn_alpha && !rates);

    EpochCursor train_cursor(data.train, Rng(cfg.seed, Stream::TrainBatches));
    EpochCursor val_cursor(data.val, Rng(cfg.seed, Stream::ValBatches));
    result.log.reserve(static_cast<std::size_t>(cfg.iterations));

    for (long t = 0; t < cfg.iterations; ++t) {
        const Phase phase = use_policy ? phase_at(cfg, t) : Phase::Pretrain;
        const auto indices = train_cursor.next(cfg.batch_size);
        const AugmentedBatch batch =
            augment_batch(data, indices, phase == Phase::Pretrain ? uniform_sampler : sampler, cfg, t);
        const auto val_indices = val_cursor.next(cfg.val_batch_size);
        const MatrixXd val_inputs = to_matrix(data, val_indices);
        const auto val_labels = labels_of(data, val_indices);

        const auto bg = batch_gradients(st.task, batch.inputs, batch.labels);
        const Index n = bg.grads.size();
        LogRow row;
        row.t = t;
        VectorXd raw = VectorXd::Ones(n);
        VectorXd normalized = VectorXd::Ones(n);

        if (phase == Phase::Pretrain) {
            row.val_loss = per_sample_loss(forward(st.task, val_inputs).logits, val_labels).mean();
        } else {
            const MatrixXd own_features =
                cfg.feature_mode == FeatureMode::Own ? forward(*own_extractor, batch.inputs).features : MatrixXd{};
            const MatrixXd& features = cfg.feature_mode == FeatureMode::Own ? own_features : bg.features;
            if (phase == Phase::Joint) {
                const double alpha = st.alpha();
                const VectorXd current = normalize_weights(policy_weights(st.policy, features, batch.embeddings));
                const TaskNetwork<double> w_hat{inner_step(st.task.params, bg.grads, current, alpha),
                                                st.task.activations, st.task.feature_index};
                const AugmentedBatchView<double> view{bg.grads, features, batch.embeddings};
                const auto mg = meta_grad(w_hat, view, val_inputs, val_labels, st.policy, alpha);
                outer_step_theta(st.policy, st.log_alpha, mg, beta, policy_opt);
                row.val_loss = mg.val_loss;
                row.grad_theta_sq = squared_norm(mg.theta);
            } else {
                row.val_loss = per_sample_loss(forward(st.task, val_inputs).logits, val_labels).mean();
            }
            raw = policy_weights(st.policy, features, batch.embeddings);
            normalized = normalize_weights(raw);
            if (phase == Phase::Joint)
                for (Index i = 0; i < n; ++i)
                    sampler.record(batch.specs[static_cast<std::size_t>(i)].first,
                                   batch.specs[static_cast<std::size_t>(i)].second, raw(i));
        }

        const auto g = outer_step_w(st.task.params, bg.grads, normalized, task_lr(cfg, t, rates), task_opt);
        row.train_loss_weighted = normalized.cwiseProduct(bg.losses).mean();
        row.grad_w_sq = squared_norm(g);
        row.alpha = st.alpha();
        fill_weight_stats(row, raw);
        result.log.push_back(row);
        st.t = t + 1;

        if (observer) observer({t, batch.sample_indices, batch.specs, raw, normalized, sampler});
        if (phase == Phase::Joint && (t + 1) % refresh == 0) sampler.refresh();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Transfer

namespace {

using WeightFn = std::function<VectorXd(const AugmentedBatch&)>;

TransferResult weighted_training(TaskNetwork<double> net, const WeightFn& weights_of, const PairGrid& distribution,
                                 const RunConfig& cfg, const Dataset& data, const IterationObserver& observer) {
    cfg.validate();
    require_splits(data, true);
    validate(net);
    if (static_cast<std::size_t>(net.input_size()) != data.input_size())
        throw ConfigError("task network input size does not match the dataset");
    const TransformSampler sampler = frozen_sampler(distribution);
    auto opt = make_sgd_state(net.params, cfg.momentum, cfg.weight_decay, cfg.lr);
    std::optional<TheoremRates> rates;
    if (cfg.schedule.mode == ScheduleConfig::Mode::Theorem1) rates = theorem_schedule(cfg.iterations, cfg.schedule);

    EpochCursor train_cursor(data.train, Rng(cfg.seed, Stream::TrainBatches));
    EpochCursor val_cursor(data.val, Rng(cfg.seed, Stream::ValBatches));
    TransferResult result{std::move(net), {}};
    result.log.reserve(static_cast<std::size_t>(cfg.iterations));
    for (long t = 0; t < cfg.iterations; ++t) {
        const auto indices = train_cursor.next(cfg.batch_size);
        const AugmentedBatch batch = augment_batch(data, indices, sampler, cfg, t);
        const auto val_indices = val_cursor.next(cfg.val_batch_size);

        const auto bg = batch_gradients(result.net, batch.inputs, batch.labels);
        const VectorXd raw = weights_of(batch);
        const VectorXd normalized = normalize_weights(raw);

        LogRow row;
        row.t = t;
        row.val_loss =
            per_sample_loss(forward(result.net, to_matrix(data, val_indices)).logits, labels_of(data, val_indices))
                .mean();
        const auto g = outer_step_w(result.net.params, bg.grads, normalized, task_lr(cfg, t, rates), opt);
        row.train_loss_weighted = normalized.cwiseProduct(bg.losses).mean();
        row.grad_w_sq = squared_norm(g);
        fill_weight_stats(row, raw);
        result.log.push_back(row);
        if (observer) observer({t, batch.sample_indices, batch.specs, raw, normalized, sampler});
    }
    return result;
}

}  // namespace

TransferResult transfer_train(TaskNetwork<double> net, const PolicyNetwork<double>& policy,
                              const TaskNetwork<double>& feature_net, const PairGrid& distribution,
                              const RunConfig& cfg, const Dataset& data, const IterationObserver& observer) {
    validate(feature_net);
    if (feature_net.feature_size() != policy.feature_size())
        throw ConfigError("frozen feature network does not match the policy input size");
    const WeightFn weights = [&](const AugmentedBatch& batch) {
        return policy_weights(policy, forward(feature_net, batch.inputs).features, batch.embeddings);
    };
    return weighted_training(std::move(net), weights, distribution, cfg, data, observer);
}

TransferResult train_unweighted(TaskNetwork<double> net, const PairGrid& distribution, const RunConfig& cfg,
                                const Dataset& data, const IterationObserver& observer) {
    const WeightFn ones = [](const AugmentedBatch& batch) { return VectorXd::Ones(batch.inputs.rows()).eval(); };
    return weighted_training(std::move(net), ones, distribution, cfg, data, observer);
}

Evaluation evaluate(const TaskNetwork<double>& net, const Dataset& data, const std::vector<std::size_t>& indices) {
    if (indices.empty()) return {};
    constexpr std::size_t kChunk = 512;
    double loss = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::vector<std::size_t> chunk(indices.begin() + static_cast<long>(start),
                                             indices.begin() + static_cast<long>(std::min(indices.size(), start + kChunk)));
        const auto labels = labels_of(data, chunk);
        const auto logits = forward(net, to_matrix(data, chunk)).logits;
        loss += per_sample_loss(logits, labels).sum();
        for (Index i = 0; i < logits.rows(); ++i) {
            Index arg;
            logits.row(i).maxCoeff(&arg);
            if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    const auto n = static_cast<double>(indices.size());
    return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace metaaug
