#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "metaaug/checkpoint.hpp"
#include "metaaug/config.hpp"
#include "metaaug/dataset.hpp"
#include "metaaug/meta.hpp"
#include "metaaug/sampler.hpp"

namespace metaaug {

/// One CSV row per iteration; column order is fixed.
struct LogRow {
    long t = 0;
    double train_loss_weighted = 0;  // mean of normalized weight * loss
    double val_loss = 0;             // validation mini-batch loss (at w_hat during joint training)
    double grad_theta_sq = 0;
    double grad_w_sq = 0;            // squared norm of the weighted training gradient
    double alpha = 0;
    double weight_mean = 0;          // raw policy outputs
    double weight_std = 0;
};

inline constexpr const char* kLogHeader =
    "t,train_loss_weighted,val_loss,grad_theta_sq,grad_w_sq,alpha,weight_mean,weight_std";

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log);
std::vector<LogRow> read_log_csv(std::istream& in);

/// What one iteration did, for observers (diagnostics and tests).
struct IterationRecord {
    long t;
    const std::vector<std::size_t>& sample_indices;  // dataset index per augmented sample
    const std::vector<TransformSpec>& specs;
    const VectorXd& raw_weights;
    const VectorXd& normalized_weights;
    const TransformSampler& sampler;
};
using IterationObserver = std::function<void(const IterationRecord&)>;

struct MetaState {
    TaskNetwork<double> task;
    PolicyNetwork<double> policy;
    double log_alpha = 0;
    long t = 0;
    long total = 0;

    [[nodiscard]] double alpha() const { return std::exp(log_alpha); }
};

/// Fresh task network and policy for `cfg` on `data`.
MetaState initial_state(const RunConfig& cfg, const Dataset& data);

struct RunResult {
    MetaState initial;
    MetaState state;
    TransformSampler sampler;
    std::vector<LogRow> log;

    [[nodiscard]] Checkpoint checkpoint() const;
};

/// T iterations of virtual step, policy step, real step and
/// periodic sampler refresh. A pure function of (cfg, data).
RunResult run(const RunConfig& cfg, const Dataset& data, const IterationObserver& observer = {});
/// Same, starting from an explicit state (the own-extractor fixture uses this).
RunResult run_from(const RunConfig& cfg, const Dataset& data, MetaState init,
                   const std::optional<TaskNetwork<double>>& own_extractor, const IterationObserver& observer = {});

/// Trains `net` with the frozen policy, frozen feature network and frozen
/// distribution. Only `net` changes.
struct TransferResult {
    TaskNetwork<double> net;
    std::vector<LogRow> log;
};
TransferResult transfer_train(TaskNetwork<double> net, const PolicyNetwork<double>& policy,
                              const TaskNetwork<double>& feature_net, const PairGrid& distribution,
                              const RunConfig& cfg, const Dataset& data, const IterationObserver& observer = {});
/// Unweighted SGD under the same augmentation stream (every weight is 1).
TransferResult train_unweighted(TaskNetwork<double> net, const PairGrid& distribution, const RunConfig& cfg,
                                const Dataset& data, const IterationObserver& observer = {});

struct Evaluation {
    double loss = 0;
    double accuracy = 0;
};
Evaluation evaluate(const TaskNetwork<double>& net, const Dataset& data, const std::vector<std::size_t>& indices);

/// Builds the augmented batch: each sample gets `mt_factor` transforms drawn
/// from the sampler; randomness comes from the (seed, t, slot) substream.
struct AugmentedBatch {
    MatrixXd inputs;
    MatrixXd embeddings;
    std::vector<int> labels;
    std::vector<std::size_t> sample_indices;
    std::vector<TransformSpec> specs;
};
AugmentedBatch augment_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                             const TransformSampler& sampler, const RunConfig& cfg, long t);

/// Draws epoch-shuffled mini-batches from an index set.
class EpochCursor {
public:
    EpochCursor(std::vector<std::size_t> indices, Rng rng);
    std::vector<std::size_t> next(std::size_t n);

private:
    std::vector<std::size_t> order_;
    std::size_t pos_;
    Rng rng_;
};

}  // namespace metaaug
