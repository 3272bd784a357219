#pragma once

// Independent oracles and monitors for the meta-training machinery.

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "metaaug/augment.hpp"
#include "metaaug/dataset.hpp"
#include "metaaug/meta.hpp"
#include "metaaug/trainer.hpp"

namespace metaaug {

// ---------------------------------------------------------------------------
// Hypergradient check

struct InstanceShape {
    Index input_size = 12;
    Index feature_dim = 8;
    Index num_classes = 3;
    Index policy_hidden = 16;
    Index n_train = 4;
    Index n_val = 4;
};

/// A tiny bilevel problem: task network, policy, one training batch with
/// transform embeddings, one validation batch, and alpha.
struct MetaInstance {
    TaskNetwork<double> task;
    PolicyNetwork<double> policy;
    double log_alpha = 0;
    MatrixXd train_inputs;
    MatrixXd train_embeddings;
    std::vector<int> train_labels;
    MatrixXd val_inputs;
    std::vector<int> val_labels;
};

/// Random instance number `trial` under `seed`. With `zero_head` the policy
/// output layer is zero, so every weight is 0.5.
MetaInstance make_meta_instance(std::uint64_t seed, std::uint64_t trial, const InstanceShape& shape = {},
                                bool zero_head = false);

/// meta_grad evaluated on the instance (virtual step included).
MetaGradient<double> analytic_hypergrad(const MetaInstance& inst);

/// Same computation in long double, for convergence-order checks.
MetaGradient<long double> analytic_hypergrad_ld(const MetaInstance& inst);

/// L_val(w_hat(theta, alpha)) evaluated in long double.
long double meta_objective(const MetaInstance& inst, const Vector<long double>& theta_flat, long double log_alpha);

struct FdHypergrad {
    Vector<long double> theta;  // flattened in policy parameter order
    long double log_alpha = 0;
};

/// Central differences of the validation loss after the virtual step, one
/// coordinate at a time, in long double.
FdHypergrad fd_hypergrad(const MetaInstance& inst, double eps);

struct HypergradComparison {
    double theta_rel_error = 0;
    double log_alpha_rel_error = 0;
    [[nodiscard]] double max_rel_error() const { return std::max(theta_rel_error, log_alpha_rel_error); }
};

/// Relative error of `analytic` against `reference`: the largest coordinate
/// difference over the largest reference magnitude.
double relative_error(const Vector<long double>& analytic, const Vector<long double>& reference);
double relative_error(long double analytic, long double reference);

HypergradComparison compare_hypergrad(const MetaInstance& inst, double eps);

// ---------------------------------------------------------------------------
// Weighted-loss oracle

/// Weight model: the policy fed with features of `feature_net` on the
/// augmented image.
struct WeightModel {
    const PolicyNetwork<double>& policy;
    const TaskNetwork<double>& feature_net;
};

using PairList = std::vector<std::pair<Function, Function>>;
PairList all_pairs();

struct OracleEstimate {
    double value = 0;
    double std_error = 0;
    std::size_t evaluations = 0;
};

/// Exhaustive over `indices` and `pairs`, Monte Carlo over magnitudes and
/// signs: the mean of raw weight times loss.
OracleEstimate weighted_loss_oracle(const TaskNetwork<double>& net, const WeightModel& model, const Dataset& data,
                                    const std::vector<std::size_t>& indices, std::size_t mc_samples,
                                    std::uint64_t seed, const MagnitudeRanges& ranges = {},
                                    const PairList& pairs = all_pairs());

/// One mini-batch estimate: `batch` samples drawn with replacement, each with a
/// uniform pair and uniform magnitudes.
double minibatch_weighted_loss(const TaskNetwork<double>& net, const WeightModel& model, const Dataset& data,
                               const std::vector<std::size_t>& indices, std::size_t batch, Rng& rng,
                               const MagnitudeRanges& ranges = {}, const PairList& pairs = all_pairs());

// ---------------------------------------------------------------------------
// Convergence monitoring

struct ConvergencePoint {
    long t;
    double grad_theta_sq;
    double grad_w_sq;
    double train_loss;
    double val_loss;
};

struct DecileMeans {
    double grad_theta_sq = 0;
    double grad_w_sq = 0;
    double train_loss = 0;
    double val_loss = 0;
};

struct ConvergenceReport {
    std::vector<ConvergencePoint> series;
    std::size_t window = 0;  // decile length
    DecileMeans first;
    DecileMeans last;
};

/// Builds the report; the log must hold exactly `total` rows t = 0..total-1
/// and total >= 10.
ConvergenceReport make_report(const std::vector<LogRow>& log, long total);

struct Verdicts {
    bool policy_gradient_decreasing = false;  // A: grad_theta_sq last decile below first
    bool validation_decreasing = false;       // B: val loss last decile below first
    bool task_gradient_decreasing = false;    // C: grad_w_sq last decile below first
    double task_gradient_plateau = 0;         // last-decile grad_w_sq mean, the bias level
};

Verdicts convergence_check(const ConvergenceReport& report);

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);

struct FixtureReports {
    ConvergenceReport own;     // policy reads a frozen copy of the initial task network
    ConvergenceReport shared;  // policy reads the live task network
    RunResult own_run;
    RunResult shared_run;
};

/// Runs both feature modes from the same initial state and seed.
FixtureReports own_extractor_fixture(const RunConfig& cfg, const Dataset& data);

}  // namespace metaaug
