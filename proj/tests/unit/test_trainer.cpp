#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metaaug/trainer.hpp"

using namespace metaaug;

namespace {

RunConfig small_config(long iterations) {
    RunConfig cfg;
    cfg.seed = 3;
    cfg.synth_count = 120;
    cfg.task_hidden = {16};
    cfg.policy_hidden = 8;
    cfg.iterations = iterations;
    cfg.batch_size = 8;
    cfg.val_batch_size = 8;
    cfg.policy_lr = 0.05;
    cfg.refresh_every = 5;
    cfg.window = 10;
    return cfg;
}

std::string log_text(const std::vector<LogRow>& log) {
    std::ostringstream o;
    write_log_csv(o, log);
    return o.str();
}

}  // namespace

TEST_CASE("zero iterations returns the initial state") {
    const auto cfg = small_config(0);
    const auto data = prepare_dataset(cfg);
    const auto r = run(cfg, data);
    CHECK(r.log.empty());
    CHECK(flatten(r.state.task.params) == flatten(r.initial.task.params));
    CHECK(flatten(r.state.policy.params) == flatten(r.initial.policy.params));
    CHECK(r.state.log_alpha == r.initial.log_alpha);
    CHECK(r.sampler.probabilities() == uniform_grid());
}

TEST_CASE("initial policy outputs one half") {
    const auto cfg = small_config(0);
    const auto data = prepare_dataset(cfg);
    const auto s = initial_state(cfg, data);
    CHECK(s.alpha() == doctest::Approx(cfg.alpha_init).epsilon(1e-15));
    const TransformSampler sampler(0.1, 10);
    const auto batch = augment_batch(data, {data.train[0], data.train[1], data.train[2]}, sampler, cfg, 0);
    const auto features = forward_cached(s.task, batch.inputs).features(s.task.feature_index);
    const VectorXd raw = policy_weights(s.policy, features, batch.embeddings);
    for (Index i = 0; i < raw.size(); ++i) CHECK(raw(i) == 0.5);
    CHECK(normalize_weights(raw) == VectorXd::Ones(3));
}

TEST_CASE("runs are reproducible and log every iteration") {
    const auto cfg = small_config(30);
    const auto data = prepare_dataset(cfg);
    const auto a = run(cfg, data), b = run(cfg, data);
    REQUIRE(a.log.size() == 30);
    for (long t = 0; t < 30; ++t) CHECK(a.log[static_cast<std::size_t>(t)].t == t);
    CHECK(log_text(a.log) == log_text(b.log));
    CHECK(flatten(a.state.task.params) == flatten(b.state.task.params));
    CHECK(a.sampler.probabilities() == b.sampler.probabilities());

    RunConfig other = cfg;
    other.seed = 4;
    CHECK(log_text(run(other, prepare_dataset(other)).log) != log_text(a.log));
    for (const auto& row : a.log) {
        CHECK(std::isfinite(row.val_loss));
        CHECK(row.grad_theta_sq >= 0);
        CHECK(row.alpha > 0);
    }
    CHECK(a.sampler.probabilities() != uniform_grid());
}

TEST_CASE("log CSV round trip") {
    std::vector<LogRow> log{{0, 1.5, 2.25, 1e-12, 3.0, 0.05, 0.5, 0.0},
                            {1, 0.1 + 0.2, 1.0 / 3, 7e300, 2e-310, 0.0625, 0.4, 0.01}};
    std::istringstream in(log_text(log));
    const auto back = read_log_csv(in);
    REQUIRE(back.size() == 2);
    CHECK(back[1].train_loss_weighted == log[1].train_loss_weighted);
    CHECK(back[1].val_loss == log[1].val_loss);
    CHECK(back[1].grad_w_sq == log[1].grad_w_sq);
    CHECK(log_text(back) == log_text(log));
    CHECK(log_text(log).rfind(std::string(kLogHeader) + "\n", 0) == 0);

    std::istringstream bad("t,loss\n0,1\n");
    CHECK_THROWS_AS(read_log_csv(bad), ParseError);
}

TEST_CASE("phases: pretraining and frozen policy") {
    auto cfg = small_config(20);
    cfg.pretrain_iterations = 5;
    cfg.frozen_iterations = 5;
    const auto data = prepare_dataset(cfg);
    std::vector<double> weights_seen;
    const auto r = run(cfg, data, [&](const IterationRecord& rec) {
        if (rec.t < 5) {
            for (Index i = 0; i < rec.normalized_weights.size(); ++i) CHECK(rec.normalized_weights(i) == 1.0);
        }
    });
    REQUIRE(r.log.size() == 20);
    for (long t = 0; t < 5; ++t) CHECK(r.log[static_cast<std::size_t>(t)].grad_theta_sq == 0.0);
    for (long t = 15; t < 20; ++t) CHECK(r.log[static_cast<std::size_t>(t)].grad_theta_sq == 0.0);
    // the policy stops moving in the frozen phase
    CHECK(r.log[19].alpha == r.log[15].alpha);

    cfg.pretrain_iterations = 15;
    cfg.frozen_iterations = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("theorem1 schedule keeps alpha fixed") {
    auto cfg = small_config(16);
    cfg.schedule.mode = ScheduleConfig::Mode::Theorem1;
    const auto data = prepare_dataset(cfg);
    const auto r = run(cfg, data);
    REQUIRE(r.log.size() == 16);
    CHECK(r.log.front().alpha == doctest::Approx(0.17328679513998632).epsilon(1e-12));
    for (const auto& row : r.log) CHECK(row.alpha == r.log.front().alpha);
}

TEST_CASE("uniform weighting leaves the policy untouched") {
    auto cfg = small_config(10);
    cfg.weighting = Weighting::Uniform;
    const auto data = prepare_dataset(cfg);
    const auto r = run(cfg, data);
    CHECK(flatten(r.state.policy.params) == flatten(r.initial.policy.params));
    CHECK(r.state.log_alpha == r.initial.log_alpha);
}

TEST_CASE("epoch cursor covers every index once per epoch") {
    EpochCursor cur({4, 5, 6, 7, 8}, Rng(1, Stream::TrainBatches));
    std::vector<std::size_t> seen;
    for (int i = 0; i < 5; ++i) {
        const auto b = cur.next(1);
        seen.push_back(b[0]);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<std::size_t>{4, 5, 6, 7, 8});
    CHECK(cur.next(12).size() == 12);
    CHECK_THROWS_AS(EpochCursor({}, Rng(1, Stream::TrainBatches)), ConfigError);
}

TEST_CASE("augmented batch layout") {
    auto cfg = small_config(1);
    cfg.mt_factor = 3;
    const auto data = prepare_dataset(cfg);
    const TransformSampler sampler(0.1, 10);
    const std::vector<std::size_t> idx{data.train[0], data.train[1]};
    const auto b = augment_batch(data, idx, sampler, cfg, 7);
    CHECK(b.inputs.rows() == 6);
    CHECK(b.embeddings.rows() == 6);
    CHECK(b.embeddings.cols() == 28);
    CHECK(b.sample_indices == std::vector<std::size_t>{idx[0], idx[0], idx[0], idx[1], idx[1], idx[1]});
    const auto again = augment_batch(data, idx, sampler, cfg, 7);
    CHECK(again.inputs == b.inputs);
    const auto later = augment_batch(data, idx, sampler, cfg, 8);
    CHECK(later.inputs != b.inputs);
}

TEST_CASE("transfer and evaluation") {
    auto cfg = small_config(40);
    const auto data = prepare_dataset(cfg);
    const auto r = run(cfg, data);
    const auto ck = r.checkpoint();
    Rng rng(9, Stream::TaskInit);
    auto fresh = make_task_network<double>(static_cast<Index>(data.input_size()), cfg.task_hidden, data.num_classes, rng);
    const auto before = flatten(fresh.params);
    const auto t = transfer_train(fresh, ck.policy, ck.task, ck.distribution, cfg, data);
    CHECK(t.log.size() == 40);
    CHECK(flatten(t.net.params) != before);
    const auto ev = evaluate(t.net, data, data.test);
    CHECK(ev.accuracy >= 0.0);
    CHECK(ev.accuracy <= 1.0);
    CHECK(std::isfinite(ev.loss));

    const auto u = train_unweighted(fresh, ck.distribution, cfg, data);
    CHECK(u.log.size() == 40);
    for (const auto& row : u.log) CHECK(row.weight_mean == 1.0);

    Rng bad_rng(9, Stream::TaskInit);
    const auto mismatched = make_task_network<double>(static_cast<Index>(data.input_size()), {5}, data.num_classes, bad_rng);
    CHECK_THROWS(transfer_train(fresh, ck.policy, mismatched, ck.distribution, cfg, data));
}
