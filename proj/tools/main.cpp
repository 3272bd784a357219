#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "metaaug/checkpoint.hpp"
#include "metaaug/config.hpp"
#include "metaaug/io.hpp"
#include "metaaug/trainer.hpp"
#include "metaaug/verification.hpp"

namespace fs = std::filesystem;
using namespace metaaug;

namespace {

constexpr int kUsageError = 2;

template <typename Fn>
std::string to_string_with(Fn&& fn) {
    std::ostringstream out;
    fn(out);
    return out.str();
}

RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                      const std::optional<std::string>& output) {
    RunConfig cfg = RunConfig::from_file(path);
    if (seed) cfg.seed = *seed;
    if (output) cfg.output_dir = *output;
    cfg.validate();
    return cfg;
}

int cmd_train(const RunConfig& cfg) {
    const Dataset data = prepare_dataset(cfg);
    std::cerr << "training " << cfg.iterations << " iterations on " << data.train.size() << " samples\n";
    const RunResult result = run(cfg, data);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_file_atomic(dir / "config.txt", cfg.to_text());
    write_file_atomic(dir / "log.csv", to_string_with([&](std::ostream& o) { write_log_csv(o, result.log); }));
    write_file_atomic(dir / "distribution.csv",
                      to_string_with([&](std::ostream& o) { write_distribution_csv(o, result.sampler.probabilities()); }));
    const auto report = make_report(result.log, cfg.iterations);
    write_file_atomic(dir / "convergence.csv",
                      to_string_with([&](std::ostream& o) { write_convergence_csv(o, report); }));
    save_checkpoint(result.checkpoint(), dir / "checkpoint.mack");

    const auto v = convergence_check(report);
    const auto test = evaluate(result.state.task, data, data.test);
    std::cout << std::setprecision(6) << "test_loss " << test.loss << "\ntest_accuracy " << test.accuracy
              << "\nalpha " << result.state.alpha() << "\npolicy_gradient_decreasing "
              << v.policy_gradient_decreasing << "\nvalidation_decreasing " << v.validation_decreasing
              << "\noutput " << dir.string() << "\n";
    return 0;
}

int cmd_transfer(const RunConfig& cfg, const std::string& policy_path) {
    const Checkpoint ckpt = load_checkpoint(policy_path);
    const Dataset data = prepare_dataset(cfg);
    Rng rng(cfg.seed, Stream::TaskInit);
    auto net = make_task_network<double>(static_cast<Index>(data.input_size()), cfg.task_hidden, data.num_classes, rng);
    const auto result = transfer_train(std::move(net), ckpt.policy, ckpt.task, ckpt.distribution, cfg, data);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_file_atomic(dir / "transfer_log.csv",
                      to_string_with([&](std::ostream& o) { write_log_csv(o, result.log); }));
    const auto test = evaluate(result.net, data, data.test);
    std::cout << std::setprecision(6) << "test_loss " << test.loss << "\ntest_accuracy " << test.accuracy
              << "\noutput " << dir.string() << "\n";
    return 0;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed, double eps, double tolerance) {
    std::cout << std::left << std::setw(7) << "trial" << std::setw(16) << "theta_rel" << std::setw(16)
              << "log_alpha_rel" << "result\n";
    std::size_t failures = 0;
    for (std::size_t i = 0; i < trials; ++i) {
        const auto cmp = compare_hypergrad(make_meta_instance(seed, i), eps);
        const bool ok = cmp.max_rel_error() <= tolerance;
        failures += ok ? 0 : 1;
        std::cout << std::setw(7) << i << std::setw(16) << std::scientific << std::setprecision(3)
                  << cmp.theta_rel_error << std::setw(16) << cmp.log_alpha_rel_error << (ok ? "PASS" : "FAIL")
                  << std::defaultfloat << "\n";
    }
    std::cout << (trials - failures) << "/" << trials << " passed (tolerance " << tolerance << ")\n";
    return failures == 0 ? 0 : 1;
}

int cmd_export_dist(const std::string& ckpt_path, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const std::string csv = to_string_with([&](std::ostream& o) { write_distribution_csv(o, ckpt.distribution); });
    if (out.empty())
        std::cout << csv;
    else
        write_file_atomic(out, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metaaug: meta-learned per-sample augmentation weighting"};
    app.require_subcommand(1);

    std::string config_path, policy_path, ckpt_path, out_path, input_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    std::size_t trials = 50, synth_count = 3000;
    std::uint64_t gc_seed = 0, synth_seed = 0;
    double eps = 1e-5, tolerance = 1e-4;

    auto* train = app.add_subcommand("train", "run meta-training and write log, distribution and checkpoint");
    train->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--output", output, "override the output directory");

    auto* transfer = app.add_subcommand("transfer", "train a fresh network with a frozen policy checkpoint");
    transfer->add_option("--policy", policy_path, "checkpoint from a train run")->required()->check(CLI::ExistingFile);
    transfer->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    transfer->add_option("--seed", seed, "override the config seed");
    transfer->add_option("--output", output, "override the output directory");

    auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic hypergradients with finite differences");
    gradcheck->add_option("--trials", trials, "random instances")->check(CLI::PositiveNumber);
    gradcheck->add_option("--seed", gc_seed, "instance seed");
    gradcheck->add_option("--eps", eps, "finite-difference step")->check(CLI::Range(1e-6, 1e-4));
    gradcheck->add_option("--tolerance", tolerance, "max relative error");

    auto* export_dist = app.add_subcommand("export-dist", "print the 14x14 distribution stored in a checkpoint");
    export_dist->add_option("checkpoint", ckpt_path, "checkpoint file")->required()->check(CLI::ExistingFile);
    export_dist->add_option("--out", out_path, "write CSV here instead of stdout");

    auto* convert = app.add_subcommand("convert", "pack a directory of PGM/PPM images (one subdirectory per class)");
    convert->add_option("input", input_dir, "image root")->required()->check(CLI::ExistingDirectory);
    convert->add_option("output", out_path, "dataset file to write")->required();

    auto* synth = app.add_subcommand("synth", "write the synthetic glyph dataset to a file");
    synth->add_option("output", out_path, "dataset file to write")->required();
    synth->add_option("--count", synth_count, "number of samples")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "dataset seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kUsageError;
    }

    try {
        if (*train) return cmd_train(load_config(config_path, seed, output));
        if (*transfer) return cmd_transfer(load_config(config_path, seed, output), policy_path);
        if (*gradcheck) return cmd_gradcheck(trials, gc_seed, eps, tolerance);
        if (*export_dist) return cmd_export_dist(ckpt_path, out_path);
        if (*convert) {
            const Dataset data = convert_pnm_directory(input_dir);
            save_dataset(data, out_path);
            std::cout << data.samples.size() << " images, " << data.num_classes << " classes\n";
            return 0;
        }
        if (*synth) {
            save_dataset(synth_digits(synth_count, synth_seed), out_path);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kUsageError;
}
