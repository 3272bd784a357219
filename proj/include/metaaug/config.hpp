#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "metaaug/augment.hpp"
#include "metaaug/dataset.hpp"
#include "metaaug/meta.hpp"

namespace metaaug {

/// `key = value` lines; `#` starts a comment. Duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(const std::string& text);

enum class FeatureMode {
    Shared,  // policy reads the current task network's penultimate features
    Own,     // policy reads a separate extractor frozen at its initial weights
};

enum class Weighting {
    Policy,   // learned per-sample weights
    Uniform,  // every augmented sample weighs 1; no policy updates
};

struct RunConfig {
    std::uint64_t seed = 0;

    // data
    std::string dataset = "synth_digits";  // or a path to a .maug container
    std::size_t synth_count = 3000;
    SplitFractions split{0.6, 0.2, 0.2};

    // networks
    std::vector<Index> task_hidden{256, 64};
    Index policy_hidden = kDefaultPolicyHidden;

    // meta-training loop
    long iterations = 1000;
    std::size_t batch_size = 32;      // n_tr
    std::size_t val_batch_size = 32;  // n_val
    std::size_t mt_factor = 1;        // transforms per training sample

    // task network optimizer (real step)
    double lr = 0.05;  // gamma
    double momentum = 0.9;
    double weight_decay = 5e-4;
    ScheduleConfig schedule{};

    // policy optimizer (theta, log alpha)
    double policy_lr = 1e-3;  // beta
    double policy_momentum = 0.9;
    double policy_weight_decay = 5e-4;
    double alpha_init = 0.05;
    bool learn_alpha = true;
    bool alpha_exempt = false;

    // sampler
    double epsilon = 0.1;
    long refresh_every = 0;  // s in iterations; 0 = one epoch
    long window = 0;         // r in iterations; 0 = 50 epochs

    MagnitudeRanges magnitudes{};
    FeatureMode feature_mode = FeatureMode::Shared;
    Weighting weighting = Weighting::Policy;

    // optional three-phase schedule: random-augmentation pretraining, joint
    // training, then training with the policy frozen
    long pretrain_iterations = 0;
    long frozen_iterations = 0;

    std::string output_dir = "run";

    static RunConfig from_text(const std::string& text);
    static RunConfig from_file(const std::filesystem::path& path);
    [[nodiscard]] std::string to_text() const;
    void validate() const;

    [[nodiscard]] long iterations_per_epoch(std::size_t train_size) const;
    [[nodiscard]] long refresh_period(std::size_t train_size) const;
    [[nodiscard]] long window_iterations(std::size_t train_size) const;
};

/// Loads or synthesizes the configured dataset and applies the split.
Dataset prepare_dataset(const RunConfig& cfg);

}  // namespace metaaug
