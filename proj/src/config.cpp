#include "metaaug/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <iomanip>
#include <sstream>

#include "metaaug/io.hpp"

namespace metaaug {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    const auto x = to_int(key, v);
    if (x < 0) throw ConfigError(key + ": must be non-negative");
    return static_cast<std::size_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<Index> to_dims(const std::string& key, const std::string& v) {
    std::vector<Index> dims;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto d = to_int(key, trim(item));
        if (d < 1) throw ConfigError(key + ": layer sizes must be positive");
        dims.push_back(static_cast<Index>(d));
    }
    if (dims.empty()) throw ConfigError(key + ": needs at least one layer size");
    return dims;
}

std::string schedule_name(ScheduleConfig::Mode m) {
    switch (m) {
        case ScheduleConfig::Mode::Constant: return "constant";
        case ScheduleConfig::Mode::Cosine: return "cosine";
        case ScheduleConfig::Mode::Theorem1: return "theorem1";
    }
    return "cosine";
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table{
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
        {"dataset", [](RunConfig& c, auto&, auto& v) { c.dataset = v; }},
        {"synth_count", [](RunConfig& c, auto& k, auto& v) { c.synth_count = to_size(k, v); }},
        {"split_train", [](RunConfig& c, auto& k, auto& v) { c.split.train = to_double(k, v); }},
        {"split_val", [](RunConfig& c, auto& k, auto& v) { c.split.val = to_double(k, v); }},
        {"split_test", [](RunConfig& c, auto& k, auto& v) { c.split.test = to_double(k, v); }},
        {"task_hidden", [](RunConfig& c, auto& k, auto& v) { c.task_hidden = to_dims(k, v); }},
        {"policy_hidden", [](RunConfig& c, auto& k, auto& v) { c.policy_hidden = static_cast<Index>(to_size(k, v)); }},
        {"iterations", [](RunConfig& c, auto& k, auto& v) { c.iterations = static_cast<long>(to_int(k, v)); }},
        {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = to_size(k, v); }},
        {"val_batch_size", [](RunConfig& c, auto& k, auto& v) { c.val_batch_size = to_size(k, v); }},
        {"mt_factor", [](RunConfig& c, auto& k, auto& v) { c.mt_factor = to_size(k, v); }},
        {"lr", [](RunConfig& c, auto& k, auto& v) { c.lr = to_double(k, v); }},
        {"momentum", [](RunConfig& c, auto& k, auto& v) { c.momentum = to_double(k, v); }},
        {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.weight_decay = to_double(k, v); }},
        {"lr_schedule",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "constant")
                 c.schedule.mode = ScheduleConfig::Mode::Constant;
             else if (v == "cosine")
                 c.schedule.mode = ScheduleConfig::Mode::Cosine;
             else if (v == "theorem1")
                 c.schedule.mode = ScheduleConfig::Mode::Theorem1;
             else
                 throw ConfigError(k + ": expected constant, cosine or theorem1");
         }},
        {"theorem_c", [](RunConfig& c, auto& k, auto& v) { c.schedule.c = to_double(k, v); }},
        {"theorem_c_prime", [](RunConfig& c, auto& k, auto& v) { c.schedule.c_prime = to_double(k, v); }},
        {"theorem_c_double_prime", [](RunConfig& c, auto& k, auto& v) { c.schedule.c_double_prime = to_double(k, v); }},
        {"policy_lr", [](RunConfig& c, auto& k, auto& v) { c.policy_lr = to_double(k, v); }},
        {"policy_momentum", [](RunConfig& c, auto& k, auto& v) { c.policy_momentum = to_double(k, v); }},
        {"policy_weight_decay", [](RunConfig& c, auto& k, auto& v) { c.policy_weight_decay = to_double(k, v); }},
        {"alpha_init", [](RunConfig& c, auto& k, auto& v) { c.alpha_init = to_double(k, v); }},
        {"learn_alpha", [](RunConfig& c, auto& k, auto& v) { c.learn_alpha = to_bool(k, v); }},
        {"alpha_exempt", [](RunConfig& c, auto& k, auto& v) { c.alpha_exempt = to_bool(k, v); }},
        {"epsilon", [](RunConfig& c, auto& k, auto& v) { c.epsilon = to_double(k, v); }},
        {"refresh_every", [](RunConfig& c, auto& k, auto& v) { c.refresh_every = static_cast<long>(to_int(k, v)); }},
        {"window", [](RunConfig& c, auto& k, auto& v) { c.window = static_cast<long>(to_int(k, v)); }},
        {"rotate_degrees", [](RunConfig& c, auto& k, auto& v) { c.magnitudes.rotate_degrees = to_double(k, v); }},
        {"shear", [](RunConfig& c, auto& k, auto& v) { c.magnitudes.shear = to_double(k, v); }},
        {"translate_fraction",
         [](RunConfig& c, auto& k, auto& v) { c.magnitudes.translate_fraction = to_double(k, v); }},
        {"enhance", [](RunConfig& c, auto& k, auto& v) { c.magnitudes.enhance = to_double(k, v); }},
        {"feature_mode",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "shared")
                 c.feature_mode = FeatureMode::Shared;
             else if (v == "own")
                 c.feature_mode = FeatureMode::Own;
             else
                 throw ConfigError(k + ": expected shared or own");
         }},
        {"weighting",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "policy")
                 c.weighting = Weighting::Policy;
             else if (v == "uniform")
                 c.weighting = Weighting::Uniform;
             else
                 throw ConfigError(k + ": expected policy or uniform");
         }},
        {"pretrain_iterations",
         [](RunConfig& c, auto& k, auto& v) { c.pretrain_iterations = static_cast<long>(to_int(k, v)); }},
        {"frozen_iterations",
         [](RunConfig& c, auto& k, auto& v) { c.frozen_iterations = static_cast<long>(to_int(k, v)); }},
        {"output_dir", [](RunConfig& c, auto&, auto& v) { c.output_dir = v; }},
    };
    return table;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    for (const auto& [key, value] : parse_key_values(text)) {
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const LoadError& e) {
        throw ConfigError(e.what());
    }
    return from_text(std::string(bytes.begin(), bytes.end()));
}

std::string RunConfig::to_text() const {
    std::ostringstream o;
    o << std::setprecision(17);
    auto dims = [](const std::vector<Index>& d) {
        std::string s;
        for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
        return s;
    };
    o << "seed = " << seed << '\n'
      << "dataset = " << dataset << '\n'
      << "synth_count = " << synth_count << '\n'
      << "split_train = " << split.train << '\n'
      << "split_val = " << split.val << '\n'
      << "split_test = " << split.test << '\n'
      << "task_hidden = " << dims(task_hidden) << '\n'
      << "policy_hidden = " << policy_hidden << '\n'
      << "iterations = " << iterations << '\n'
      << "batch_size = " << batch_size << '\n'
      << "val_batch_size = " << val_batch_size << '\n'
      << "mt_factor = " << mt_factor << '\n'
      << "lr = " << lr << '\n'
      << "momentum = " << momentum << '\n'
      << "weight_decay = " << weight_decay << '\n'
      << "lr_schedule = " << schedule_name(schedule.mode) << '\n'
      << "theorem_c = " << schedule.c << '\n'
      << "theorem_c_prime = " << schedule.c_prime << '\n'
      << "theorem_c_double_prime = " << schedule.c_double_prime << '\n'
      << "policy_lr = " << policy_lr << '\n'
      << "policy_momentum = " << policy_momentum << '\n'
      << "policy_weight_decay = " << policy_weight_decay << '\n'
      << "alpha_init = " << alpha_init << '\n'
      << "learn_alpha = " << (learn_alpha ? "true" : "false") << '\n'
      << "alpha_exempt = " << (alpha_exempt ? "true" : "false") << '\n'
      << "epsilon = " << epsilon << '\n'
      << "refresh_every = " << refresh_every << '\n'
      << "window = " << window << '\n'
      << "rotate_degrees = " << magnitudes.rotate_degrees << '\n'
      << "shear = " << magnitudes.shear << '\n'
      << "translate_fraction = " << magnitudes.translate_fraction << '\n'
      << "enhance = " << magnitudes.enhance << '\n'
      << "feature_mode = " << (feature_mode == FeatureMode::Shared ? "shared" : "own") << '\n'
      << "weighting = " << (weighting == Weighting::Policy ? "policy" : "uniform") << '\n'
      << "pretrain_iterations = " << pretrain_iterations << '\n'
      << "frozen_iterations = " << frozen_iterations << '\n'
      << "output_dir = " << output_dir << '\n';
    return o.str();
}

void RunConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0)) throw ConfigError(std::string(name) + " must be > 0");
    };
    positive(lr, "lr");
    positive(policy_lr, "policy_lr");
    positive(alpha_init, "alpha_init");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (batch_size == 0 || val_batch_size == 0) throw ConfigError("batch sizes must be positive");
    if (mt_factor == 0) throw ConfigError("mt_factor must be positive");
    if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("epsilon must lie in [0, 1]");
    if (momentum < 0 || momentum >= 1 || policy_momentum < 0 || policy_momentum >= 1)
        throw ConfigError("momentum must lie in [0, 1)");
    if (weight_decay < 0 || policy_weight_decay < 0) throw ConfigError("weight decay must be >= 0");
    if (refresh_every < 0 || window < 0) throw ConfigError("sampler periods must be >= 0");
    if (pretrain_iterations < 0 || frozen_iterations < 0 || pretrain_iterations + frozen_iterations > iterations)
        throw ConfigError("phase lengths must fit inside the run");
    if (split.train < 0 || split.val < 0 || split.test < 0 || split.train + split.val + split.test > 1.0 + 1e-12)
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    if (schedule.mode == ScheduleConfig::Mode::Theorem1) {
        positive(schedule.c, "theorem_c");
        positive(schedule.c_prime, "theorem_c_prime");
        positive(schedule.c_double_prime, "theorem_c_double_prime");
        if (iterations < 3) throw ConfigError("theorem1 schedule needs iterations >= 3");
    }
    if (policy_hidden < 1) throw ConfigError("policy_hidden must be positive");
    if (magnitudes.rotate_degrees < 0 || magnitudes.shear < 0 || magnitudes.translate_fraction < 0 ||
        magnitudes.enhance < 0 || magnitudes.enhance > 1)
        throw ConfigError("magnitude ranges out of bounds");
}

long RunConfig::iterations_per_epoch(std::size_t train_size) const {
    return std::max<long>(1, static_cast<long>((train_size + batch_size - 1) / batch_size));
}

long RunConfig::refresh_period(std::size_t train_size) const {
    return refresh_every > 0 ? refresh_every : iterations_per_epoch(train_size);
}

long RunConfig::window_iterations(std::size_t train_size) const {
    return window > 0 ? window : 50 * iterations_per_epoch(train_size);
}

Dataset prepare_dataset(const RunConfig& cfg) {
    Dataset data = cfg.dataset == "synth_digits" ? synth_digits(cfg.synth_count, cfg.seed) : load_dataset(cfg.dataset);
    return split(std::move(data), cfg.split, cfg.seed);
}

}  // namespace metaaug
