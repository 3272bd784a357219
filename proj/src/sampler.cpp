#include "metaaug/sampler.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

namespace metaaug {

PairGrid uniform_grid() {
    PairGrid g{};
    for (auto& row : g) row.fill(1.0 / kNumPairs);
    return g;
}

PairGrid mix_distribution(const PairGrid& v, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon outside [0, 1]");
    double total = 0.0;
    for (const auto& row : v)
        for (double x : row) total += x;
    if (!(total > 0.0)) return uniform_grid();
    PairGrid p{};
    for (int j = 0; j < kNumFunctions; ++j)
        for (int k = 0; k < kNumFunctions; ++k)
            p[j][k] = (1.0 - epsilon) * v[j][k] / total + epsilon / kNumPairs;
    return p;
}

TransformSampler::TransformSampler(double epsilon, std::size_t capacity) : epsilon_(epsilon), capacity_(capacity) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon outside [0, 1]");
    if (capacity == 0) throw DomainError("sampler buffer capacity must be positive");
    p_ = uniform_grid();
    rebuild_cdf();
}

void TransformSampler::record(Function first, Function second, double weight) {
    if (static_cast<int>(first) < 0 || static_cast<int>(first) >= kNumFunctions || static_cast<int>(second) < 0 ||
        static_cast<int>(second) >= kNumFunctions)
        throw DomainError("record: function index outside catalog");
    buffer_.push_back({first, second, weight});
    while (buffer_.size() > capacity_) buffer_.pop_front();
}

void TransformSampler::refresh() {
    PairGrid sum{};
    c_ = PairGrid{};
    double total = 0.0;
    for (const auto& obs : buffer_) {
        const auto j = static_cast<std::size_t>(obs.first);
        const auto k = static_cast<std::size_t>(obs.second);
        sum[j][k] += obs.weight;
        c_[j][k] += 1.0;
        total += obs.weight;
    }
    if (buffer_.empty()) {
        v_ = PairGrid{};
        p_ = uniform_grid();
        rebuild_cdf();
        return;
    }
    const double global_mean = total / static_cast<double>(buffer_.size());
    for (int j = 0; j < kNumFunctions; ++j)
        for (int k = 0; k < kNumFunctions; ++k) v_[j][k] = c_[j][k] > 0 ? sum[j][k] / c_[j][k] : global_mean;
    p_ = mix_distribution(v_, epsilon_);
    rebuild_cdf();
}

void TransformSampler::set_probabilities(const PairGrid& p) {
    double total = 0.0;
    for (const auto& row : p)
        for (double x : row) {
            if (!(x >= 0.0)) throw DomainError("probabilities must be non-negative");
            total += x;
        }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("probabilities must sum to 1");
    p_ = p;
    rebuild_cdf();
}

void TransformSampler::rebuild_cdf() {
    double acc = 0.0;
    for (int j = 0; j < kNumFunctions; ++j)
        for (int k = 0; k < kNumFunctions; ++k) {
            acc += p_[j][k];
            cdf_[static_cast<std::size_t>(j * kNumFunctions + k)] = acc;
        }
}

TransformSpec TransformSampler::sample(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    // first cell whose cumulative mass exceeds u; zero-mass cells are never chosen
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) it = std::prev(cdf_.end());
    const auto cell = static_cast<int>(it - cdf_.begin());
    TransformSpec spec;
    spec.first = static_cast<Function>(cell / kNumFunctions);
    spec.second = static_cast<Function>(cell % kNumFunctions);
    spec.m1 = rng.uniform(0.0, 10.0);
    spec.m2 = rng.uniform(0.0, 10.0);
    return spec;
}

void write_distribution_csv(std::ostream& out, const PairGrid& p) {
    const auto& catalog = function_catalog();
    out << "first\\second";
    for (const auto& info : catalog) out << ',' << info.name;
    out << '\n';
    out << std::setprecision(17);
    for (int j = 0; j < kNumFunctions; ++j) {
        out << catalog[static_cast<std::size_t>(j)].name;
        for (int k = 0; k < kNumFunctions; ++k) out << ',' << p[j][k];
        out << '\n';
    }
}

}  // namespace metaaug
