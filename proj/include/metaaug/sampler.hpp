#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <iosfwd>

#include "metaaug/augment.hpp"
#include "metaaug/rng.hpp"

namespace metaaug {

inline constexpr int kNumPairs = kNumFunctions * kNumFunctions;

/// K x K grid indexed [first][second].
using PairGrid = std::array<std::array<double, kNumFunctions>, kNumFunctions>;

struct Observation {
    Function first;
    Function second;
    double weight;  // raw sigmoid output
};

/// Dataset-level transform distribution
///   p_jk = (1 - eps) v_jk / sum(v) + eps / K^2
/// where v_jk averages the policy outputs observed for (j, k) over a rolling
/// window of recent iterations.
class TransformSampler {
public:
    /// `capacity` is r * (augmented samples per iteration).
    TransformSampler(double epsilon, std::size_t capacity);

    void record(Function first, Function second, double weight);
    /// Recomputes v and p from the buffer. Unobserved cells take the mean of
    /// all buffered weights; an empty buffer resets p to uniform.
    void refresh();
    [[nodiscard]] TransformSpec sample(Rng& rng) const;

    /// Replaces p (e.g. a frozen distribution loaded from a checkpoint).
    void set_probabilities(const PairGrid& p);

    [[nodiscard]] const PairGrid& probabilities() const { return p_; }
    [[nodiscard]] const PairGrid& averages() const { return v_; }
    [[nodiscard]] const PairGrid& counts() const { return c_; }
    [[nodiscard]] double epsilon() const { return epsilon_; }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] std::size_t buffered() const { return buffer_.size(); }

private:
    void rebuild_cdf();

    double epsilon_;
    std::size_t capacity_;
    std::deque<Observation> buffer_;
    PairGrid v_{};
    PairGrid c_{};
    PairGrid p_{};
    std::array<double, kNumPairs> cdf_{};
};

/// p_jk = (1 - eps) v_jk / sum(v) + eps / K^2
PairGrid mix_distribution(const PairGrid& v, double epsilon);

PairGrid uniform_grid();

/// Writes p as a 14 x 14 CSV with a header row of function names; row i is the
/// first function, column j the second.
void write_distribution_csv(std::ostream& out, const PairGrid& p);

}  // namespace metaaug
