#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace metaaug {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Named random streams. Every consumer of randomness owns one, so that the
/// draws of one subsystem never shift the draws of another.
enum class Stream : std::uint64_t {
    TaskInit = 1,
    PolicyInit = 2,
    TrainBatches = 3,
    ValBatches = 4,
    Sampler = 5,
    Augment = 6,
    Dataset = 7,
    Split = 8,
    Oracle = 9,
    Instance = 10,
};

/// Counter-based generator: output block n of stream (seed, id) is
/// philox(counter = {n_lo, n_hi, id_lo, id_hi}, key = seed). Streams are
/// independent and any position can be recomputed without replaying others.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}
    Rng(std::uint64_t seed, Stream stream) : Rng(seed, static_cast<std::uint64_t>(stream)) {}

    /// Deterministic child stream, e.g. one per (iteration, sample).
    [[nodiscard]] Rng substream(std::uint64_t a, std::uint64_t b = 0) const;

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// +1 or -1 with equal probability.
    double sign() { return (next_u32() & 1U) ? 1.0 : -1.0; }
    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::uint64_t stream_id() const { return stream_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
};

}  // namespace metaaug
