#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "metaaug/rng.hpp"

using namespace metaaug;

TEST_CASE("philox4x32-10 known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams replay and stay independent") {
    Rng a(42, Stream::Augment), b(42, Stream::Augment), c(42, Stream::Sampler), d(43, Stream::Augment);
    std::vector<std::uint64_t> va, vb, vc, vd;
    for (int i = 0; i < 64; ++i) {
        va.push_back(a.next_u64());
        vb.push_back(b.next_u64());
        vc.push_back(c.next_u64());
        vd.push_back(d.next_u64());
    }
    CHECK(va == vb);
    CHECK(va != vc);
    CHECK(va != vd);

    const Rng base(7, Stream::Augment);
    Rng s1 = base.substream(3, 4), s2 = base.substream(3, 4), s3 = base.substream(4, 3);
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(base.substream(3, 4).next_u64() != s3.next_u64());
}

TEST_CASE("uniform draws lie in [0, 1) with the right mean") {
    Rng r(1, Stream::Oracle);
    double sum = 0;
    constexpr int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    // standard error of the mean is sqrt(1/12/n) ~ 6.5e-4
    CHECK(std::fabs(sum / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
}

TEST_CASE("below is unbiased and in range") {
    Rng r(2, Stream::Oracle);
    std::array<int, 7> hits{};
    constexpr int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = r.below(7);
        REQUIRE(v < 7);
        ++hits[v];
    }
    const double p = 1.0 / 7, sigma = std::sqrt(n * p * (1 - p));
    for (int h : hits) CHECK(std::fabs(h - n * p) < 4.5 * sigma);
}

TEST_CASE("shuffle is a permutation and signs are balanced") {
    Rng r(3, Stream::Oracle);
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    r.shuffle(std::span<int>(w));
    CHECK(w != v);
    std::sort(w.begin(), w.end());
    CHECK(w == v);

    int plus = 0;
    for (int i = 0; i < 10000; ++i) plus += r.sign() > 0;
    CHECK(std::abs(plus - 5000) < 4 * 50);
}
