#include "metaaug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace metaaug {

namespace {

constexpr std::array<FunctionInfo, kNumFunctions> kCatalog{{
    {"AutoContrast", false, false},
    {"Equalize", false, false},
    {"Rotate", true, true},
    {"Posterize", true, false},
    {"Solarize", true, false},
    {"Color", true, true},
    {"Contrast", true, true},
    {"Brightness", true, true},
    {"Sharpness", true, true},
    {"ShearX", true, true},
    {"ShearY", true, true},
    {"TranslateX", true, true},
    {"TranslateY", true, true},
    {"Identity", false, false},
}};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

int to_bin(double v) { return static_cast<int>(std::lround(clamp01(v) * 255.0)); }

double enhance_factor(double magnitude, double sign, const MagnitudeRanges& r) {
    return 1.0 + sign * (magnitude / 10.0) * r.enhance;
}

// Bilinear sample with zero padding outside the image.
double sample_bilinear(const ImageSample& img, double sx, double sy, int c) {
    // coordinates within rounding noise of the grid sample exactly
    constexpr double kSnap = 1e-9;
    if (std::fabs(sx - std::round(sx)) < kSnap) sx = std::round(sx);
    if (std::fabs(sy - std::round(sy)) < kSnap) sy = std::round(sy);
    const double fx0 = std::floor(sx);
    const double fy0 = std::floor(sy);
    const double ax = sx - fx0;
    const double ay = sy - fy0;
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    auto pix = [&](int y, int x) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return 0.0;
        return img.at(y, x, c);
    };
    const double top = (ax == 0.0) ? pix(y0, x0) : (1.0 - ax) * pix(y0, x0) + ax * pix(y0, x0 + 1);
    if (ay == 0.0) return top;
    const double bottom = (ax == 0.0) ? pix(y0 + 1, x0) : (1.0 - ax) * pix(y0 + 1, x0) + ax * pix(y0 + 1, x0 + 1);
    return (1.0 - ay) * top + ay * bottom;
}

// out(x, y) = img(map(x, y)) where map is the inverse of the geometric transform.
template <typename Map>
ImageSample warp(const ImageSample& img, Map&& map) {
    ImageSample out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const auto [sx, sy] = map(static_cast<double>(x), static_cast<double>(y));
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = clamp01(sample_bilinear(img, sx, sy, c));
        }
    return out;
}

std::vector<double> grayscale(const ImageSample& img) {
    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    std::vector<double> gray(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double* px = &img.pixels[p * img.channels];
        gray[p] = img.channels >= 3 ? 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2] : px[0];
    }
    return gray;
}

// out = base + factor * (img - base), per pixel and channel
ImageSample blend(const ImageSample& img, const std::vector<double>& base, double factor, bool base_per_channel) {
    ImageSample out = img;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double b = base_per_channel ? base[i] : base[i / img.channels];
        out.pixels[i] = clamp01(b + factor * (img.pixels[i] - b));
    }
    return out;
}

ImageSample auto_contrast(const ImageSample& img) {
    ImageSample out = img;
    for (int c = 0; c < img.channels; ++c) {
        int lo = 255, hi = 0;
        for (std::size_t i = c; i < img.pixels.size(); i += img.channels) {
            lo = std::min(lo, to_bin(img.pixels[i]));
            hi = std::max(hi, to_bin(img.pixels[i]));
        }
        if (hi <= lo) continue;
        const double scale = 255.0 / (hi - lo);
        for (std::size_t i = c; i < img.pixels.size(); i += img.channels)
            out.pixels[i] = clamp01((img.pixels[i] * 255.0 - lo) * scale / 255.0);
    }
    return out;
}

// Histogram equalization on 256 bins, integer lookup table as in PIL.
ImageSample equalize(const ImageSample& img) {
    ImageSample out = img;
    for (int c = 0; c < img.channels; ++c) {
        std::array<long, 256> hist{};
        for (std::size_t i = c; i < img.pixels.size(); i += img.channels) ++hist[to_bin(img.pixels[i])];
        long total = 0, last_nonzero = 0, nonzero_bins = 0;
        for (long h : hist) {
            total += h;
            if (h) {
                last_nonzero = h;
                ++nonzero_bins;
            }
        }
        if (nonzero_bins <= 1) continue;
        const long step = (total - last_nonzero) / 255;
        if (step == 0) continue;
        std::array<int, 256> lut{};
        long acc = step / 2;
        for (int b = 0; b < 256; ++b) {
            lut[b] = static_cast<int>(std::min(255L, acc / step));
            acc += hist[b];
        }
        for (std::size_t i = c; i < img.pixels.size(); i += img.channels)
            out.pixels[i] = lut[to_bin(img.pixels[i])] / 255.0;
    }
    return out;
}

ImageSample sharpness(const ImageSample& img, double factor) {
    // 3x3 smoothing kernel [[1,1,1],[1,5,1],[1,1,1]] / 13; border pixels are kept
    std::vector<double> smooth = img.pixels;
    for (int y = 1; y + 1 < img.height; ++y)
        for (int x = 1; x + 1 < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 4.0 * img.at(y, x, c);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) s += img.at(y + dy, x + dx, c);
                smooth[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = s / 13.0;
            }
    return blend(img, smooth, factor, true);
}

}  // namespace

const std::array<FunctionInfo, kNumFunctions>& function_catalog() { return kCatalog; }

const FunctionInfo& function_info(Function f) { return kCatalog[static_cast<std::size_t>(f)]; }

Function function_from_index(int zero_based) {
    if (zero_based < 0 || zero_based >= kNumFunctions)
        throw DomainError("function index " + std::to_string(zero_based) + " outside catalog");
    return static_cast<Function>(zero_based);
}

Function function_from_name(std::string_view name) {
    for (int i = 0; i < kNumFunctions; ++i)
        if (kCatalog[static_cast<std::size_t>(i)].name == name) return static_cast<Function>(i);
    throw DomainError("unknown function '" + std::string(name) + "'");
}

std::uint64_t catalog_hash() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](char ch) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    };
    for (int i = 0; i < kNumFunctions; ++i) {
        if (i) mix(',');
        for (char ch : kCatalog[static_cast<std::size_t>(i)].name) mix(ch);
    }
    return h;
}

void validate(const TransformSpec& spec) {
    const int j = static_cast<int>(spec.first);
    const int k = static_cast<int>(spec.second);
    if (j < 0 || j >= kNumFunctions || k < 0 || k >= kNumFunctions)
        throw DomainError("transform function index outside catalog");
    if (!(spec.m1 >= 0.0 && spec.m1 <= 10.0 && spec.m2 >= 0.0 && spec.m2 <= 10.0))
        throw DomainError("transform magnitude outside [0, 10]");
}

ImageSample apply_function_signed(const ImageSample& img, Function f, double magnitude, double sign,
                                  const MagnitudeRanges& ranges) {
    const int idx = static_cast<int>(f);
    if (idx < 0 || idx >= kNumFunctions) throw DomainError("function index outside catalog");
    if (!(magnitude >= 0.0 && magnitude <= 10.0)) throw DomainError("magnitude outside [0, 10]");
    const double level = magnitude / 10.0;
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;

    switch (f) {
        case Function::Identity: return img;
        case Function::AutoContrast: return auto_contrast(img);
        case Function::Equalize: return equalize(img);
        case Function::Rotate: {
            const double angle = sign * level * ranges.rotate_degrees * M_PI / 180.0;
            const double cs = std::cos(angle);
            const double sn = std::sin(angle);
            return warp(img, [&](double x, double y) {
                const double dx = x - cx;
                const double dy = y - cy;
                return std::pair{cx + cs * dx + sn * dy, cy - sn * dx + cs * dy};
            });
        }
        case Function::ShearX: {
            const double s = sign * level * ranges.shear;
            return warp(img, [&](double x, double y) { return std::pair{x + s * (y - cy), y}; });
        }
        case Function::ShearY: {
            const double s = sign * level * ranges.shear;
            return warp(img, [&](double x, double y) { return std::pair{x, y + s * (x - cx)}; });
        }
        case Function::TranslateX: {
            const double offset = sign * level * ranges.translate_fraction * img.width;
            return warp(img, [&](double x, double y) { return std::pair{x - offset, y}; });
        }
        case Function::TranslateY: {
            const double offset = sign * level * ranges.translate_fraction * img.height;
            return warp(img, [&](double x, double y) { return std::pair{x, y - offset}; });
        }
        case Function::Posterize: {
            const int bits = std::max(4, 8 - static_cast<int>(std::lround(magnitude * 4.0 / 10.0)));
            const int mask = ~((1 << (8 - bits)) - 1) & 0xFF;
            ImageSample out = img;
            for (auto& v : out.pixels) v = (to_bin(v) & mask) / 255.0;
            return out;
        }
        case Function::Solarize: {
            const double threshold = 1.0 - level;
            ImageSample out = img;
            for (auto& v : out.pixels)
                if (v > threshold) v = 1.0 - v;
            return out;
        }
        case Function::Color:
            return blend(img, grayscale(img), enhance_factor(magnitude, sign, ranges), false);
        case Function::Contrast: {
            const auto gray = grayscale(img);
            double mean = 0.0;
            for (double g : gray) mean += g;
            mean /= static_cast<double>(gray.size());
            return blend(img, std::vector<double>(gray.size(), mean), enhance_factor(magnitude, sign, ranges), false);
        }
        case Function::Brightness:
            return blend(img, std::vector<double>(img.pixels.size(), 0.0), enhance_factor(magnitude, sign, ranges),
                         true);
        case Function::Sharpness: return sharpness(img, enhance_factor(magnitude, sign, ranges));
    }
    throw DomainError("unhandled function");
}

ImageSample apply_function(const ImageSample& img, Function f, double magnitude, Rng& rng,
                           const MagnitudeRanges& ranges) {
    const auto idx = static_cast<int>(f);
    if (idx < 0 || idx >= kNumFunctions) throw DomainError("function index outside catalog");
    const double sign = function_info(f).signed_magnitude ? rng.sign() : 1.0;
    return apply_function_signed(img, f, magnitude, sign, ranges);
}

ImageSample apply_transform(const ImageSample& img, const TransformSpec& spec, Rng& rng,
                            const MagnitudeRanges& ranges) {
    validate(spec);
    return apply_function(apply_function(img, spec.first, spec.m1, rng, ranges), spec.second, spec.m2, rng, ranges);
}

VectorXd embed(const TransformSpec& spec) {
    validate(spec);
    VectorXd e = VectorXd::Zero(2 * kNumFunctions);
    const auto j = static_cast<Index>(spec.first);
    const auto k = static_cast<Index>(spec.second);
    e(2 * j) = function_info(spec.first).uses_magnitude ? spec.m1 + 1.0 : 11.0;
    e(2 * k + 1) = function_info(spec.second).uses_magnitude ? spec.m2 + 1.0 : 11.0;
    return e;
}

}  // namespace metaaug
