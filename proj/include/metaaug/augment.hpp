#pragma once

// The K = 14 image processing functions and their pairwise composition.
// Catalog order and indices are part of the on-disk formats; never reorder.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "metaaug/rng.hpp"
#include "metaaug/types.hpp"

namespace metaaug {

struct ImageSample {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> pixels;  // row-major H x W x C, values in [0, 1]
    int label = 0;

    [[nodiscard]] std::size_t size() const { return pixels.size(); }
    [[nodiscard]] double& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    [[nodiscard]] double at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

enum class Function : int {
    AutoContrast = 0,
    Equalize,
    Rotate,
    Posterize,
    Solarize,
    Color,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Identity,
};

inline constexpr int kNumFunctions = 14;

struct FunctionInfo {
    std::string_view name;
    bool uses_magnitude;
    bool signed_magnitude;
};

const std::array<FunctionInfo, kNumFunctions>& function_catalog();
const FunctionInfo& function_info(Function f);
Function function_from_index(int zero_based);
Function function_from_name(std::string_view name);
/// FNV-1a over the comma-joined catalog names.
std::uint64_t catalog_hash();

/// Ranges of the linear magnitude maps. Magnitude m in [0, 10] maps to
/// (m / 10) * range.
struct MagnitudeRanges {
    double rotate_degrees = 30.0;
    double shear = 0.3;
    double translate_fraction = 0.45;
    double enhance = 0.9;
};

/// Transform T_{j,k}^{m1,m2}: `first` at magnitude m1, then `second` at m2.
struct TransformSpec {
    Function first = Function::Identity;
    Function second = Function::Identity;
    double m1 = 0.0;
    double m2 = 0.0;
};

void validate(const TransformSpec& spec);

/// Applies one function with an explicit sign (+1 / -1) for signed geometric
/// and enhancement ops; the sign is ignored by the rest.
ImageSample apply_function_signed(const ImageSample& img, Function f, double magnitude, double sign,
                                  const MagnitudeRanges& ranges = {});
/// As above, drawing the sign from `rng` only for signed ops.
ImageSample apply_function(const ImageSample& img, Function f, double magnitude, Rng& rng,
                           const MagnitudeRanges& ranges = {});
ImageSample apply_transform(const ImageSample& img, const TransformSpec& spec, Rng& rng,
                            const MagnitudeRanges& ranges = {});

/// 28-dim embedding: slot 2j-1 holds m1 + 1 and slot 2k holds m2 + 1
/// (1-based, j and k are 1-based function indices); magnitude-free
/// functions put 11 in their slot.
VectorXd embed(const TransformSpec& spec);

}  // namespace metaaug
