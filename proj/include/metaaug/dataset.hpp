#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metaaug/augment.hpp"

namespace metaaug {

struct Dataset {
    std::string name;
    int num_classes = 0;
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<ImageSample> samples;
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
    [[nodiscard]] std::size_t input_size() const { return static_cast<std::size_t>(height) * width * channels; }
};

/// Checks shapes, labels and split disjointness.
void validate(const Dataset& data);

// --- container format -------------------------------------------------------
// Little-endian: "MAUG", u32 version (1), u32 count, u16 H, u16 W, u8 C,
// u16 classes, then count records of (u8 pixels[H*W*C], u16 label).

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

/// Parses a binary or ASCII PGM/PPM image (maxval <= 255).
ImageSample parse_pnm(const std::vector<std::uint8_t>& bytes);
/// One subdirectory per class (sorted by name, label = position), each
/// holding .pgm/.ppm files of identical dimensions.
Dataset convert_pnm_directory(const std::filesystem::path& root);

// --- synthetic glyphs ---------------------------------------------------------

enum class Glyph : int { Six = 0, Nine, Ring, Plus, HBar, VBar };
inline constexpr int kSynthClasses = 6;
inline constexpr int kSynthSide = 16;

/// Classes whose identity flips under 180 degree rotation.
inline constexpr std::array<int, 2> kChiralityClasses{static_cast<int>(Glyph::Six), static_cast<int>(Glyph::Nine)};

/// Noise-free centered glyph; Nine is the pixelwise 180 degree rotation of Six.
ImageSample canonical_glyph(Glyph glyph);

/// n balanced 16x16 grayscale samples: each glyph with a random integer shift
/// (up to 2 px), random brightness and background noise.
Dataset synth_digits(std::size_t n, std::uint64_t seed);

struct SplitFractions {
    double train = 1.0;
    double val = 0.0;
    double test = 0.0;
};

/// Stratified split, deterministic under `seed`.
Dataset split(Dataset data, const SplitFractions& fractions, std::uint64_t seed);

/// Rows of flattened pixels for the given sample indices.
MatrixXd to_matrix(const std::vector<const ImageSample*>& samples);
MatrixXd to_matrix(const Dataset& data, const std::vector<std::size_t>& indices);
std::vector<int> labels_of(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace metaaug
