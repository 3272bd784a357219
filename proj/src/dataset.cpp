#include "metaaug/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "metaaug/io.hpp"

namespace metaaug {

void validate(const Dataset& data) {
    if (data.num_classes < 1) throw ContractError("dataset needs at least one class");
    for (const auto& s : data.samples) {
        if (s.height != data.height || s.width != data.width || s.channels != data.channels ||
            s.pixels.size() != data.input_size())
            throw ContractError("dataset sample shape mismatch");
        if (s.label < 0 || s.label >= data.num_classes) throw ContractError("dataset label out of range");
    }
    std::set<std::size_t> seen;
    for (const auto* part : {&data.train, &data.val, &data.test})
        for (auto i : *part) {
            if (i >= data.samples.size()) throw ContractError("split index out of range");
            if (!seen.insert(i).second) throw ContractError("splits overlap");
        }
}

// ---------------------------------------------------------------------------
// Container

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
    ByteWriter w;
    w.bytes(reinterpret_cast<const std::uint8_t*>("MAUG"), 4);
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(data.samples.size()));
    w.u16(static_cast<std::uint16_t>(data.height));
    w.u16(static_cast<std::uint16_t>(data.width));
    w.u8(static_cast<std::uint8_t>(data.channels));
    w.u16(static_cast<std::uint16_t>(data.num_classes));
    for (const auto& s : data.samples) {
        for (double v : s.pixels) w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        w.u16(static_cast<std::uint16_t>(s.label));
    }
    return w.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "MAUG")
        throw ParseError("bad magic, expected MAUG", 0);
    r.skip(4);
    const auto version = r.u32();
    if (version != kDatasetVersion) throw ParseError("unsupported version " + std::to_string(version), 4);
    const auto count = r.u32();
    Dataset data;
    data.name = "maug";
    data.height = r.u16();
    data.width = r.u16();
    data.channels = r.u8();
    data.num_classes = r.u16();
    if (data.height == 0 || data.width == 0 || data.channels == 0)
        throw ParseError("zero image dimension", 12);
    if (data.num_classes == 0) throw ParseError("zero class count", 17);
    const std::size_t pixels = data.input_size();
    const std::uint64_t record = pixels + 2;
    if (r.remaining() < count * record)
        throw ParseError("truncated: header declares " + std::to_string(count) + " records", r.offset());
    data.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ImageSample s;
        s.height = data.height;
        s.width = data.width;
        s.channels = data.channels;
        s.pixels.resize(pixels);
        for (auto& v : s.pixels) v = r.u8() / 255.0;
        const auto label_offset = r.offset();
        s.label = r.u16();
        if (s.label >= data.num_classes)
            throw ParseError("label " + std::to_string(s.label) + " exceeds class count", label_offset);
        data.samples.push_back(std::move(s));
    }
    if (r.remaining() != 0) throw ParseError("trailing bytes after last record", r.offset());
    data.train.resize(data.samples.size());
    for (std::size_t i = 0; i < data.train.size(); ++i) data.train[i] = i;
    return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
    auto data = decode_dataset(read_file(path));
    data.name = path.stem().string();
    return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    write_file_atomic(path, encode_dataset(data));
}

// ---------------------------------------------------------------------------
// PGM / PPM

namespace {

struct PnmCursor {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void skip_space() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    }

    int integer() {
        skip_space();
        const std::size_t start = pos;
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 65535) throw ParseError("PNM integer too large", start);
            ++pos;
        }
        if (pos == start) throw ParseError("expected integer in PNM header", start);
        return static_cast<int>(v);
    }
};

}  // namespace

ImageSample parse_pnm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("not a PNM file", 0);
    const char kind = static_cast<char>(bytes[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') throw ParseError("unsupported PNM type", 1);
    PnmCursor cur{bytes, 2};
    ImageSample img;
    img.width = cur.integer();
    img.height = cur.integer();
    const int maxval = cur.integer();
    if (img.width == 0 || img.height == 0) throw ParseError("zero image dimension", cur.pos);
    if (maxval == 0 || maxval > 255) throw ParseError("maxval must be in 1..255", cur.pos);
    img.channels = (kind == '3' || kind == '6') ? 3 : 1;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    if (kind == '5' || kind == '6') {
        ++cur.pos;  // single whitespace after maxval
        if (bytes.size() - std::min(bytes.size(), cur.pos) < img.pixels.size())
            throw ParseError("truncated PNM raster", cur.pos);
        for (auto& v : img.pixels) v = std::min(bytes[cur.pos++], static_cast<std::uint8_t>(maxval)) / double(maxval);
    } else {
        for (auto& v : img.pixels) v = std::min(cur.integer(), maxval) / double(maxval);
    }
    return img;
}

Dataset convert_pnm_directory(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw LoadError("not a directory: " + root.string());
    std::vector<fs::path> classes;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) classes.push_back(entry.path());
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) throw LoadError("no class subdirectories under " + root.string());
    Dataset data;
    data.name = root.filename().string();
    data.num_classes = static_cast<int>(classes.size());
    for (std::size_t label = 0; label < classes.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(classes[label])) {
            const auto ext = entry.path().extension().string();
            if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm"))
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            ImageSample img;
            try {
                img = parse_pnm(read_file(file));
            } catch (const ParseError& e) {
                throw LoadError(file.string() + ": " + e.what());
            }
            img.label = static_cast<int>(label);
            if (data.samples.empty()) {
                data.height = img.height;
                data.width = img.width;
                data.channels = img.channels;
            } else if (img.height != data.height || img.width != data.width || img.channels != data.channels) {
                throw LoadError(file.string() + ": dimensions differ from the first image");
            }
            data.samples.push_back(std::move(img));
        }
    }
    data.train.resize(data.samples.size());
    for (std::size_t i = 0; i < data.train.size(); ++i) data.train[i] = i;
    return data;
}

// ---------------------------------------------------------------------------
// Synthetic glyphs

namespace {

struct Point {
    double x;
    double y;
};

double segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

double circle_distance(Point p, Point c, double r) { return std::abs(std::hypot(p.x - c.x, p.y - c.y) - r); }

constexpr double kHalfWidth = 0.85;

double ink(double distance) { return std::clamp(kHalfWidth + 0.5 - distance, 0.0, 1.0); }

ImageSample blank() {
    ImageSample img;
    img.height = kSynthSide;
    img.width = kSynthSide;
    img.channels = 1;
    img.pixels.assign(static_cast<std::size_t>(kSynthSide) * kSynthSide, 0.0);
    return img;
}

template <typename DistanceFn>
ImageSample render(DistanceFn&& distance) {
    ImageSample img = blank();
    for (int y = 0; y < kSynthSide; ++y)
        for (int x = 0; x < kSynthSide; ++x) img.at(y, x, 0) = ink(distance(Point{double(x), double(y)}));
    return img;
}

ImageSample render_six() {
    const std::array<Point, 4> stem{{{4.5, 10.0}, {4.9, 6.2}, {6.4, 3.6}, {9.6, 2.6}}};
    return render([&](Point p) {
        double d = circle_distance(p, {7.5, 10.0}, 3.0);
        for (std::size_t i = 0; i + 1 < stem.size(); ++i) d = std::min(d, segment_distance(p, stem[i], stem[i + 1]));
        return d;
    });
}

}  // namespace

ImageSample canonical_glyph(Glyph glyph) {
    ImageSample img;
    switch (glyph) {
        case Glyph::Six: img = render_six(); break;
        case Glyph::Nine: {
            const ImageSample six = render_six();
            img = six;
            std::reverse_copy(six.pixels.begin(), six.pixels.end(), img.pixels.begin());
            break;
        }
        case Glyph::Ring: img = render([](Point p) { return circle_distance(p, {7.5, 7.5}, 4.5); }); break;
        case Glyph::Plus:
            img = render([](Point p) {
                return std::min(segment_distance(p, {7.5, 2.5}, {7.5, 12.5}),
                                segment_distance(p, {2.5, 7.5}, {12.5, 7.5}));
            });
            break;
        case Glyph::HBar: img = render([](Point p) { return segment_distance(p, {2.0, 7.5}, {13.0, 7.5}); }); break;
        case Glyph::VBar: img = render([](Point p) { return segment_distance(p, {7.5, 2.0}, {7.5, 13.0}); }); break;
        default: throw DomainError("unknown glyph");
    }
    img.label = static_cast<int>(glyph);
    return img;
}

Dataset synth_digits(std::size_t n, std::uint64_t seed) {
    if (n < static_cast<std::size_t>(kSynthClasses))
        throw ConfigError("synth_digits needs at least one sample per class");
    std::array<ImageSample, kSynthClasses> glyphs;
    for (int c = 0; c < kSynthClasses; ++c) glyphs[static_cast<std::size_t>(c)] = canonical_glyph(static_cast<Glyph>(c));

    Rng rng(seed, Stream::Dataset);
    Dataset data;
    data.name = "synth_digits";
    data.num_classes = kSynthClasses;
    data.height = kSynthSide;
    data.width = kSynthSide;
    data.channels = 1;
    data.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % kSynthClasses);
        const auto& glyph = glyphs[static_cast<std::size_t>(label)];
        const int dx = static_cast<int>(rng.below(5)) - 2;
        const int dy = static_cast<int>(rng.below(5)) - 2;
        const double brightness = rng.uniform(0.6, 1.0);
        ImageSample img = blank();
        img.label = label;
        for (int y = 0; y < kSynthSide; ++y)
            for (int x = 0; x < kSynthSide; ++x) {
                const int sx = x - dx, sy = y - dy;
                const double g = (sx >= 0 && sy >= 0 && sx < kSynthSide && sy < kSynthSide) ? glyph.at(sy, sx, 0) : 0.0;
                const double v = std::clamp(brightness * g + rng.uniform(0.0, 0.1), 0.0, 1.0);
                img.at(y, x, 0) = std::round(v * 255.0) / 255.0;
            }
        data.samples.push_back(std::move(img));
    }
    data.train.resize(n);
    for (std::size_t i = 0; i < n; ++i) data.train[i] = i;
    return data;
}

Dataset split(Dataset data, const SplitFractions& f, std::uint64_t seed) {
    if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test > 1.0 + 1e-12)
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.samples.size(); ++i) by_class[data.samples[i].label].push_back(i);
    data.train.clear();
    data.val.clear();
    data.test.clear();
    Rng rng(seed, Stream::Split);
    for (int c = 0; c < data.num_classes; ++c) {
        auto& members = by_class[c];
        rng.shuffle(std::span<std::size_t>(members));
        const std::size_t m = members.size();
        const auto take = [m](double frac) { return static_cast<std::size_t>(std::floor(frac * double(m) + 0.5)); };
        const std::size_t n_train = std::min(m, take(f.train));
        const std::size_t n_val = std::min(m - n_train, take(f.val));
        const std::size_t n_test = std::min(m - n_train - n_val, take(f.test));
        auto check = [&](double frac, std::size_t got, const char* which) {
            if (frac > 0 && got == 0)
                throw ConfigError("class " + std::to_string(c) + " has no samples in the " + which + " split");
        };
        check(f.train, n_train, "train");
        check(f.val, n_val, "validation");
        check(f.test, n_test, "test");
        data.train.insert(data.train.end(), members.begin(), members.begin() + static_cast<long>(n_train));
        data.val.insert(data.val.end(), members.begin() + static_cast<long>(n_train),
                        members.begin() + static_cast<long>(n_train + n_val));
        data.test.insert(data.test.end(), members.begin() + static_cast<long>(n_train + n_val),
                         members.begin() + static_cast<long>(n_train + n_val + n_test));
    }
    std::sort(data.train.begin(), data.train.end());
    std::sort(data.val.begin(), data.val.end());
    std::sort(data.test.begin(), data.test.end());
    return data;
}

MatrixXd to_matrix(const std::vector<const ImageSample*>& samples) {
    if (samples.empty()) return {};
    MatrixXd m(static_cast<Index>(samples.size()), static_cast<Index>(samples.front()->pixels.size()));
    for (std::size_t i = 0; i < samples.size(); ++i)
        m.row(static_cast<Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(samples[i]->pixels.data(), static_cast<Index>(samples[i]->pixels.size()));
    return m;
}

MatrixXd to_matrix(const Dataset& data, const std::vector<std::size_t>& indices) {
    std::vector<const ImageSample*> ptrs;
    ptrs.reserve(indices.size());
    for (auto i : indices) ptrs.push_back(&data.samples[i]);
    return to_matrix(ptrs);
}

std::vector<int> labels_of(const Dataset& data, const std::vector<std::size_t>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(data.samples[i].label);
    return out;
}

}  // namespace metaaug
