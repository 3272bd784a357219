#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "metaaug/checkpoint.hpp"
#include "metaaug/config.hpp"
#include "metaaug/dataset.hpp"
#include "metaaug/io.hpp"

using namespace metaaug;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(std::size_t n) {
    Dataset d;
    d.name = "tiny";
    d.num_classes = 3;
    d.height = 2;
    d.width = 3;
    d.channels = 1;
    for (std::size_t i = 0; i < n; ++i) {
        ImageSample s;
        s.height = 2;
        s.width = 3;
        s.channels = 1;
        for (int p = 0; p < 6; ++p) s.pixels.push_back(static_cast<double>((i * 7 + p * 31) % 256) / 255.0);
        s.label = static_cast<int>(i % 3);
        d.samples.push_back(s);
    }
    return d;
}

std::uint64_t parse_offset(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_dataset(bytes);
    } catch (const ParseError& e) {
        return e.byte_offset;
    }
    FAIL("expected ParseError");
    return 0;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("metaaug_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("dataset container round trip") {
    const Dataset d = tiny_dataset(5);
    const auto bytes = encode_dataset(d);
    CHECK(bytes.size() == 19 + 5 * (6 + 2));
    const Dataset back = decode_dataset(bytes);
    CHECK(back.num_classes == 3);
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back.samples[i].label == d.samples[i].label);
        CHECK(back.samples[i].pixels == d.samples[i].pixels);
    }
    CHECK(encode_dataset(back) == bytes);

    const auto one = decode_dataset(encode_dataset(tiny_dataset(1)));
    CHECK(one.size() == 1);
}

TEST_CASE("dataset container corruption") {
    const auto good = encode_dataset(tiny_dataset(2));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(parse_offset(bad_magic) == 0);

    auto bad_version = good;
    bad_version[4] = 2;
    CHECK(parse_offset(bad_version) == 4);

    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_dataset(truncated), ParseError);
    CHECK_THROWS_AS(decode_dataset(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)), ParseError);

    auto bad_label = good;
    const std::size_t label_at = 19 + 6;  // first record's label
    bad_label[label_at] = 9;
    CHECK(parse_offset(bad_label) == label_at);

    auto trailing = good;
    trailing.push_back(0);
    CHECK(parse_offset(trailing) == good.size());
}

TEST_CASE("dataset file save and load") {
    const fs::path dir = scratch_dir("dataset");
    const Dataset d = tiny_dataset(4);
    save_dataset(d, dir / "d.maug");
    CHECK(encode_dataset(load_dataset(dir / "d.maug")) == encode_dataset(d));
    CHECK_THROWS(load_dataset(dir / "missing.maug"));
    fs::remove_all(dir);
}

TEST_CASE("synthetic glyphs") {
    const auto six = canonical_glyph(Glyph::Six);
    const auto nine = canonical_glyph(Glyph::Nine);
    MagnitudeRanges ranges;
    ranges.rotate_degrees = 180;
    const auto turned = apply_function_signed(six, Function::Rotate, 10.0, 1.0, ranges);
    REQUIRE(turned.size() == nine.size());
    double worst = 0;
    for (std::size_t i = 0; i < nine.size(); ++i) worst = std::max(worst, std::fabs(turned.pixels[i] - nine.pixels[i]));
    CHECK(worst <= 1e-6);

    const auto a = synth_digits(60, 5), b = synth_digits(60, 5), c = synth_digits(60, 6);
    CHECK(encode_dataset(a) == encode_dataset(b));
    CHECK(encode_dataset(a) != encode_dataset(c));
    std::array<int, kSynthClasses> per_class{};
    for (const auto& s : a.samples) ++per_class[static_cast<std::size_t>(s.label)];
    for (int n : per_class) CHECK(n == 10);

    const auto minimal = synth_digits(kSynthClasses, 1);
    std::array<int, kSynthClasses> seen{};
    for (const auto& s : minimal.samples) ++seen[static_cast<std::size_t>(s.label)];
    for (int n : seen) CHECK(n == 1);
    CHECK_THROWS_AS(synth_digits(kSynthClasses - 1, 1), ConfigError);
}

TEST_CASE("stratified split") {
    const auto data = synth_digits(120, 2);
    const auto all_train = split(data, {1, 0, 0}, 3);
    CHECK(all_train.train.size() == 120);
    CHECK(all_train.val.empty());
    CHECK(all_train.test.empty());

    const auto halves = split(data, {0.5, 0.5, 0}, 3);
    CHECK(halves.train.size() == 60);
    CHECK(halves.val.size() == 60);
    std::array<int, kSynthClasses> per_class{};
    for (auto i : halves.train) ++per_class[static_cast<std::size_t>(halves.samples[i].label)];
    for (int n : per_class) CHECK(n == 10);
    validate(halves);

    const auto again = split(data, {0.6, 0.2, 0.2}, 9), other = split(data, {0.6, 0.2, 0.2}, 9);
    CHECK(again.train == other.train);
    CHECK(again.test == other.test);

    CHECK_THROWS_AS(split(synth_digits(6, 1), {0.5, 0.2, 0.2}, 0), ConfigError);
    CHECK_THROWS_AS(split(data, {0.8, 0.3, 0}, 0), ConfigError);
}

TEST_CASE("PNM parsing and directory conversion") {
    const std::string ascii = "P2\n# comment\n2 1\n255\n0 255\n";
    const auto g = parse_pnm(std::vector<std::uint8_t>(ascii.begin(), ascii.end()));
    CHECK(g.width == 2);
    CHECK(g.height == 1);
    CHECK(g.channels == 1);
    CHECK(g.pixels == std::vector<double>{0.0, 1.0});

    std::string binary = "P6 1 1 15\n";
    binary += static_cast<char>(0);
    binary += static_cast<char>(15);
    binary += static_cast<char>(5);
    const auto rgb = parse_pnm(std::vector<std::uint8_t>(binary.begin(), binary.end()));
    CHECK(rgb.channels == 3);
    CHECK(rgb.pixels[1] == 1.0);
    CHECK(rgb.pixels[2] == doctest::Approx(1.0 / 3));

    const std::string short_raster = "P5 2 2 255\nab";
    CHECK_THROWS_AS(parse_pnm(std::vector<std::uint8_t>(short_raster.begin(), short_raster.end())), ParseError);
    const std::string not_pnm = "GIF89a";
    CHECK_THROWS_AS(parse_pnm(std::vector<std::uint8_t>(not_pnm.begin(), not_pnm.end())), ParseError);

    const fs::path root = scratch_dir("pnm");
    fs::create_directories(root / "b_second");
    fs::create_directories(root / "a_first");
    std::ofstream(root / "a_first" / "x.pgm") << "P2 2 1 255 10 20\n";
    std::ofstream(root / "a_first" / "y.pgm") << "P2 2 1 255 30 40\n";
    std::ofstream(root / "b_second" / "z.pgm") << "P2 2 1 255 50 60\n";
    const auto packed = convert_pnm_directory(root);
    CHECK(packed.num_classes == 2);
    REQUIRE(packed.size() == 3);
    CHECK(packed.samples[0].label == 0);
    CHECK(packed.samples[2].label == 1);
    CHECK(packed.samples[2].pixels[0] == doctest::Approx(50.0 / 255));

    std::ofstream(root / "b_second" / "w.pgm") << "P2 3 1 255 1 2 3\n";
    CHECK_THROWS_AS(convert_pnm_directory(root), LoadError);
    fs::remove_all(root);
}

TEST_CASE("config parsing") {
    const auto kv = parse_key_values("# header\na = 1\n\n  b=two  # trailing\n");
    CHECK(kv.at("a") == "1");
    CHECK(kv.at("b") == "two");
    CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("just words\n"), ConfigError);

    const auto cfg = RunConfig::from_text("seed = 7\ntask_hidden = 32,16\nlr_schedule = constant\nepsilon = 0.25\n"
                                          "learn_alpha = false\nfeature_mode = own\n");
    CHECK(cfg.seed == 7);
    CHECK(cfg.task_hidden == std::vector<Index>{32, 16});
    CHECK(cfg.schedule.mode == ScheduleConfig::Mode::Constant);
    CHECK(cfg.epsilon == 0.25);
    CHECK_FALSE(cfg.learn_alpha);
    CHECK(cfg.feature_mode == FeatureMode::Own);

    CHECK_THROWS_AS(RunConfig::from_text("no_such_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("lr = fast\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("iterations = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("learn_alpha = maybe\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("epsilon = 2\n").validate(), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("lr = 0\n").validate(), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/file.cfg"), ConfigError);

    RunConfig custom;
    custom.seed = 42;
    custom.lr = 0.1 + 0.2;
    custom.task_hidden = {7};
    custom.magnitudes.rotate_degrees = 180;
    const auto text = custom.to_text();
    CHECK(RunConfig::from_text(text).to_text() == text);
}

TEST_CASE("checkpoint round trip and rejection") {
    Rng rng(11, Stream::TaskInit);
    Checkpoint ck;
    ck.task = make_task_network<double>(12, {8}, 3, rng);
    ck.policy = make_policy<double>(8, 16, rng);
    ck.log_alpha = std::log(0.07);
    ck.distribution[4][2] += 0.5 / 196;
    ck.distribution[0][0] -= 0.5 / 196;
    const auto bytes = encode_checkpoint(ck);
    const auto back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(back.log_alpha == ck.log_alpha);
    CHECK(back.distribution == ck.distribution);
    CHECK(flatten(back.task.params) == flatten(ck.task.params));
    CHECK(flatten(back.policy.params) == flatten(ck.policy.params));

    auto bad_magic = bytes;
    bad_magic[1] = 'Z';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), LoadError);
    CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 8)), LoadError);
    auto trailing = bytes;
    trailing.push_back(1);
    CHECK_THROWS_AS(decode_checkpoint(trailing), LoadError);

    // a checkpoint written against another catalog
    std::string text(bytes.begin(), bytes.end());
    const auto at = text.find("\"catalog_hash\"");
    REQUIRE(at != std::string::npos);
    const auto digit = text.find_first_of("0123456789abcdef", text.find(':', at) + 2);
    text[digit] = text[digit] == '0' ? '1' : '0';
    try {
        decode_checkpoint(std::vector<std::uint8_t>(text.begin(), text.end()));
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("catalog") != std::string::npos);
    }

    const fs::path dir = scratch_dir("ckpt");
    save_checkpoint(ck, dir / "c.mack");
    CHECK(encode_checkpoint(load_checkpoint(dir / "c.mack")) == bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "nope.mack"), LoadError);
    fs::remove_all(dir);
}
