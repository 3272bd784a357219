#include "metaaug/checkpoint.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "metaaug/io.hpp"

namespace metaaug {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'C', 'K'};
constexpr int kVersion = 1;

std::string hex64(std::uint64_t v) {
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << v;
    return o.str();
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: break;
    }
    return "identity";
}

Activation activation_from(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw LoadError("unknown activation '" + s + "'");
}

nlohmann::json layer_shapes(const Params<double>& p) {
    auto arr = nlohmann::json::array();
    for (const auto& l : p) arr.push_back({{"in", l.in_size()}, {"out", l.out_size()}});
    return arr;
}

Params<double> shaped(const nlohmann::json& layers) {
    Params<double> p;
    for (const auto& l : layers) {
        const auto in = l.at("in").get<Index>();
        const auto out = l.at("out").get<Index>();
        if (in < 1 || out < 1) throw LoadError("checkpoint layer with non-positive size");
        p.push_back({Matrix<double>::Zero(out, in), Vector<double>::Zero(out)});
    }
    return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = "metaaug-checkpoint";
    header["version"] = kVersion;
    header["catalog_hash"] = hex64(catalog_hash());
    header["scalar"] = "f64le";
    header["policy"] = {{"feature_dim", ckpt.policy.feature_size()},
                        {"embedding_dim", ckpt.policy.embedding_size()},
                        {"hidden", ckpt.policy.hidden_size()},
                        {"layers", layer_shapes(ckpt.policy.params)}};
    auto acts = nlohmann::json::array();
    for (auto a : ckpt.task.activations) acts.push_back(activation_name(a));
    header["task"] = {{"layers", layer_shapes(ckpt.task.params)},
                      {"activations", acts},
                      {"feature_index", ckpt.task.feature_index}};
    header["tensors"] = {"policy", "log_alpha", "task", "distribution"};
    const std::string text = header.dump();

    ByteWriter w;
    w.bytes(reinterpret_cast<const std::uint8_t*>(kMagic), 4);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.str(text);
    auto put = [&](const Params<double>& p) {
        const auto flat = flatten(p);
        for (Index i = 0; i < flat.size(); ++i) w.f64(flat(i));
    };
    put(ckpt.policy.params);
    w.f64(ckpt.log_alpha);
    put(ckpt.task.params);
    for (const auto& row : ckpt.distribution)
        for (double x : row) w.f64(x);
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    try {
        if (r.str(4) != std::string(kMagic, 4)) throw LoadError("not a checkpoint (bad magic)");
        const auto len = r.u32();
        const auto header = nlohmann::json::parse(r.str(len));
        if (header.at("format") != "metaaug-checkpoint" || header.at("version") != kVersion)
            throw LoadError("unsupported checkpoint format or version");
        if (header.at("catalog_hash") != hex64(catalog_hash()))
            throw LoadError("catalog hash mismatch: checkpoint was written for a different function catalog");

        Checkpoint ckpt;
        ckpt.policy.params = shaped(header.at("policy").at("layers"));
        if (ckpt.policy.params.size() != 3) throw LoadError("policy must have three layers");
        ckpt.task.params = shaped(header.at("task").at("layers"));
        for (const auto& a : header.at("task").at("activations")) ckpt.task.activations.push_back(activation_from(a));
        ckpt.task.feature_index = header.at("task").at("feature_index").get<Index>();

        auto get = [&](Params<double>& p) {
            Vector<double> flat(num_parameters(p));
            for (Index i = 0; i < flat.size(); ++i) flat(i) = r.f64();
            unflatten(flat, p);
        };
        get(ckpt.policy.params);
        ckpt.log_alpha = r.f64();
        get(ckpt.task.params);
        for (auto& row : ckpt.distribution)
            for (double& x : row) x = r.f64();
        if (r.remaining() != 0) throw LoadError("trailing bytes in checkpoint");
        try {
            validate(ckpt.task);
        } catch (const ContractError& e) {
            throw LoadError(std::string("invalid task network: ") + e.what());
        }
        return ckpt;
    } catch (const ParseError& e) {
        throw LoadError(std::string("truncated checkpoint: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("bad checkpoint header: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace metaaug
