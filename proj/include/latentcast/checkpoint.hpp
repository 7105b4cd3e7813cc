#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/autoencoder.hpp"
#include "latentcast/backbone.hpp"
#include "latentcast/errors.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

// Checkpoint container: "LCP1" magic, u32 format version, length-prefixed
// JSON header, then named tensors as u32 name length + name + u32 rank +
// u64 extents + raw little-endian f64 data. AE and backbone checkpoints
// share the container and differ in the header's "section" tag.

namespace ckpt {

constexpr char kMagic[4] = {'L', 'C', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw DataError("checkpoint '" + path + "': truncated file");
    return v;
}

}  // namespace ckpt

inline void save_checkpoint(const std::string& path, const nlohmann::json& header,
                            const std::vector<std::pair<std::string, const TensorF*>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot write '" + path + "'");
    os.write(ckpt::kMagic, 4);
    ckpt::write_pod(os, ckpt::kVersion);
    const std::string hdr = header.dump();
    ckpt::write_pod(os, static_cast<std::uint64_t>(hdr.size()));
    os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    ckpt::write_pod(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        ckpt::write_pod(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        ckpt::write_pod(os, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d : t->shape) ckpt::write_pod(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint: write to '" + path + "' failed");
}

struct LoadedCheckpoint {
    nlohmann::json header;
    std::map<std::string, TensorF> tensors;

    const TensorF& tensor(const std::string& name, const std::string& path) const {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw DataError("checkpoint '" + path + "': missing tensor '" + name + "'");
        return it->second;
    }
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw DataError("checkpoint '" + path + "': bad magic (got '" +
                        std::string(magic, magic + 4) + "', expected 'LCP1')");
    const auto version = ckpt::read_pod<std::uint32_t>(is, path);
    if (version != ckpt::kVersion)
        throw DataError("checkpoint '" + path + "': unsupported version " +
                        std::to_string(version));
    const auto hdr_len = ckpt::read_pod<std::uint64_t>(is, path);
    std::string hdr(hdr_len, '\0');
    if (!is.read(hdr.data(), static_cast<std::streamsize>(hdr_len)))
        throw DataError("checkpoint '" + path + "': truncated header");
    LoadedCheckpoint out;
    try {
        out.header = nlohmann::json::parse(hdr);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path + "': unparsable header: " + e.what());
    }
    const auto count = ckpt::read_pod<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = ckpt::read_pod<std::uint32_t>(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw DataError("checkpoint '" + path + "': truncated tensor name");
        const auto rank = ckpt::read_pod<std::uint32_t>(is, path);
        Shape shape(rank);
        for (auto& d : shape)
            d = static_cast<std::size_t>(ckpt::read_pod<std::uint64_t>(is, path));
        TensorF t(shape);
        if (!is.read(reinterpret_cast<char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(double))))
            throw DataError("checkpoint '" + path + "': truncated tensor '" + name + "'");
        out.tensors.emplace(std::move(name), std::move(t));
    }
    return out;
}

// ---- AE checkpoints ----

struct AeCheckpointMeta {
    std::uint64_t seed = 0;
    double final_rec_loss = 0.0;
};

inline void save_autoencoder(const std::string& path, const AutoEncoder& ae,
                             const AeCheckpointMeta& meta) {
    nlohmann::json header = {
        {"version", ckpt::kVersion},
        {"section", "autoencoder"},
        {"in_dim", ae.in_dim},
        {"latent_dim", ae.latent_dim},
        {"layer_spec", {"linear_gelu", "linear", "linear"}},
        {"dropout", ae.dropout},
        {"seed", meta.seed},
        {"final_rec_loss", meta.final_rec_loss},
    };
    save_checkpoint(path, header,
                    {{"enc1.weight", &ae.enc1.weight},
                     {"enc1.bias", &ae.enc1.bias},
                     {"enc2.weight", &ae.enc2.weight},
                     {"enc2.bias", &ae.enc2.bias},
                     {"dec.weight", &ae.dec.weight},
                     {"dec.bias", &ae.dec.bias}});
}

inline AutoEncoder load_autoencoder(const std::string& path,
                                    AeCheckpointMeta* meta_out = nullptr) {
    LoadedCheckpoint c = load_checkpoint(path);
    if (c.header.value("section", "") != "autoencoder")
        throw DataError("checkpoint '" + path + "': section '" +
                        c.header.value("section", "?") + "' is not an autoencoder");
    AutoEncoder ae(c.header.at("in_dim").get<std::size_t>(),
                   c.header.at("latent_dim").get<std::size_t>());
    ae.dropout = c.header.value("dropout", 0.1);
    ae.enc1.weight = c.tensor("enc1.weight", path);
    ae.enc1.bias = c.tensor("enc1.bias", path);
    ae.enc2.weight = c.tensor("enc2.weight", path);
    ae.enc2.bias = c.tensor("enc2.bias", path);
    ae.dec.weight = c.tensor("dec.weight", path);
    ae.dec.bias = c.tensor("dec.bias", path);
    if (meta_out) {
        meta_out->seed = c.header.value("seed", 0ULL);
        meta_out->final_rec_loss = c.header.value("final_rec_loss", 0.0);
    }
    return ae;
}

// ---- backbone checkpoints ----

inline void save_backbone(const std::string& path, Backbone& backbone, std::uint64_t seed) {
    const BackboneSpec& s = backbone.spec();
    nlohmann::json header = {
        {"version", ckpt::kVersion},
        {"section", "backbone"},
        {"kind", backbone_kind_name(s.kind)},
        {"lookback", s.lookback},
        {"horizon", s.horizon},
        {"channels", s.channels},
        {"kernel", s.kernel},
        {"hidden", s.hidden},
        {"dropout", s.dropout},
        {"seed", seed},
    };
    std::vector<ParamRef> params;
    backbone.collect_params(params);
    std::vector<std::pair<std::string, const TensorF*>> tensors;
    tensors.reserve(params.size());
    for (const auto& p : params) tensors.emplace_back(p.name, p.value);
    save_checkpoint(path, header, tensors);
}

inline std::unique_ptr<Backbone> load_backbone(const std::string& path,
                                               std::uint64_t* seed_out = nullptr) {
    LoadedCheckpoint c = load_checkpoint(path);
    if (c.header.value("section", "") != "backbone")
        throw DataError("checkpoint '" + path + "': section '" +
                        c.header.value("section", "?") + "' is not a backbone");
    BackboneSpec s;
    s.kind = backbone_kind_from(c.header.at("kind").get<std::string>());
    s.lookback = c.header.at("lookback").get<std::size_t>();
    s.horizon = c.header.at("horizon").get<std::size_t>();
    s.channels = c.header.at("channels").get<std::size_t>();
    s.kernel = c.header.value("kernel", std::size_t{25});
    s.hidden = c.header.value("hidden", std::size_t{64});
    s.dropout = c.header.value("dropout", 0.1);
    auto backbone = make_backbone(s);
    std::vector<ParamRef> params;
    backbone->collect_params(params);
    for (auto& p : params) {
        const TensorF& t = c.tensor(p.name, path);
        if (t.shape != p.value->shape)
            throw DataError("checkpoint '" + path + "': tensor '" + p.name + "' has shape " +
                            shape_str(t.shape) + ", expected " + shape_str(p.value->shape));
        *p.value = t;
    }
    if (seed_out) *seed_out = c.header.value("seed", 0ULL);
    return backbone;
}

}  // namespace latentcast
