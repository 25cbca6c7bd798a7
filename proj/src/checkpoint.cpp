// SPDX-License-Identifier: Apache-2.0
#include "mgail/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mgail {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos, const char* what) {
    if (pos + sizeof(T) > in.size()) throw CheckpointError(std::string("checkpoint truncated in ") + what);
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
    const ParamList params = ck.model.params();
    nlohmann::json arrays = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& p : params) {
        arrays.push_back({{"name", p.name},
                          {"shape", {p.tensor.rows(), p.tensor.cols()}},
                          {"offset", offset},
                          {"count", p.tensor.size()}});
        offset += p.tensor.size();
    }
    const auto& d = ck.model.dims;
    nlohmann::json header{{"version", kCheckpointVersion},
                          {"dims", {{"M", d.actions}, {"d_o", d.obs_dim}, {"d_s", d.obs_dim}, {"d_z", d.latent_dim},
                                    {"hidden", d.hidden}, {"context_hidden", d.context_hidden}}},
                          {"variant", to_string(ck.model.variant)},
                          {"ablations", ck.ablations.tag()},
                          {"seed", ck.seed},
                          {"max_horizon", ck.max_horizon},
                          {"config", ck.config},
                          {"arrays", arrays}};
    const std::string h = header.dump();
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, h.size());
    out += h;
    for (const auto& p : params) {
        auto v = p.tensor.value();
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof(kCheckpointMagic) || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)))
        throw CheckpointError("not a checkpoint file (bad magic)");
    std::size_t pos = sizeof(kCheckpointMagic);
    const auto version = get<std::uint32_t>(bytes, pos, "version");
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto hlen = get<std::uint64_t>(bytes, pos, "header length");
    if (pos + hlen > bytes.size()) throw CheckpointError("checkpoint truncated in header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    pos += hlen;

    Checkpoint ck;
    try {
        const auto& dj = header.at("dims");
        ModelDims dims{dj.at("M").get<std::size_t>(), dj.at("d_o").get<std::size_t>(),
                       dj.at("d_z").get<std::size_t>(), dj.at("hidden").get<std::size_t>(),
                       dj.at("context_hidden").get<std::size_t>()};
        if (dj.at("d_s").get<std::size_t>() != dims.obs_dim) throw CheckpointError("checkpoint: d_s must equal d_o");
        Rng scratch(0);
        ck.model = ModelBundle::make(parse_variant(header.at("variant").get<std::string>()), dims, scratch);
        ck.ablations = Ablations::parse(header.at("ablations").get<std::string>());
        ck.seed = header.at("seed").get<std::uint64_t>();
        ck.max_horizon = header.at("max_horizon").get<std::size_t>();
        ck.config = header.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }

    const ParamList params = ck.model.params();
    const auto& arrays = header.at("arrays");
    if (arrays.size() != params.size())
        throw CheckpointError("checkpoint: expected " + std::to_string(params.size()) + " arrays, header lists " +
                              std::to_string(arrays.size()));
    const std::size_t data_begin = pos;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& a = arrays[i];
        const auto& p = params[i];
        const auto name = a.at("name").get<std::string>();
        if (name != p.name) throw CheckpointError("checkpoint: array '" + name + "' where '" + p.name + "' expected");
        const auto shape = a.at("shape").get<std::vector<std::size_t>>();
        const auto count = a.at("count").get<std::size_t>();
        const auto offset = a.at("offset").get<std::size_t>();
        if (shape.size() != 2 || shape[0] != p.tensor.rows() || shape[1] != p.tensor.cols() ||
            count != p.tensor.size())
            throw CheckpointError("checkpoint: array '" + name + "' shape/length does not match declared dims (" +
                                  ad::shape_str(p.tensor.shape()) + ")");
        const std::size_t at = data_begin + offset * sizeof(double);
        if (at + count * sizeof(double) > bytes.size())
            throw CheckpointError("checkpoint: array '" + name + "' truncated");
        Tensor target = p.tensor;
        auto dst = target.mutable_value();
        std::memcpy(dst.data(), bytes.data() + at, count * sizeof(double));
        pos = std::max(pos, at + count * sizeof(double));
    }
    if (pos != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after last array");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + path.string());
    const std::string bytes = serialize_checkpoint(ck);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace mgail
