#include "distforge/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts are unsupported");

namespace distforge {

namespace {
constexpr char kMagic[] = "DFCKPT1\n";
constexpr size_t kMagicLen = 8;

void put_u64(std::string& out, uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

uint64_t get_u64(const std::string& data, size_t off) {
    uint64_t v;
    std::memcpy(&v, data.data() + off, 8);
    return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamSet<float>& params) {
    nlohmann::json header;
    header["config"] = nlohmann::json::parse(model_config_to_json(params.config));
    header["dtype"] = "f32";
    nlohmann::json tensors = nlohmann::json::object();
    uint64_t offset = 0;
    for (const auto& t : params.tensors) {
        tensors[t.name] = {{"shape", t.shape}, {"offset", offset}};
        offset += uint64_t(t.size()) * sizeof(float);
    }
    header["tensors"] = tensors;

    std::string out;
    const std::string htext = header.dump();
    out.reserve(kMagicLen + 8 + htext.size() + offset);
    out.append(kMagic, kMagicLen);
    put_u64(out, htext.size());
    out += htext;
    for (const auto& t : params.tensors)
        out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    write_file_atomic(path, out);
}

ParamSet<float> load_checkpoint(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() < kMagicLen + 8 || std::memcmp(data.data(), kMagic, kMagicLen) != 0)
        fail("format", "not a DFCKPT1 checkpoint: " + path);
    const uint64_t hlen = get_u64(data, kMagicLen);
    const size_t payload_base = kMagicLen + 8 + hlen;
    if (payload_base > data.size()) fail("format", "truncated checkpoint header: " + path);

    nlohmann::json header =
        nlohmann::json::parse(data.substr(kMagicLen + 8, hlen), nullptr, false);
    if (header.is_discarded()) fail("format", "unparseable checkpoint header: " + path);
    if (header.value("dtype", "") != "f32")
        fail("format", "unsupported checkpoint dtype: " + header.value("dtype", "?"));

    ModelConfig config = model_config_from_json(header.at("config").dump());
    ParamSet<float> params = zeros_like_config<float>(config);

    const auto& tensors = header.at("tensors");
    for (auto& t : params.tensors) {
        if (!tensors.contains(t.name)) fail("format", "checkpoint missing tensor " + t.name);
        const auto& entry = tensors.at(t.name);
        const std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        if (shape != t.shape)
            fail("format", "shape mismatch for tensor " + t.name + " in " + path);
        const uint64_t offset = entry.at("offset").get<uint64_t>();
        const size_t nbytes = size_t(t.size()) * sizeof(float);
        if (payload_base + offset + nbytes > data.size())
            fail("format", "truncated checkpoint payload at tensor " + t.name + ": " + path);
        std::memcpy(t.data.data(), data.data() + payload_base + offset, nbytes);
    }
    return params;
}

}  // namespace distforge
