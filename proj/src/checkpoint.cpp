#include "spikeir/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace spikeir {

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'P', 'I', 'R'};

std::uint64_t fnv1a(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(is);
}

} // namespace

void save_checkpoint(const ModelGraph& g, const std::string& path, const std::string& config_echo) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(path + ": cannot open for writing");
    os.write(kMagic, 4);
    write_pod(os, kCheckpointVersion);
    write_pod(os, static_cast<std::uint32_t>(g.params.size()));
    for (const auto& p : g.params) {
        write_pod(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        for (int d : p.tensor.shape()) write_pod(os, static_cast<std::uint32_t>(d));
    }
    write_pod(os, static_cast<std::uint32_t>(config_echo.size()));
    os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));

    std::uint64_t checksum = 14695981039346656037ull;
    for (const auto& p : g.params) {
        const auto& v = p.tensor.values();
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
        const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
        for (std::size_t i = 0; i < v.size() * sizeof(float); ++i) {
            checksum ^= bytes[i];
            checksum *= 1099511628211ull;
        }
    }
    write_pod(os, checksum);
    if (!os) throw Error(path + ": write failed");
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError(path + ": cannot open");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw CkptMagicError(path + ": bad magic");
    std::uint32_t version = 0;
    if (!read_pod(is, version)) throw CheckpointError(path + ": truncated header");
    if (version != kCheckpointVersion)
        throw CkptVersionError(path + ": unsupported version " + std::to_string(version));
    std::uint32_t n_params = 0;
    if (!read_pod(is, n_params)) throw CheckpointError(path + ": truncated header");

    CheckpointData data;
    std::uint64_t total = 0;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::uint32_t len = 0;
        if (!read_pod(is, len)) throw CheckpointError(path + ": truncated manifest");
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        Shape shape{};
        for (int d = 0; d < 4; ++d) {
            std::uint32_t v = 0;
            if (!read_pod(is, v)) throw CheckpointError(path + ": truncated manifest");
            shape[static_cast<std::size_t>(d)] = static_cast<int>(v);
        }
        total += static_cast<std::uint64_t>(shape_numel(shape));
        data.manifest.push_back({std::move(name), shape});
    }
    std::uint32_t echo_len = 0;
    if (!read_pod(is, echo_len)) throw CheckpointError(path + ": truncated header");
    data.config_echo.resize(echo_len);
    is.read(data.config_echo.data(), static_cast<std::streamsize>(echo_len));

    data.payload.resize(total);
    is.read(reinterpret_cast<char*>(data.payload.data()), static_cast<std::streamsize>(total * sizeof(float)));
    if (static_cast<std::uint64_t>(is.gcount()) != total * sizeof(float))
        throw CheckpointError(path + ": truncated payload");
    std::uint64_t stored = 0;
    if (!read_pod(is, stored)) throw CheckpointError(path + ": missing checksum");
    if (fnv1a(data.payload.data(), data.payload.size() * sizeof(float)) != stored)
        throw CkptChecksumError(path + ": payload checksum mismatch");
    return data;
}

void load_checkpoint(ModelGraph& g, const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    if (data.manifest.size() != g.params.size())
        throw CkptManifestError(path + ": manifest has " + std::to_string(data.manifest.size()) +
                                " tensors, graph expects " + std::to_string(g.params.size()));
    std::size_t offset = 0;
    for (std::size_t i = 0; i < g.params.size(); ++i) {
        const auto& entry = data.manifest[i];
        Param& p = g.params[i];
        if (entry.name != p.name || !(entry.shape == p.tensor.shape()))
            throw CkptManifestError(path + ": tensor '" + entry.name + "' " + shape_str(entry.shape) +
                                    " does not match graph '" + p.name + "' " + shape_str(p.tensor.shape()));
        std::copy(data.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                  data.payload.begin() + static_cast<std::ptrdiff_t>(offset + p.tensor.values().size()),
                  p.tensor.values().begin());
        offset += p.tensor.values().size();
    }
}

} // namespace spikeir
