#include "noboxlab/models/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <set>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/fsutil.hpp"
#include "noboxlab/core/hash.hpp"
#include "noboxlab/core/version.hpp"

namespace noboxlab {

namespace {

constexpr char kMagic[4] = {'N', 'B', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

void append_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

template <typename T>
void append_pod(std::string& out, T v) {
    append_bytes(out, &v, sizeof v);
}

template <typename T>
T read_pod(const std::string& buf, std::size_t& off, const std::string& path) {
    if (off + sizeof(T) > buf.size())
        throw CheckpointIntegrityError(path + ": truncated checkpoint");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof v);
    off += sizeof v;
    return v;
}

std::string serialize_params(const std::vector<ParamView>& params) {
    std::string blob;
    append_bytes(blob, kMagic, 4);
    append_pod<std::uint32_t>(blob, kFormatVersion);
    append_pod<std::uint64_t>(blob, params.size());
    for (const ParamView& p : params) {
        append_pod<std::uint32_t>(blob, static_cast<std::uint32_t>(p.name.size()));
        append_bytes(blob, p.name.data(), p.name.size());
        // Parameters are stored flat; the owning layer knows its own geometry.
        append_pod<std::uint64_t>(blob, p.n);
        append_bytes(blob, p.w, p.n * sizeof(double));
    }
    return blob;
}

}

std::string write_checkpoint(const std::string& path,
                             const std::vector<ParamView>& params,
                             const std::string& kind, nlohmann::json metadata) {
    std::string blob = serialize_params(params);
    std::string digest = std::string(kHashAlgorithm) + ":" +
                         fnv1a64_hex(blob.data(), blob.size());
    metadata["kind"] = kind;
    metadata["digest"] = digest;
    metadata["tool_version"] = kToolVersion;
    write_file_atomic(path, blob);
    write_file_atomic(path + ".json", metadata.dump(2) + "\n");
    return digest;
}

LoadedCheckpoint read_checkpoint(const std::string& path,
                                 const std::string& expect_kind) {
    if (!std::filesystem::exists(path))
        throw CheckpointNotFoundError(path + ": no such checkpoint");
    if (!std::filesystem::exists(path + ".json"))
        throw CheckpointNotFoundError(path + ".json: checkpoint sidecar missing");
    std::string blob = read_file(path);
    std::string sidecar = read_file(path + ".json");

    LoadedCheckpoint ck;
    try {
        ck.metadata = nlohmann::json::parse(sidecar);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointIntegrityError(path + ".json: unparseable sidecar: " + e.what());
    }
    if (!ck.metadata.contains("digest") || !ck.metadata.contains("kind"))
        throw CheckpointIntegrityError(path + ".json: sidecar lacks digest or kind");
    ck.digest = ck.metadata["digest"].get<std::string>();
    ck.kind = ck.metadata["kind"].get<std::string>();

    std::string actual = std::string(kHashAlgorithm) + ":" +
                         fnv1a64_hex(blob.data(), blob.size());
    if (actual != ck.digest)
        throw CheckpointIntegrityError(path + ": digest mismatch, file has " + actual +
                                       ", sidecar declares " + ck.digest);
    if (!expect_kind.empty() && ck.kind != expect_kind)
        throw CheckpointSpecError(path + ": checkpoint kind '" + ck.kind +
                                  "', expected '" + expect_kind + "'");

    std::size_t off = 0;
    if (blob.size() < 4 || std::memcmp(blob.data(), kMagic, 4) != 0)
        throw CheckpointIntegrityError(path + ": bad magic");
    off = 4;
    std::uint32_t version = read_pod<std::uint32_t>(blob, off, path);
    if (version != kFormatVersion)
        throw CheckpointSpecError(path + ": format version " + std::to_string(version) +
                                  ", expected " + std::to_string(kFormatVersion));
    std::uint64_t count = read_pod<std::uint64_t>(blob, off, path);
    for (std::uint64_t t = 0; t < count; ++t) {
        std::uint32_t name_len = read_pod<std::uint32_t>(blob, off, path);
        if (off + name_len > blob.size())
            throw CheckpointIntegrityError(path + ": truncated tensor name");
        std::string name(blob.data() + off, name_len);
        off += name_len;
        std::uint64_t n = read_pod<std::uint64_t>(blob, off, path);
        if (off + n * sizeof(double) > blob.size())
            throw CheckpointIntegrityError(path + ": truncated tensor data for '" +
                                           name + "'");
        Tensor tensor({static_cast<std::size_t>(n)});
        std::memcpy(tensor.data(), blob.data() + off, n * sizeof(double));
        off += n * sizeof(double);
        if (!ck.tensors.emplace(std::move(name), std::move(tensor)).second)
            throw CheckpointIntegrityError(path + ": duplicate tensor name");
    }
    if (off != blob.size())
        throw CheckpointIntegrityError(path + ": trailing bytes after tensors");
    return ck;
}

void restore_params(const LoadedCheckpoint& ck,
                    const std::vector<ParamView>& params) {
    std::set<std::string> used;
    for (const ParamView& p : params) {
        auto it = ck.tensors.find(p.name);
        if (it == ck.tensors.end())
            throw CheckpointSpecError("checkpoint lacks tensor '" + p.name + "'");
        if (it->second.size() != p.n)
            throw CheckpointSpecError("tensor '" + p.name + "' has " +
                                      std::to_string(it->second.size()) +
                                      " values, model expects " + std::to_string(p.n));
        std::copy(it->second.data(), it->second.data() + p.n, p.w);
        used.insert(p.name);
    }
    for (const auto& [name, tensor] : ck.tensors)
        if (!used.count(name))
            throw CheckpointSpecError("checkpoint tensor '" + name +
                                      "' has no matching model parameter");
}

std::string params_digest(const std::vector<ParamView>& params) {
    std::string blob = serialize_params(params);
    return std::string(kHashAlgorithm) + ":" + fnv1a64_hex(blob.data(), blob.size());
}

}
