#pragma once

// Binary checkpoint: "SGMF" magic, format version, net identity, then the
// ordered named parameter tensors (little-endian payloads), then step
// count and a digest of the training config. save -> load is a bitwise
// identity on parameters; shape or dtype mismatches are rejected.

#include "sgm/cells.hpp"
#include "sgm/model.hpp"
#include "sgm/nn.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgm {

struct CheckpointMeta {
    CellKind kind = CellKind::Sgm;
    Mode mode = Mode::bidirectional;
    int dtype = 0;  // 0 = f32, 1 = f64
    std::uint64_t step_count = 0;
    std::uint64_t config_digest = 0;
};

struct CheckpointEntry {
    std::string name;
    int dtype;
    Shape shape;
};

struct CheckpointInfo {
    CheckpointMeta meta;
    std::vector<CheckpointEntry> entries;
};

template <class T>
constexpr int dtype_code() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? 0 : 1;
}

inline std::uint64_t fnv1a_digest(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

namespace detail {

template <class V>
void write_le(std::ofstream& out, V value) {
    static_assert(std::is_trivially_copyable_v<V>);
    unsigned char bytes[sizeof(V)];
    std::memcpy(bytes, &value, sizeof(V));
    if constexpr (sizeof(V) > 1)
        if (std::endian::native == std::endian::big)
            std::reverse(bytes, bytes + sizeof(V));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(V));
}

template <class V>
V read_le(std::ifstream& in) {
    unsigned char bytes[sizeof(V)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(V));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    if constexpr (sizeof(V) > 1)
        if (std::endian::native == std::endian::big)
            std::reverse(bytes, bytes + sizeof(V));
    V value;
    std::memcpy(&value, bytes, sizeof(V));
    return value;
}

inline void write_string(std::ofstream& out, const std::string& s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& in) {
    auto n = read_le<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, ParamRegistry<T>& params,
                     const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("checkpoint: cannot write " + path.string());
    out.write("SGMF", 4);
    detail::write_le<std::uint32_t>(out, detail::kCheckpointVersion);
    detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(meta.kind));
    detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(meta.mode));
    detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_code<T>()));
    detail::write_le<std::uint32_t>(
        out, static_cast<std::uint32_t>(params.entries().size()));
    for (const auto& [name, tensor] : params.entries()) {
        detail::write_string(out, name);
        detail::write_le<std::uint8_t>(out,
                                       static_cast<std::uint8_t>(dtype_code<T>()));
        detail::write_le<std::uint32_t>(
            out, static_cast<std::uint32_t>(tensor->shape().size()));
        for (auto e : tensor->shape()) detail::write_le<std::int64_t>(out, e);
        for (std::int64_t i = 0; i < tensor->numel(); ++i)
            detail::write_le<T>(out, tensor->data()[i]);
    }
    detail::write_le<std::uint64_t>(out, meta.step_count);
    detail::write_le<std::uint64_t>(out, meta.config_digest);
    if (!out)
        throw std::runtime_error("checkpoint: write failed for " + path.string());
}

namespace detail {

inline CheckpointMeta read_header(std::ifstream& in,
                                  const std::filesystem::path& path,
                                  std::uint32_t& count) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "SGMF")
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version));
    CheckpointMeta meta;
    meta.kind = static_cast<CellKind>(read_le<std::uint8_t>(in));
    meta.mode = static_cast<Mode>(read_le<std::uint8_t>(in));
    meta.dtype = read_le<std::uint8_t>(in);
    count = read_le<std::uint32_t>(in);
    return meta;
}

}  // namespace detail

template <class T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                               ParamRegistry<T>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::uint32_t count = 0;
    CheckpointMeta meta = detail::read_header(in, path, count);
    if (meta.dtype != dtype_code<T>())
        throw std::runtime_error("checkpoint: dtype mismatch in " + path.string());
    if (count != params.entries().size())
        throw std::runtime_error(
            "checkpoint: parameter count mismatch, file has " +
            std::to_string(count) + ", net has " +
            std::to_string(params.entries().size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = detail::read_string(in);
        int dtype = detail::read_le<std::uint8_t>(in);
        auto rank = detail::read_le<std::uint32_t>(in);
        Shape shape(rank);
        for (auto& e : shape) e = detail::read_le<std::int64_t>(in);
        Tensor<T>* dst = params.find(name);
        if (!dst)
            throw std::runtime_error("checkpoint: net has no parameter '" + name +
                                     "'");
        if (dtype != dtype_code<T>())
            throw std::runtime_error("checkpoint: dtype mismatch for '" + name +
                                     "'");
        if (shape != dst->shape())
            throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                                     "': file " + shape_str(shape) + ", net " +
                                     shape_str(dst->shape()));
        for (std::int64_t j = 0; j < dst->numel(); ++j)
            dst->data()[j] = detail::read_le<T>(in);
    }
    meta.step_count = detail::read_le<std::uint64_t>(in);
    meta.config_digest = detail::read_le<std::uint64_t>(in);
    return meta;
}

inline CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::uint32_t count = 0;
    CheckpointInfo info;
    info.meta = detail::read_header(in, path, count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry entry;
        entry.name = detail::read_string(in);
        entry.dtype = detail::read_le<std::uint8_t>(in);
        auto rank = detail::read_le<std::uint32_t>(in);
        entry.shape.resize(rank);
        std::int64_t numel = 1;
        for (auto& e : entry.shape) {
            e = detail::read_le<std::int64_t>(in);
            numel *= e;
        }
        const std::size_t width = entry.dtype == 0 ? 4 : 8;
        in.seekg(static_cast<std::streamoff>(numel * width), std::ios::cur);
        if (!in) throw std::runtime_error("checkpoint: truncated payload");
        info.entries.push_back(std::move(entry));
    }
    info.meta.step_count = detail::read_le<std::uint64_t>(in);
    info.meta.config_digest = detail::read_le<std::uint64_t>(in);
    return info;
}

}  // namespace sgm
