#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/common.hpp"
#include "sdvc/tensor.hpp"

namespace sdvc {

// Single-archive checkpoint: a JSON meta block (embedding the full config and
// its hash) followed by named double tensors. Loading under a different
// config hash is refused.
inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'V', 'C',
                                             'K', 'P', 'T', '1'};

struct Checkpoint {
    nlohmann::json meta;
    std::map<std::string, Mat> tensors;
};

namespace detail {

inline void put_u32_bin(std::ofstream& out, std::uint32_t v) {
    char buf[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                   char((v >> 24) & 0xff)};
    out.write(buf, 4);
}

inline std::uint32_t get_u32_bin(std::ifstream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    return std::uint32_t(buf[0]) | std::uint32_t(buf[1]) << 8 |
           std::uint32_t(buf[2]) << 16 | std::uint32_t(buf[3]) << 24;
}

}  // namespace detail

inline void save_checkpoint(
    const std::filesystem::path& path, const nlohmann::json& meta,
    const std::vector<std::pair<std::string, const Mat*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, 8);
    const std::string meta_str = meta.dump();
    detail::put_u32_bin(out, static_cast<std::uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    detail::put_u32_bin(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, mat] : tensors) {
        detail::put_u32_bin(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32_bin(out, static_cast<std::uint32_t>(mat->rows));
        detail::put_u32_bin(out, static_cast<std::uint32_t>(mat->cols));
        out.write(reinterpret_cast<const char*>(mat->d.data()),
                  static_cast<std::streamsize>(mat->d.size() * sizeof(double)));
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw ValidationError("not a checkpoint file: " + path.string());
    Checkpoint ckpt;
    const auto meta_len = detail::get_u32_bin(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), meta_len);
    ckpt.meta = nlohmann::json::parse(meta_str);
    const auto n = detail::get_u32_bin(in);
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto name_len = detail::get_u32_bin(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = static_cast<int>(detail::get_u32_bin(in));
        const auto cols = static_cast<int>(detail::get_u32_bin(in));
        Mat m(rows, cols);
        in.read(reinterpret_cast<char*>(m.d.data()),
                static_cast<std::streamsize>(m.d.size() * sizeof(double)));
        if (!in) throw ValidationError("truncated checkpoint: " + path.string());
        ckpt.tensors.emplace(std::move(name), std::move(m));
    }
    return ckpt;
}

inline void require_config_hash(const Checkpoint& ckpt,
                                const std::string& expected_hash) {
    const std::string stored = ckpt.meta.value("config_hash", "");
    if (stored != expected_hash)
        throw ValidationError("checkpoint config hash mismatch: checkpoint was "
                              "built under " +
                              stored + ", requested config hashes to " +
                              expected_hash);
}

// Copies stored tensors into live model tensors by name; shapes must match.
inline void apply_tensors(
    const Checkpoint& ckpt,
    const std::vector<std::pair<std::string, Mat*>>& targets) {
    for (const auto& [name, dst] : targets) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw ValidationError("checkpoint missing tensor: " + name);
        if (!dst->same_shape(it->second))
            throw ValidationError("checkpoint tensor shape mismatch: " + name);
        dst->d = it->second.d;
    }
}

}  // namespace sdvc
