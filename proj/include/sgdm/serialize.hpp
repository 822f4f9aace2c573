#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgdm/autodiff.hpp"
#include "sgdm/common.hpp"
#include "sgdm/tensor.hpp"

// On-disk formats:
//  * array files: magic "SGDM", u32 rank, u32 dims..., raw little-endian
//    float32 payload (16-byte header at rank 2)
//  * checkpoints: magic "SGDC", u32 version, u64 header length, JSON header
//    (meta + array directory in name order), float32 payloads

namespace sgdm {

using json = nlohmann::json;

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) fail_io("write failed: " + path);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) fail_io("cannot open: " + path);
    std::vector<unsigned char> bytes(size_t(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) fail_io("read failed: " + path);
    return bytes;
}

namespace detail {
inline void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::vector<unsigned char>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
inline uint32_t get_u32(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
inline uint64_t get_u64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}
inline void put_f32(std::vector<unsigned char>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}
inline float get_f32(const unsigned char* p) {
    uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}
}  // namespace detail

inline void save_array(const std::string& path, const Tensor& t) {
    std::vector<unsigned char> out;
    out.insert(out.end(), {'S', 'G', 'D', 'M'});
    detail::put_u32(out, uint32_t(t.rank()));
    for (auto d : t.shape) detail::put_u32(out, uint32_t(d));
    for (double x : t.v) detail::put_f32(out, float(x));
    write_file_bytes(path, out);
}

inline Tensor load_array(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "SGDM", 4) != 0)
        fail_io("not an SGDM array file: " + path);
    uint32_t rank = detail::get_u32(bytes.data() + 4);
    size_t off = 8;
    if (bytes.size() < off + 4 * rank) fail_io("truncated array header: " + path);
    std::vector<int64_t> shape;
    for (uint32_t i = 0; i < rank; ++i, off += 4) shape.push_back(detail::get_u32(bytes.data() + off));
    Tensor t(shape);
    if (bytes.size() != off + 4 * size_t(t.numel())) fail_io("truncated array payload: " + path);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.v[size_t(i)] = double(detail::get_f32(bytes.data() + off + 4 * size_t(i)));
    return t;
}

struct Checkpoint {
    json meta;
    std::map<std::string, Tensor> arrays;  // name order fixes the byte layout
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    json dir = json::array();
    for (const auto& [name, t] : ck.arrays) dir.push_back({{"name", name}, {"shape", t.shape}});
    json header = {{"meta", ck.meta}, {"arrays", dir}};
    std::string hs = header.dump();

    std::vector<unsigned char> out;
    out.insert(out.end(), {'S', 'G', 'D', 'C'});
    detail::put_u32(out, 1);
    detail::put_u64(out, hs.size());
    out.insert(out.end(), hs.begin(), hs.end());
    for (const auto& [name, t] : ck.arrays)
        for (double x : t.v) detail::put_f32(out, float(x));
    write_file_bytes(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "SGDC", 4) != 0)
        fail_io("not an SGDM checkpoint: " + path);
    uint64_t hlen = detail::get_u64(bytes.data() + 8);
    if (bytes.size() < 16 + hlen) fail_io("truncated checkpoint header: " + path);
    json header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + std::ptrdiff_t(hlen));
    Checkpoint ck;
    ck.meta = header.at("meta");
    size_t off = 16 + size_t(hlen);
    for (const auto& entry : header.at("arrays")) {
        std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        Tensor t(shape);
        if (bytes.size() < off + 4 * size_t(t.numel())) fail_io("truncated checkpoint payload: " + path);
        for (int64_t i = 0; i < t.numel(); ++i)
            t.v[size_t(i)] = double(detail::get_f32(bytes.data() + off + 4 * size_t(i)));
        off += 4 * size_t(t.numel());
        ck.arrays.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
    return ck;
}

inline Checkpoint store_to_checkpoint(const ad::ParamStore& store, json meta = json::object()) {
    Checkpoint ck;
    ck.meta = std::move(meta);
    for (const auto& [name, p] : store.params) ck.arrays.emplace(name, p.value);
    return ck;
}

inline void checkpoint_to_store(const Checkpoint& ck, ad::ParamStore& store) {
    for (const auto& [name, t] : ck.arrays) store.add(name, t);
}

// canonical config hash: FNV-1a over the sorted-key JSON dump
inline uint64_t config_hash(const json& cfg) { return fnv1a64(cfg.dump()); }

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace sgdm
