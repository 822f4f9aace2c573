#pragma once

#include <cstring>
#include <string>
#include <vector>

#include <zlib.h>

#include "sgdm/common.hpp"
#include "sgdm/serialize.hpp"
#include "sgdm/tensor.hpp"

// Minimal PNG codec over zlib: 8-bit gray/RGB/ +alpha, non-interlaced.
// Covers everything the pipeline writes plus typical externally-supplied
// stimulus images.

namespace sgdm::png {

namespace detail {

inline void put_be32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}
inline uint32_t get_be32(const unsigned char* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

inline void write_chunk(std::vector<unsigned char>& out, const char type[4],
                        const std::vector<unsigned char>& data) {
    put_be32(out, uint32_t(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = uint32_t(::crc32(0, out.data() + start, uInt(out.size() - start)));
    put_be32(out, crc);
}

inline std::vector<unsigned char> zlib_deflate(const std::vector<unsigned char>& raw) {
    uLongf bound = ::compressBound(uLong(raw.size()));
    std::vector<unsigned char> comp(bound);
    if (::compress2(comp.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        fail_io("png: deflate failed");
    comp.resize(bound);
    return comp;
}

inline std::vector<unsigned char> zlib_inflate(const std::vector<unsigned char>& comp,
                                               size_t expected) {
    std::vector<unsigned char> raw(expected);
    uLongf n = uLongf(expected);
    if (::uncompress(raw.data(), &n, comp.data(), uLong(comp.size())) != Z_OK || n != expected)
        fail_io("png: inflate failed");
    return raw;
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

// image: [3,H,W] or [1,H,W] doubles in [0,1]; quantized to 8-bit
inline void write_png(const std::string& path, const Tensor& image) {
    require(image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3),
            "write_png: expected [1|3,H,W] tensor");
    int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);

    std::vector<unsigned char> raw;
    raw.reserve(size_t(H * (1 + W * C)));
    for (int64_t y = 0; y < H; ++y) {
        raw.push_back(0);  // filter: None
        for (int64_t x = 0; x < W; ++x)
            for (int64_t c = 0; c < C; ++c) {
                double v = image.v[size_t((c * H + y) * W + x)];
                v = std::min(1.0, std::max(0.0, v));
                raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
    }

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<unsigned char> ihdr;
    detail::put_be32(ihdr, uint32_t(W));
    detail::put_be32(ihdr, uint32_t(H));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(C == 3 ? 2 : 0);                   // color type
    ihdr.insert(ihdr.end(), {0, 0, 0});               // compression/filter/interlace
    detail::write_chunk(out, "IHDR", ihdr);
    detail::write_chunk(out, "IDAT", detail::zlib_deflate(raw));
    detail::write_chunk(out, "IEND", {});
    write_file_bytes(path, out);
}

// always returns [3,H,W] in [0,1]; gray is replicated, alpha dropped
inline Tensor read_png(const std::string& path) {
    auto bytes = read_file_bytes(path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        fail_io("not a PNG file: " + path);

    uint32_t W = 0, H = 0;
    int color_type = -1, bit_depth = 0;
    std::vector<unsigned char> idat;
    size_t off = 8;
    while (off + 8 <= bytes.size()) {
        uint32_t len = detail::get_be32(&bytes[off]);
        std::string type(reinterpret_cast<const char*>(&bytes[off + 4]), 4);
        if (off + 12 + len > bytes.size()) fail_io("png: truncated chunk in " + path);
        const unsigned char* data = &bytes[off + 8];
        if (type == "IHDR") {
            W = detail::get_be32(data);
            H = detail::get_be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) fail_io("png: interlaced images unsupported: " + path);
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        off += 12 + len;
    }
    if (W == 0 || H == 0) fail_io("png: missing IHDR in " + path);
    if (bit_depth != 8) fail_io("png: only 8-bit depth supported: " + path);
    int ch;
    switch (color_type) {
        case 0: ch = 1; break;
        case 2: ch = 3; break;
        case 4: ch = 2; break;
        case 6: ch = 4; break;
        default: fail_io("png: unsupported color type in " + path);
    }

    size_t stride = size_t(W) * size_t(ch);
    auto raw = detail::zlib_inflate(idat, size_t(H) * (stride + 1));

    // undo per-row filters in place (result stored without filter bytes)
    std::vector<unsigned char> img(size_t(H) * stride);
    for (uint32_t y = 0; y < H; ++y) {
        unsigned char filter = raw[y * (stride + 1)];
        const unsigned char* src = &raw[y * (stride + 1) + 1];
        unsigned char* dst = &img[y * stride];
        const unsigned char* up = y > 0 ? &img[(y - 1) * stride] : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= size_t(ch) ? dst[x - size_t(ch)] : 0;
            int b = up ? up[x] : 0;
            int c = (up && x >= size_t(ch)) ? up[x - size_t(ch)] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: fail_io("png: unknown filter in " + path);
            }
            dst[x] = static_cast<unsigned char>(v & 0xff);
        }
    }

    Tensor out({3, int64_t(H), int64_t(W)});
    for (uint32_t y = 0; y < H; ++y)
        for (uint32_t x = 0; x < W; ++x) {
            const unsigned char* px = &img[y * stride + x * size_t(ch)];
            double r, g, b;
            if (ch <= 2) r = g = b = px[0] / 255.0;
            else { r = px[0] / 255.0; g = px[1] / 255.0; b = px[2] / 255.0; }
            out.v[size_t((0 * H + y) * W + x)] = r;
            out.v[size_t((1 * H + y) * W + x)] = g;
            out.v[size_t((2 * H + y) * W + x)] = b;
        }
    return out;
}

}  // namespace sgdm::png
